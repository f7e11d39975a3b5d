#pragma once

// Differentiable primitives. Matrix kernels run through Eigen maps over the
// tensors' row-major buffers; everything else is a plain loop.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "herald/tensor.hpp"

namespace herald {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline ConstMatrixMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(data.data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}
inline MatrixMap as_matrix(std::vector<double>& data, std::size_t rows, std::size_t cols) {
  return MatrixMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatrixMap as_matrix(const Tensor& t) { return as_matrix(t.data(), t.rows(), t.cols()); }

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

inline std::string pair_shapes(const Tensor& a, const Tensor& b) {
  return shape_string(a.shape()) + " and " + shape_string(b.shape());
}

template <typename F, typename DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result(op, a.shape(), std::move(out), {a},
                     [a, df](std::span<const double> g, std::span<const double> y) {
                       if (!a.requires_grad()) return;
                       auto& ga = grad_buffer(a);
                       auto xv = a.data();
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * df(xv[i], y[i]);
                     });
}

enum class Binary { add, sub, mul };

inline Tensor binary(Binary kind, const char* op, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = !same && a.is_scalar();
  const bool b_scalar = !same && b.is_scalar();
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError(std::string(op) + ": shape mismatch " + pair_shapes(a, b));
  }
  const Tensor& big = a_scalar ? b : a;
  const std::size_t n = big.numel();
  auto xa = a.data();
  auto xb = b.data();
  auto ia = [&](std::size_t i) { return a_scalar ? xa[0] : xa[i]; };
  auto ib = [&](std::size_t i) { return b_scalar ? xb[0] : xb[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Binary::add: out[i] = ia(i) + ib(i); break;
      case Binary::sub: out[i] = ia(i) - ib(i); break;
      case Binary::mul: out[i] = ia(i) * ib(i); break;
    }
  }
  return make_result(
      op, big.shape(), std::move(out), {a, b},
      [a, b, kind, a_scalar, b_scalar](std::span<const double> g, std::span<const double>) {
        const std::size_t n = g.size();
        auto xa = a.data();
        auto xb = b.data();
        if (a.requires_grad()) {
          auto& ga = grad_buffer(a);
          for (std::size_t i = 0; i < n; ++i) {
            double d = g[i];
            if (kind == Binary::mul) d *= b_scalar ? xb[0] : xb[i];
            ga[a_scalar ? 0 : i] += d;
          }
        }
        if (b.requires_grad()) {
          auto& gb = grad_buffer(b);
          for (std::size_t i = 0; i < n; ++i) {
            double d = g[i];
            if (kind == Binary::sub) d = -d;
            if (kind == Binary::mul) d *= a_scalar ? xa[0] : xa[i];
            gb[b_scalar ? 0 : i] += d;
          }
        }
      });
}

}  // namespace detail

// ---------------------------------------------------------------- products

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " + detail::pair_shapes(a, b));
  }
  const std::size_t m = a.rows(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  if (a.cols() > 0) detail::as_matrix(out, m, n).noalias() = detail::as_matrix(a) * detail::as_matrix(b);
  return detail::make_result(
      "matmul", {m, n}, std::move(out), {a, b},
      [a, b, m, n](std::span<const double> g, std::span<const double>) {
        const auto G = detail::as_matrix(g, m, n);
        if (a.requires_grad()) {
          detail::as_matrix(detail::grad_buffer(a), a.rows(), a.cols()).noalias() +=
              G * detail::as_matrix(b).transpose();
        }
        if (b.requires_grad()) {
          detail::as_matrix(detail::grad_buffer(b), b.rows(), b.cols()).noalias() +=
              detail::as_matrix(a).transpose() * G;
        }
      });
}

// a a^T. Only one triangle is computed and the result is exactly symmetric.
inline Tensor gram(const Tensor& a) {
  detail::require_matrix(a, "gram");
  const std::size_t m = a.rows();
  detail::RowMatrix full = detail::RowMatrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  if (a.cols() > 0) full.selfadjointView<Eigen::Lower>().rankUpdate(detail::as_matrix(a));
  std::vector<double> out(m * m);
  detail::as_matrix(out, m, m) = full.selfadjointView<Eigen::Lower>();
  return detail::make_result("gram", {m, m}, std::move(out), {a},
                             [a, m](std::span<const double> g, std::span<const double>) {
                               if (!a.requires_grad()) return;
                               const auto G = detail::as_matrix(g, m, m);
                               const detail::RowMatrix sym = G + G.transpose();
                               detail::as_matrix(detail::grad_buffer(a), m, a.cols()).noalias() +=
                                   sym * detail::as_matrix(a);
                             });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  detail::as_matrix(out, n, m) = detail::as_matrix(a).transpose();
  return detail::make_result("transpose", {n, m}, std::move(out), {a},
                             [a, m, n](std::span<const double> g, std::span<const double>) {
                               if (!a.requires_grad()) return;
                               detail::as_matrix(detail::grad_buffer(a), m, n) +=
                                   detail::as_matrix(g, n, m).transpose();
                             });
}

// ------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(detail::Binary::add, "add", a, b);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(detail::Binary::sub, "sub", a, b);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(detail::Binary::mul, "mul", a, b);
}

inline Tensor neg(const Tensor& a) {
  return detail::unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary("exp", a, [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary("square", a, [](double x) { return x * x; },
                       [](double x, double) { return 2.0 * x; });
}

// Derivative at 0 is taken as 0 so that norms of vanishing differences stay finite.
inline Tensor sqrt(const Tensor& a) {
  return detail::unary("sqrt", a, [](double x) { return std::sqrt(x); },
                       [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Tensor pow(const Tensor& a, double p) {
  return detail::unary("pow", a, [p](double x) { return std::pow(x, p); },
                       [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary("scale", a, [c](double x) { return c * x; },
                       [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary("add_scalar", a, [c](double x) { return x + c; },
                       [](double, double) { return 1.0; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// max(a, lo); gradient is zero wherever the clamp is active.
inline Tensor clamp_min(const Tensor& a, double lo) {
  return detail::unary("clamp_min", a, [lo](double x) { return x > lo ? x : lo; },
                       [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// out[i, j] = a[i, j] * v[i]
inline Tensor scale_rows(const Tensor& a, const Tensor& v) {
  detail::require_matrix(a, "scale_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (v.numel() != m) {
    throw DimensionError("scale_rows: need " + std::to_string(m) + " factors, got shape " +
                         shape_string(v.shape()));
  }
  std::vector<double> out(m * n);
  auto x = a.data();
  auto s = v.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * s[i];
  return detail::make_result(
      "scale_rows", {m, n}, std::move(out), {a, v},
      [a, v, m, n](std::span<const double> g, std::span<const double>) {
        auto x = a.data();
        auto s = v.data();
        if (a.requires_grad()) {
          auto& ga = detail::grad_buffer(a);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * s[i];
        }
        if (v.requires_grad()) {
          auto& gv = detail::grad_buffer(v);
          for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * x[i * n + j];
            gv[i] += acc;
          }
        }
      });
}

// out[i, j] = a[i, j] * v[j]
inline Tensor scale_cols(const Tensor& a, const Tensor& v) {
  detail::require_matrix(a, "scale_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (v.numel() != n) {
    throw DimensionError("scale_cols: need " + std::to_string(n) + " factors, got shape " +
                         shape_string(v.shape()));
  }
  std::vector<double> out(m * n);
  auto x = a.data();
  auto s = v.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * s[j];
  return detail::make_result(
      "scale_cols", {m, n}, std::move(out), {a, v},
      [a, v, m, n](std::span<const double> g, std::span<const double>) {
        auto x = a.data();
        auto s = v.data();
        if (a.requires_grad()) {
          auto& ga = detail::grad_buffer(a);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * s[j];
        }
        if (v.requires_grad()) {
          auto& gv = detail::grad_buffer(v);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j] * x[i * n + j];
        }
      });
}

// Adds a length-n bias to every row of an m x n matrix.
inline Tensor add_row(const Tensor& a, const Tensor& bias) {
  detail::require_matrix(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " vs matrix " +
                         shape_string(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto s = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += s[j];
  return detail::make_result("add_row", {m, n}, std::move(out), {a, bias},
                             [a, bias, m, n](std::span<const double> g, std::span<const double>) {
                               if (a.requires_grad()) detail::accumulate(a, g);
                               if (bias.requires_grad()) {
                                 auto& gb = detail::grad_buffer(bias);
                                 for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                               }
                             });
}

// Row-wise softmax, stabilised by subtracting each row's maximum.
inline Tensor softmax_rows(const Tensor& a) {
  detail::require_matrix(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (n == 0) throw DomainError("softmax_rows over an empty row");
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return detail::make_result("softmax_rows", {m, n}, std::move(out), {a},
                             [a, m, n](std::span<const double> g, std::span<const double> y) {
                               if (!a.requires_grad()) return;
                               auto& ga = detail::grad_buffer(a);
                               for (std::size_t i = 0; i < m; ++i) {
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                                 for (std::size_t j = 0; j < n; ++j)
                                   ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                               }
                             });
}

// -------------------------------------------------------------- reductions

inline Tensor sum(const Tensor& a) {
  auto x = a.data();
  double total = 0.0;
  for (double v : x) total += v;
  return detail::make_result("sum", {}, {total}, {a},
                             [a](std::span<const double> g, std::span<const double>) {
                               if (!a.requires_grad()) return;
                               auto& ga = detail::grad_buffer(a);
                               for (auto& v : ga) v += g[0];
                             });
}

inline Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DomainError("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(a.numel());
  return scale(sum(a), inv);
}

// m x n -> m x 1, summing each row.
inline Tensor sum_rows(const Tensor& a) {
  detail::require_matrix(a, "sum_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (n == 0) throw DomainError("sum_rows over rows of length 0");
  std::vector<double> out(m, 0.0);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
  return detail::make_result("sum_rows", {m, 1}, std::move(out), {a},
                             [a, m, n](std::span<const double> g, std::span<const double>) {
                               if (!a.requires_grad()) return;
                               auto& ga = detail::grad_buffer(a);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
                             });
}

inline Tensor mean_rows(const Tensor& a) {
  detail::require_matrix(a, "mean_rows");
  if (a.cols() == 0) throw DomainError("mean_rows over rows of length 0");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.cols()));
}

// m x n -> 1 x n, summing each column.
inline Tensor sum_cols(const Tensor& a) {
  detail::require_matrix(a, "sum_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw DomainError("sum_cols over columns of length 0");
  std::vector<double> out(n, 0.0);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  return detail::make_result("sum_cols", {1, n}, std::move(out), {a},
                             [a, m, n](std::span<const double> g, std::span<const double>) {
                               if (!a.requires_grad()) return;
                               auto& ga = detail::grad_buffer(a);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j];
                             });
}

inline Tensor frobenius_norm(const Tensor& a) { return sqrt(sum(square(a))); }

// ------------------------------------------------------------------- losses

// Mean negative log-likelihood of labels[r] under softmax(logits[r]) over the given rows.
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels,
                            std::span<const std::size_t> rows) {
  detail::require_matrix(logits, "cross_entropy");
  if (rows.empty()) throw ContractError("cross_entropy over an empty row set");
  const std::size_t m = logits.rows(), c = logits.cols();
  if (labels.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(m) + " rows");
  }
  auto x = logits.data();
  std::vector<double> probs(rows.size() * c);
  double total = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    if (r >= m) throw ContractError("cross_entropy: row index out of range");
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw ContractError("cross_entropy: label out of range");
    const double* row = x.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[k * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[k * c + j] /= z;
    total -= row[static_cast<std::size_t>(y)] - mx - std::log(z);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<std::size_t> kept(rows.begin(), rows.end());
  std::vector<int> kept_labels(labels.begin(), labels.end());
  return detail::make_result(
      "cross_entropy", {}, {total * inv}, {logits},
      [logits, kept = std::move(kept), kept_labels = std::move(kept_labels),
       probs = std::move(probs), c, inv](std::span<const double> g, std::span<const double>) {
        if (!logits.requires_grad()) return;
        auto& gl = detail::grad_buffer(logits);
        for (std::size_t k = 0; k < kept.size(); ++k) {
          const std::size_t r = kept[k];
          for (std::size_t j = 0; j < c; ++j) {
            double d = probs[k * c + j];
            if (static_cast<int>(j) == kept_labels[r]) d -= 1.0;
            gl[r * c + j] += g[0] * inv * d;
          }
        }
      });
}

}  // namespace herald
