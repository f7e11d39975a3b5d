#pragma once

// Independent reference implementations used by the test suites. Nothing here
// calls into the library's kernels beyond reading tensor values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "herald/herald.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const herald::Tensor& t) {
  Dense d(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) d[i][j] = t.data()[i * t.cols() + j];
  return d;
}

inline herald::Tensor from_dense(const Dense& d) {
  const std::size_t m = d.size(), n = m ? d[0].size() : 0;
  std::vector<double> v;
  for (const auto& r : d) v.insert(v.end(), r.begin(), r.end());
  return herald::Tensor({m, n}, std::move(v));
}

inline Dense matmul(const Dense& a, const Dense& b) {
  const std::size_t m = a.size(), k = b.size(), n = k ? b[0].size() : 0;
  Dense c(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline Dense transpose(const Dense& a) {
  Dense t(a.empty() ? 0 : a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

// Written out term by term: N_ij = sum_e h_ie w_e h_je / (sqrt(d_i) delta_e sqrt(d_j)).
inline Dense propagation(const Dense& h, const std::vector<double>& w) {
  const std::size_t n = h.size(), m = n ? h[0].size() : 0;
  std::vector<double> d(n, 0.0), delta(m, 0.0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t e = 0; e < m; ++e) {
      d[v] += w[e] * h[v][e];
      delta[e] += h[v][e];
    }
  Dense out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t e = 0; e < m; ++e)
        out[i][j] += h[i][e] * w[e] * h[j][e] / (std::sqrt(d[i]) * delta[e] * std::sqrt(d[j]));
  return out;
}

inline Dense incidence(const herald::Hypergraph& g) {
  Dense h(g.num_nodes, std::vector<double>(g.num_edges(), 0.0));
  for (std::size_t e = 0; e < g.num_edges(); ++e)
    for (std::size_t v : g.hyperedges[e]) h[v][e] = 1.0;
  return h;
}

inline Dense softmax_rows(const Dense& a) {
  Dense out = a;
  for (auto& row : out) {
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& x : row) z += (x = std::exp(x - mx));
    for (double& x : row) x /= z;
  }
  return out;
}

// The whole adaptor written from the formulas with plain loops.
struct AdaptorReference {
  Dense soft, residual, blended;
};

inline AdaptorReference adaptor(const Dense& x, const herald::Hypergraph& g, const Dense& wv,
                                const Dense& we, const std::vector<double>& ws, double sigma, double a) {
  const std::size_t n = x.size(), m = g.num_edges(), h = wv[0].size();
  Dense xe(m, std::vector<double>(x[0].size(), 0.0));
  for (std::size_t e = 0; e < m; ++e) {
    for (std::size_t v : g.hyperedges[e])
      for (std::size_t k = 0; k < x[0].size(); ++k) xe[e][k] += x[v][k] / static_cast<double>(g.hyperedges[e].size());
  }
  const Dense te = matmul(xe, we);
  const Dense z = matmul(x, wv);
  Dense gamma(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < h; ++k) gamma[i][j] += z[i][k] * z[j][k];
  const Dense alpha = softmax_rows(gamma);
  const Dense xa = matmul(alpha, z);
  AdaptorReference r;
  r.soft.assign(n, std::vector<double>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = 0; e < m; ++e) {
      double d = 0.0;
      for (std::size_t k = 0; k < h; ++k) d += ws[k] * (xa[i][k] - te[e][k]) * (xa[i][k] - te[e][k]);
      r.soft[i][e] = std::exp(-std::max(d, 0.0) / (2.0 * sigma * sigma));
    }
  r.residual = propagation(r.soft, std::vector<double>(m, 1.0));
  const Dense base = propagation(incidence(g), g.edge_weights);
  r.blended = base;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r.blended[i][j] = (1.0 - a) * base[i][j] + a * r.residual[i][j];
  return r;
}

inline double max_abs_diff(const Dense& a, const Dense& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
  return worst;
}

inline double max_abs_diff(const herald::Tensor& a, const herald::Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

inline bool bit_equal(const herald::Tensor& a, const herald::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

// ------------------------------------------------------- finite differences

struct GradCheck {
  double worst = 0.0;  // max over entries of |analytic - numeric| / max(1, |numeric|)
  std::string where;
  bool ok(double tol = 1e-4) const { return worst <= tol; }
};

// `loss` must build a scalar from the current parameter values. Analytic
// gradients come from one taped evaluation; numeric ones from central
// differences with step `h` on every entry of every parameter.
inline GradCheck gradient_check(const std::vector<herald::Tensor>& params,
                                const std::function<herald::Tensor()>& loss, double h = 1e-5) {
  std::vector<herald::Tensor> ps = params;
  for (auto& p : ps) p.zero_grad();
  {
    herald::Tape tape;
    const herald::Tensor l = loss();
    tape.backward(l);
  }
  GradCheck out;
  herald::NoGrad guard;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto analytic = ps[k].grad_or_zeros();
    auto x = ps[k].mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double keep = x[i];
      x[i] = keep + h;
      const double up = loss().item();
      x[i] = keep - h;
      const double down = loss().item();
      x[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > out.worst) {
        out.worst = err;
        out.where = "param " + std::to_string(k) + " entry " + std::to_string(i) + ": analytic " +
                    std::to_string(analytic[i]) + " numeric " + std::to_string(numeric);
      }
    }
  }
  for (auto& p : ps) p.zero_grad();
  return out;
}

// Fixed random weighting so every output entry contributes to the scalar loss.
inline herald::Tensor random_weights(const herald::Shape& shape, herald::Rng& rng) {
  std::vector<double> w(herald::shape_numel(shape));
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return herald::Tensor(shape, std::move(w));
}

inline herald::Tensor random_matrix(std::size_t m, std::size_t n, herald::Rng& rng, double lo = -1.0,
                                    double hi = 1.0, bool param = false) {
  std::vector<double> w(m * n);
  for (auto& x : w) x = rng.uniform(lo, hi);
  return param ? herald::Tensor::parameter({m, n}, std::move(w)) : herald::Tensor({m, n}, std::move(w));
}

// Random hypergraph with every node covered.
inline herald::Hypergraph random_hypergraph(std::size_t n, std::size_t m, herald::Rng& rng,
                                            std::size_t max_size = 4) {
  herald::Hypergraph g;
  g.num_nodes = n;
  for (std::size_t e = 0; e < m; ++e) {
    const std::size_t size = 1 + rng.index(std::min(max_size, n));
    std::vector<std::size_t> members;
    while (members.size() < size) {
      const std::size_t v = rng.index(n);
      if (std::find(members.begin(), members.end(), v) == members.end()) members.push_back(v);
    }
    std::sort(members.begin(), members.end());
    g.hyperedges.push_back(members);
    g.edge_weights.push_back(rng.uniform(0.5, 2.0));
  }
  herald::patch_isolated_nodes(g);
  return g;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, herald::Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  rng.shuffle(p);
  return p;
}

// Relabels node v as perm[v].
inline herald::Hypergraph permute(const herald::Hypergraph& g, const std::vector<std::size_t>& perm) {
  herald::Hypergraph out = g;
  for (auto& e : out.hyperedges) {
    for (auto& v : e) v = perm[v];
    std::sort(e.begin(), e.end());
  }
  return out;
}

// Row perm[v] of the result is row v of x.
inline herald::Tensor permute_rows(const herald::Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t c = x.cols();
  std::vector<double> out(x.numel());
  for (std::size_t v = 0; v < x.rows(); ++v)
    for (std::size_t k = 0; k < c; ++k) out[perm[v] * c + k] = x.data()[v * c + k];
  return herald::Tensor(x.shape(), std::move(out));
}

}  // namespace oracle
