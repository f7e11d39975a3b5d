#pragma once

// Discrete hypergraph topology and its normalized spectral operators:
//
//   N = D_v^{-1/2} H W D_e^{-1} H^T D_v^{-1/2},   L = I - N
//
// with d(v) = sum_e w(e) h(v,e) and delta(e) = sum_v h(v,e).

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "herald/error.hpp"
#include "herald/ops.hpp"
#include "herald/tensor.hpp"

namespace herald {

struct Hypergraph {
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::size_t>> hyperedges;
  std::vector<double> edge_weights;  // diagonal of W, one per hyperedge

  Hypergraph() = default;
  Hypergraph(std::size_t nodes, std::vector<std::vector<std::size_t>> edges)
      : num_nodes(nodes), hyperedges(std::move(edges)), edge_weights(hyperedges.size(), 1.0) {}
  Hypergraph(std::size_t nodes, std::vector<std::vector<std::size_t>> edges,
             std::vector<double> weights)
      : num_nodes(nodes), hyperedges(std::move(edges)), edge_weights(std::move(weights)) {}

  std::size_t num_edges() const { return hyperedges.size(); }

  void validate() const {
    if (edge_weights.size() != hyperedges.size()) {
      throw ValidationError("hypergraph has " + std::to_string(hyperedges.size()) +
                            " hyperedges but " + std::to_string(edge_weights.size()) + " weights");
    }
    std::vector<std::size_t> stamp(num_nodes, SIZE_MAX);
    for (std::size_t e = 0; e < hyperedges.size(); ++e) {
      if (hyperedges[e].empty()) {
        throw ValidationError("hyperedge " + std::to_string(e) + " is empty");
      }
      for (std::size_t v : hyperedges[e]) {
        if (v >= num_nodes) {
          throw ValidationError("hyperedge " + std::to_string(e) + " references node " +
                                std::to_string(v) + " but the hypergraph has " +
                                std::to_string(num_nodes) + " nodes");
        }
        if (stamp[v] == e) {
          throw ValidationError("hyperedge " + std::to_string(e) + " lists node " +
                                std::to_string(v) + " twice");
        }
        stamp[v] = e;
      }
      if (!(edge_weights[e] > 0.0) || !std::isfinite(edge_weights[e])) {
        throw ValidationError("hyperedge " + std::to_string(e) + " has non-positive weight");
      }
    }
  }

  bool operator==(const Hypergraph&) const = default;
};

inline std::vector<std::size_t> isolated_nodes(const Hypergraph& g) {
  std::vector<char> seen(g.num_nodes, 0);
  for (const auto& e : g.hyperedges)
    for (std::size_t v : e) seen[v] = 1;
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    if (!seen[v]) out.push_back(v);
  return out;
}

// Gives every isolated node a unit-weight singleton hyperedge {v}. Returns the patched nodes.
inline std::vector<std::size_t> patch_isolated_nodes(Hypergraph& g) {
  auto lonely = isolated_nodes(g);
  for (std::size_t v : lonely) {
    g.hyperedges.push_back({v});
    g.edge_weights.push_back(1.0);
  }
  return lonely;
}

// Binary |V| x |E| incidence matrix.
inline Tensor incidence_matrix(const Hypergraph& g) {
  g.validate();
  const std::size_t n = g.num_nodes, m = g.num_edges();
  Tensor h = Tensor::zeros({n, m});
  auto data = h.mutable_data();
  for (std::size_t e = 0; e < m; ++e)
    for (std::size_t v : g.hyperedges[e]) data[v * m + e] = 1.0;
  return h;
}

struct Degrees {
  std::vector<double> node;  // d(v)
  std::vector<double> edge;  // delta(e)
};

// Degrees of a (possibly soft) incidence matrix. Throws DegenerateNodeError on d(v) = 0.
inline Degrees degrees(const Tensor& incidence, std::span<const double> edge_weights) {
  detail::require_matrix(incidence, "degrees");
  const std::size_t n = incidence.rows(), m = incidence.cols();
  if (edge_weights.size() != m) {
    throw DimensionError("degrees: " + std::to_string(edge_weights.size()) + " weights for " +
                         std::to_string(m) + " hyperedges");
  }
  Degrees d{std::vector<double>(n, 0.0), std::vector<double>(m, 0.0)};
  auto h = incidence.data();
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t e = 0; e < m; ++e) {
      d.node[v] += edge_weights[e] * h[v * m + e];
      d.edge[e] += h[v * m + e];
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!(d.node[v] > 0.0)) {
      throw DegenerateNodeError(v, "node " + std::to_string(v) +
                                       " is incident to no hyperedge (zero degree)");
    }
  }
  for (std::size_t e = 0; e < m; ++e) {
    if (!(d.edge[e] > 0.0)) throw ValidationError("hyperedge " + std::to_string(e) + " is empty");
  }
  return d;
}

inline Degrees degrees(const Hypergraph& g) { return degrees(incidence_matrix(g), g.edge_weights); }

// Dense propagation matrix from an incidence matrix. The lower triangle is
// formed by a rank update and mirrored, so the result is exactly symmetric.
inline Tensor propagation_matrix(const Tensor& incidence, std::span<const double> edge_weights) {
  const auto d = degrees(incidence, edge_weights);
  const std::size_t n = incidence.rows(), m = incidence.cols();
  detail::RowMatrix factor(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  auto h = incidence.data();
  for (std::size_t v = 0; v < n; ++v) {
    const double rv = 1.0 / std::sqrt(d.node[v]);
    for (std::size_t e = 0; e < m; ++e) {
      factor(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(e)) =
          rv * h[v * m + e] * std::sqrt(edge_weights[e] / d.edge[e]);
    }
  }
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(n));
  lower.selfadjointView<Eigen::Lower>().rankUpdate(factor);
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double x = lower(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out[i * n + j] = x;
      out[j * n + i] = x;
    }
  }
  return Tensor({n, n}, std::move(out));
}

// Same operator built straight from membership lists: O(sum |e|^2) instead of O(|V|^2 |E|).
inline Tensor propagation_matrix(const Hypergraph& g) {
  g.validate();
  const std::size_t n = g.num_nodes;
  std::vector<double> dv(n, 0.0);
  for (std::size_t e = 0; e < g.num_edges(); ++e)
    for (std::size_t v : g.hyperedges[e]) dv[v] += g.edge_weights[e];
  for (std::size_t v = 0; v < n; ++v) {
    if (!(dv[v] > 0.0)) {
      throw DegenerateNodeError(v, "node " + std::to_string(v) +
                                       " is incident to no hyperedge (zero degree)");
    }
  }
  std::vector<double> out(n * n, 0.0);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const auto& members = g.hyperedges[e];
    const double c = g.edge_weights[e] / static_cast<double>(members.size());
    for (std::size_t i : members)
      for (std::size_t j : members) out[i * n + j] += c;
  }
  std::vector<double> rs(n);
  for (std::size_t v = 0; v < n; ++v) rs[v] = 1.0 / std::sqrt(dv[v]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= rs[i] * rs[j];
  return Tensor({n, n}, std::move(out));
}

// L = I - N, elementwise.
inline Tensor laplacian_from_propagation(const Tensor& propagation) {
  detail::require_matrix(propagation, "laplacian");
  const std::size_t n = propagation.rows();
  if (propagation.cols() != n) throw DimensionError("laplacian needs a square propagation matrix");
  std::vector<double> out(n * n);
  auto p = propagation.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (i == j ? 1.0 : 0.0) - p[i * n + j];
  return Tensor({n, n}, std::move(out));
}

inline Tensor laplacian(const Tensor& incidence, std::span<const double> edge_weights) {
  return laplacian_from_propagation(propagation_matrix(incidence, edge_weights));
}

inline Tensor laplacian(const Hypergraph& g) {
  return laplacian_from_propagation(propagation_matrix(g));
}

inline double max_asymmetry(const Tensor& a) {
  detail::require_matrix(a, "max_asymmetry");
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionError("max_asymmetry needs a square matrix");
  double worst = 0.0;
  auto x = a.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      worst = std::max(worst, std::abs(x[i * n + j] - x[j * n + i]));
  return worst;
}

// Ascending eigenvalues of a symmetric matrix.
inline std::vector<double> eigen_check(const Tensor& symmetric) {
  detail::require_matrix(symmetric, "eigen_check");
  const std::size_t n = symmetric.rows();
  if (symmetric.cols() != n) throw DimensionError("eigen_check needs a square matrix");
  const double asym = max_asymmetry(symmetric);
  if (asym > 1e-8) {
    throw ContractError("eigen_check: matrix is not symmetric (max deviation " +
                        std::to_string(asym) + ")");
  }
  Eigen::MatrixXd a = detail::as_matrix(symmetric);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigen_check: solver did not converge");
  std::vector<double> values(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  std::sort(values.begin(), values.end());
  return values;
}

}  // namespace herald
