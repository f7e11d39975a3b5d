#pragma once

// Learnable re-estimation of the hypergraph incidence structure.
//
// From node features X and the fixed topology, the adaptor builds a soft
// incidence matrix H~ (attention-enhanced node features compared against
// transformed hyperedge centroids under a Gaussian kernel), normalizes it like
// the original incidence into N_res, and blends
//
//   N^ = (1 - a) N + a N_res,    L~ = I - N^.
//
// Everything runs on the differentiation tape, so gradients reach W_v, W_e and W_s.
//
// Two choices go beyond the bare formulas and are worth knowing about:
//  * distances are clamped at zero before the kernel, so H~ stays in (0, 1]
//    even when W_s has negative entries (zero gradient where clamped);
//  * soft hyperedges carry unit weight when H~ is normalized.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "herald/error.hpp"
#include "herald/hypergraph.hpp"
#include "herald/ops.hpp"
#include "herald/random.hpp"
#include "herald/tensor.hpp"

namespace herald {

inline constexpr double kDefaultSigma = 20.0;

// Fixed per-graph operators shared by every layer and every epoch.
struct TopologyContext {
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  Tensor propagation;  // N, |V| x |V|
  Tensor edge_mean;    // |E| x |V|, row e averages the members of e
};

inline TopologyContext make_topology(const Hypergraph& g) {
  g.validate();
  TopologyContext ctx;
  ctx.num_nodes = g.num_nodes;
  ctx.num_edges = g.num_edges();
  ctx.propagation = propagation_matrix(g);
  ctx.edge_mean = Tensor::zeros({ctx.num_edges, ctx.num_nodes});
  auto m = ctx.edge_mean.mutable_data();
  for (std::size_t e = 0; e < ctx.num_edges; ++e) {
    const double w = 1.0 / static_cast<double>(g.hyperedges[e].size());
    for (std::size_t v : g.hyperedges[e]) m[e * ctx.num_nodes + v] = w;
  }
  return ctx;
}

struct HeraldParams {
  Tensor node_transform;    // W_v, d x h
  Tensor edge_transform;    // W_e, d x h
  Tensor distance_weights;  // W_s, h x 1
  double sigma = kDefaultSigma;

  std::size_t input_dim() const { return node_transform.rows(); }
  std::size_t hidden_dim() const { return node_transform.cols(); }
  std::size_t parameter_count() const {
    return node_transform.numel() + edge_transform.numel() + distance_weights.numel();
  }

  void validate() const {
    if (!node_transform || !edge_transform || !distance_weights) {
      throw ConfigError("adaptor parameters are not initialised");
    }
    if (node_transform.shape() != edge_transform.shape()) {
      throw ConfigError("W_v " + shape_string(node_transform.shape()) + " and W_e " +
                        shape_string(edge_transform.shape()) + " must share a shape");
    }
    if (distance_weights.shape() != Shape{hidden_dim(), 1}) {
      throw ConfigError("W_s must be " + std::to_string(hidden_dim()) + "x1, got " +
                        shape_string(distance_weights.shape()));
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
  }

  // Glorot-uniform W_v and W_e; W_s starts non-negative so the initial
  // distances are genuine weighted squared distances.
  static HeraldParams init(std::size_t input_dim, std::size_t hidden_dim, double sigma, Rng& rng) {
    if (input_dim == 0 || hidden_dim == 0) throw ConfigError("adaptor dimensions must be >= 1");
    auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
      const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::vector<double> w(fan_in * fan_out);
      for (auto& x : w) x = rng.uniform(-r, r);
      return Tensor::parameter({fan_in, fan_out}, std::move(w));
    };
    HeraldParams p;
    p.node_transform = glorot(input_dim, hidden_dim);
    p.edge_transform = glorot(input_dim, hidden_dim);
    std::vector<double> ws(hidden_dim);
    const double r = std::sqrt(6.0 / static_cast<double>(hidden_dim + 1));
    for (auto& x : ws) x = rng.uniform(0.0, r);
    p.distance_weights = Tensor::parameter({hidden_dim, 1}, std::move(ws));
    p.sigma = sigma;
    p.validate();
    return p;
  }
};

struct HeraldOutput {
  Tensor soft_incidence;          // H~, |V| x |E|, entries in (0, 1]
  Tensor residual_propagation;    // N_res
  Tensor blended_propagation;     // N^
  Tensor laplacian;               // L~ = I - N^
};

// Mean feature of each hyperedge's members, |E| x d.
inline Tensor hyperedge_features(const Tensor& features, const TopologyContext& ctx) {
  if (features.rows() != ctx.num_nodes) {
    throw DimensionError("hyperedge_features: " + std::to_string(features.rows()) +
                         " feature rows for " + std::to_string(ctx.num_nodes) + " nodes");
  }
  return matmul(ctx.edge_mean, features);
}

inline Tensor transform_hyperedges(const Tensor& edge_features, const Tensor& edge_transform) {
  return matmul(edge_features, edge_transform);
}

struct Attention {
  Tensor weights;   // alpha, |V| x |V|, rows sum to 1
  Tensor features;  // sum_j alpha_ij z_j, |V| x h
};

// Dot-product self-attention over all nodes with z_i = W_v^T x_i.
inline Attention attend_nodes(const Tensor& features, const Tensor& node_transform) {
  const Tensor z = matmul(features, node_transform);
  const Tensor logits = matmul(z, transpose(z));
  Attention out;
  out.weights = softmax_rows(logits);
  out.features = matmul(out.weights, z);
  return out;
}

// d_ij = sum_k w_k (x_ik - e_jk)^2, expanded as (x_i^2) w + (e_j^2) w - 2 x_i diag(w) e_j^T.
inline Tensor distance_matrix(const Tensor& node_features, const Tensor& edge_features,
                              const Tensor& distance_weights) {
  detail::require_matrix(node_features, "distance_matrix");
  detail::require_matrix(edge_features, "distance_matrix");
  const std::size_t h = node_features.cols();
  if (edge_features.cols() != h || distance_weights.shape() != Shape{h, 1}) {
    throw DimensionError("distance_matrix: feature widths " +
                         detail::pair_shapes(node_features, edge_features) + " with W_s " +
                         shape_string(distance_weights.shape()));
  }
  const std::size_t nv = node_features.rows(), ne = edge_features.rows();
  const auto P = detail::as_matrix(node_features);
  const auto Q = detail::as_matrix(edge_features);
  const auto w = distance_weights.data();
  // Reductions run as plain loops: Eigen's vectorised sums peel by pointer
  // alignment, which would make results depend on where a buffer landed.
  const auto weighted_squares = [&](const Tensor& t) {
    std::vector<double> r(t.rows(), 0.0);
    const auto d = t.data();
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t k = 0; k < h; ++k) r[i] += d[i * h + k] * d[i * h + k] * w[k];
    return r;
  };
  const auto node_term = weighted_squares(node_features);
  const auto edge_term = weighted_squares(edge_features);
  const detail::RowMatrix cross = (P * detail::as_matrix(distance_weights).col(0).asDiagonal()) * Q.transpose();
  std::vector<double> out(nv * ne);
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t j = 0; j < ne; ++j)
      out[i * ne + j] = (node_term[i] + edge_term[j]) - 2.0 * cross(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return detail::make_result(
      "distance_matrix", {nv, ne}, std::move(out), {node_features, edge_features, distance_weights},
      [node_features, edge_features, distance_weights, nv, ne, h](std::span<const double> g,
                                                                  std::span<const double>) {
        const auto G = detail::as_matrix(g, nv, ne);
        const auto P = detail::as_matrix(node_features);
        const auto Q = detail::as_matrix(edge_features);
        const auto p = node_features.data(), q = edge_features.data(), w = distance_weights.data();
        std::vector<double> row_sums(nv, 0.0), col_sums(ne, 0.0);
        for (std::size_t i = 0; i < nv; ++i)
          for (std::size_t j = 0; j < ne; ++j) {
            row_sums[i] += g[i * ne + j];
            col_sums[j] += g[i * ne + j];
          }
        const detail::RowMatrix GQ = G * Q;
        if (node_features.requires_grad()) {
          auto& dp = detail::grad_buffer(node_features);
          for (std::size_t i = 0; i < nv; ++i)
            for (std::size_t k = 0; k < h; ++k) {
              const auto ii = static_cast<Eigen::Index>(i), kk = static_cast<Eigen::Index>(k);
              dp[i * h + k] += 2.0 * (row_sums[i] * p[i * h + k] - GQ(ii, kk)) * w[k];
            }
        }
        if (edge_features.requires_grad()) {
          const detail::RowMatrix GtP = G.transpose() * P;
          auto& dq = detail::grad_buffer(edge_features);
          for (std::size_t j = 0; j < ne; ++j)
            for (std::size_t k = 0; k < h; ++k) {
              const auto jj = static_cast<Eigen::Index>(j), kk = static_cast<Eigen::Index>(k);
              dq[j * h + k] += 2.0 * (col_sums[j] * q[j * h + k] - GtP(jj, kk)) * w[k];
            }
        }
        if (distance_weights.requires_grad()) {
          auto& dw = detail::grad_buffer(distance_weights);
          for (std::size_t k = 0; k < h; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < nv; ++i)
              acc += p[i * h + k] * (p[i * h + k] * row_sums[i] - 2.0 * GQ(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
            for (std::size_t j = 0; j < ne; ++j) acc += q[j * h + k] * q[j * h + k] * col_sums[j];
            dw[k] += acc;
          }
        }
      });
}

// Lower bound on H~ entries. The kernel is positive in exact arithmetic but
// exp underflows to 0 once d / 2 sigma^2 passes ~745, and a node whose whole row
// underflows would get a zero soft degree.
inline constexpr double kSoftIncidenceFloor = 1e-30;

// H~_ij = max(exp(-max(d_ij, 0) / (2 sigma^2)), floor); flat (zero gradient)
// wherever either bound is active.
inline Tensor soft_incidence(const Tensor& distances, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  const double c = 1.0 / (2.0 * sigma * sigma);
  return detail::unary(
      "soft_incidence", distances,
      [c](double d) { return std::max(std::exp(std::max(d, 0.0) * -c), kSoftIncidenceFloor); },
      [c](double d, double y) { return d > 0.0 && y > kSoftIncidenceFloor ? -c * y : 0.0; });
}

// D~_v^{-1/2} H~ D~_e^{-1} H~^T D~_v^{-1/2} with unit hyperedge weights.
inline Tensor soft_propagation(const Tensor& soft) {
  const Tensor node_scale = pow(sum_rows(soft), -0.5);
  const Tensor edge_scale = pow(sum_cols(soft), -0.5);
  const Tensor factor = scale_cols(scale_rows(soft, node_scale), edge_scale);
  return gram(factor);
}

// (1 - a) N + a N_res
inline Tensor blend_propagation(const Tensor& original, const Tensor& residual, double a) {
  if (original.shape() != residual.shape()) {
    throw DimensionError("blend_propagation: shape mismatch " + detail::pair_shapes(original, residual));
  }
  const double b = 1.0 - a;
  auto xo = original.data();
  auto xr = residual.data();
  std::vector<double> out(xo.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xo[i] * b + xr[i] * a;
  return detail::make_result("blend_propagation", original.shape(), std::move(out), {original, residual},
                             [original, residual, a, b](std::span<const double> g, std::span<const double>) {
                               if (original.requires_grad()) {
                                 auto& go = detail::grad_buffer(original);
                                 for (std::size_t i = 0; i < g.size(); ++i) go[i] += g[i] * b;
                               }
                               if (residual.requires_grad()) {
                                 auto& gr = detail::grad_buffer(residual);
                                 for (std::size_t i = 0; i < g.size(); ++i) gr[i] += g[i] * a;
                               }
                             });
}

// L~ is left undefined when with_laplacian is false; training only needs N^.
inline HeraldOutput herald_forward(const HeraldParams& params, const Tensor& features,
                                   const TopologyContext& ctx, double a,
                                   bool with_laplacian = true) {
  if (!(a >= 0.0 && a <= 1.0)) {
    throw ConfigError("blend strength a must lie in [0, 1], got " + std::to_string(a));
  }
  params.validate();
  if (features.cols() != params.input_dim()) {
    throw DimensionError("herald_forward: features " + shape_string(features.shape()) +
                         " but W_v expects width " + std::to_string(params.input_dim()));
  }
  const Tensor edges = transform_hyperedges(hyperedge_features(features, ctx), params.edge_transform);
  const Attention attention = attend_nodes(features, params.node_transform);
  const Tensor distances = distance_matrix(attention.features, edges, params.distance_weights);

  HeraldOutput out;
  out.soft_incidence = soft_incidence(distances, params.sigma);
  out.residual_propagation = soft_propagation(out.soft_incidence);
  out.blended_propagation = blend_propagation(ctx.propagation, out.residual_propagation, a);
  if (with_laplacian) out.laplacian = sub(Tensor::identity(ctx.num_nodes), out.blended_propagation);
  return out;
}

// Blend strength for 1-based layer l, rising from 0.1 at l = 1.
inline double a_schedule(int layer) {
  if (layer < 1) throw ConfigError("layer index must be >= 1, got " + std::to_string(layer));
  return 1.0 - 0.9 * (std::cos(std::numbers::pi * static_cast<double>(layer - 1) / 10.0) + 1.0) / 2.0;
}

// ||N - N_res||_F
inline Tensor topology_regularizer(const Tensor& original, const Tensor& residual) {
  if (original.shape() != residual.shape()) {
    throw DimensionError("topology_regularizer: shape mismatch " +
                         detail::pair_shapes(original, residual));
  }
  return frobenius_norm(sub(original, residual));
}

}  // namespace herald
