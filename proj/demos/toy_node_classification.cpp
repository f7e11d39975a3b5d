// Trains the plain backbone and the adaptor variants on a small planted
// hypergraph and prints test accuracy for each.

#include <algorithm>
#include <cstdio>

#include "herald/herald.hpp"

namespace {

// Two communities of 60 nodes. Hyperedges mostly stay inside a community,
// features are noisy class indicators.
herald::NodeDataset planted(std::uint64_t seed) {
  herald::Rng rng(seed);
  const std::size_t n = 120, d = 8;
  herald::NodeDataset ds;
  ds.name = "planted";
  ds.num_classes = 2;
  for (std::size_t v = 0; v < n; ++v) ds.labels.push_back(v < n / 2 ? 0 : 1);
  std::vector<double> x(n * d);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t k = 0; k < d; ++k)
      x[v * d + k] = rng.uniform(-1.0, 1.0) + (k == static_cast<std::size_t>(ds.labels[v]) ? 0.6 : 0.0);
  ds.features = herald::Tensor({n, d}, std::move(x));
  ds.hypergraph.num_nodes = n;
  for (std::size_t e = 0; e < 80; ++e) {
    const std::size_t base = rng.bernoulli(0.5) ? 0 : n / 2;
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < 4; ++k) {
      const bool stray = rng.bernoulli(0.15);
      const std::size_t v = (stray ? n / 2 - base : base) + rng.index(n / 2);
      if (std::find(members.begin(), members.end(), v) == members.end()) members.push_back(v);
    }
    std::sort(members.begin(), members.end());
    ds.hypergraph.hyperedges.push_back(members);
    ds.hypergraph.edge_weights.push_back(1.0);
  }
  herald::patch_isolated_nodes(ds.hypergraph);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  ds.masks["train"].assign(order.begin(), order.begin() + 20);
  ds.masks["val"].assign(order.begin() + 20, order.begin() + 50);
  ds.masks["test"].assign(order.begin() + 50, order.end());
  return ds;
}

}  // namespace

int main() {
  const auto data = planted(7);
  for (const char* mode : {"off", "on", "fast"}) {
    herald::TrainConfig config;
    config.herald = herald::parse_herald_mode(mode);
    config.hidden = 16;
    config.herald_dim = 8;
    config.lr = 0.01;
    config.epochs = 150;
    const auto result = herald::train_node(config, data);
    std::printf("herald=%-4s params=%-5zu best_epoch=%-3d test=%.3f\n", mode, result.record.parameter_count,
                result.record.best_epoch, result.record.test_accuracy);
  }
}
