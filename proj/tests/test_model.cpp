#include <gtest/gtest.h>

#include <filesystem>

#include "herald/herald.hpp"
#include "support/oracles.hpp"
#include "support/suites.hpp"

using namespace herald;

namespace {

ModelConfig node_config(std::size_t d, std::size_t classes, HeraldMode mode, std::size_t layers = 3) {
  ModelConfig c;
  c.task = Task::node;
  c.input_dim = d;
  c.hidden_dim = 5;
  c.num_classes = classes;
  c.num_layers = layers;
  c.herald = mode;
  c.herald_dim = 3;
  c.sigma = 1.0;
  return c;
}

ModelConfig graph_config(std::size_t d, HeraldMode mode) {
  auto c = node_config(d, 2, mode);
  c.task = Task::graph;
  c.readout = Readout::sum;
  return c;
}

// Copies every parameter `from` shares by name into `to`.
void share_weights(const Model& from, Model& to) {
  auto state = from.state();
  const auto target = to.state();
  for (auto it = state.begin(); it != state.end();) it = target.count(it->first) ? std::next(it) : state.erase(it);
  to.load_state(state, false);
}

void set_nonzero_biases(Model& m, Rng& rng) {
  auto state = m.state();
  for (auto& [name, values] : state)
    if (name.find(".bias") != std::string::npos)
      for (auto& v : values) v = rng.uniform(-0.2, 0.2);
  m.load_state(state);
}

}  // namespace

TEST(ModelConfig, DefaultPlacementAndSpecs) {
  auto c = node_config(7, 3, HeraldMode::per_layer);
  EXPECT_EQ(c.instrumented_layers(), (std::vector<int>{2, 3}));
  const auto specs = c.layer_specs();
  ASSERT_EQ(specs.size(), 3u);
  EXPECT_EQ(specs[0].in_dim, 7u);
  EXPECT_EQ(specs[2].out_dim, 3u);
  EXPECT_EQ(specs[2].activation, Activation::identity);
  EXPECT_FALSE(specs[0].herald);
  EXPECT_TRUE(specs[1].herald && specs[2].herald);
  c.herald_layers = {4};
  EXPECT_THROW(c.validate(), ConfigError);
  auto g = graph_config(4, HeraldMode::off);
  g.readout = Readout::none;
  EXPECT_THROW(g.validate(), ConfigError);
  EXPECT_THROW(parse_herald_mode("bogus"), ConfigError);
}

TEST(ForwardNode, IdentityPath) {
  ModelConfig c = node_config(3, 3, HeraldMode::off, 1);
  Model m(c, 1);
  m.load_state({{"conv1.weight", {1, 0, 0, 0, 1, 0, 0, 0, 1}}, {"conv1.bias", {0, 0, 0}}});
  const auto ctx = make_topology(Hypergraph(4, {{0}, {1}, {2}, {3}}));
  Rng rng(2);
  const Tensor x = oracle::random_matrix(4, 3, rng);
  EXPECT_TRUE(oracle::bit_equal(forward_node(m, x, ctx).logits, x));
}

TEST(ForwardNode, ZeroBlendMatchesPlainModel) {
  Rng rng(3);
  const auto ctx = make_topology(oracle::random_hypergraph(6, 4, rng));
  const Tensor x = oracle::random_matrix(6, 4, rng);
  for (auto mode : {HeraldMode::per_layer, HeraldMode::fast}) {
    auto c = node_config(4, 2, mode);
    c.fixed_a = 0.0;
    Model with(c, 9);
    Model plain(node_config(4, 2, HeraldMode::off), 123);
    set_nonzero_biases(with, rng);
    share_weights(with, plain);
    EXPECT_TRUE(oracle::bit_equal(forward_node(with, x, ctx).logits, forward_node(plain, x, ctx).logits));
  }
}

TEST(ForwardNode, SameSeedSharesBackboneAcrossModes) {
  const Model off(node_config(4, 2, HeraldMode::off), 5);
  const Model on(node_config(4, 2, HeraldMode::per_layer), 5);
  for (std::size_t l = 1; l <= 3; ++l) EXPECT_TRUE(oracle::bit_equal(off.weight(l), on.weight(l)));
}

TEST(ForwardNode, MatchesCompositionOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(40 + seed);
    const auto g = oracle::random_hypergraph(6, 4, rng);
    const auto ctx = make_topology(g);
    Model m(node_config(3, 2, HeraldMode::per_layer), seed);
    set_nonzero_biases(m, rng);
    const Tensor x = oracle::random_matrix(6, 3, rng);
    const Tensor logits = forward_node(m, x, ctx).logits;

    oracle::Dense h = oracle::to_dense(x);
    const auto base = oracle::propagation(oracle::incidence(g), g.edge_weights);
    for (int l = 1; l <= 3; ++l) {
      auto prop = base;
      if (const HeraldParams* p = m.adaptor(l)) {
        prop = oracle::adaptor(h, g, oracle::to_dense(p->node_transform), oracle::to_dense(p->edge_transform),
                               {p->distance_weights.data().begin(), p->distance_weights.data().end()}, p->sigma,
                               a_schedule(l))
                   .blended;
      }
      h = oracle::matmul(prop, oracle::matmul(h, oracle::to_dense(m.weight(static_cast<std::size_t>(l)))));
      const auto b = m.bias(static_cast<std::size_t>(l)).data();
      for (auto& row : h)
        for (std::size_t k = 0; k < row.size(); ++k) {
          row[k] += b[k];
          if (l < 3) row[k] = std::max(row[k], 0.0);
        }
    }
    EXPECT_LE(oracle::max_abs_diff(oracle::to_dense(logits), h), 1e-12);
  }
}

TEST(ForwardGraph, PermutationInvariant) {
  Rng rng(50);
  const auto g = oracle::random_hypergraph(7, 5, rng);
  const Tensor x = oracle::random_matrix(7, 4, rng);
  const auto perm = oracle::random_permutation(7, rng);
  for (auto mode : {HeraldMode::off, HeraldMode::per_layer, HeraldMode::fast}) {
    Model m(graph_config(4, mode), 3);
    set_nonzero_biases(m, rng);
    const Tensor a = forward_graph(m, x, make_topology(g)).logits;
    const Tensor b = forward_graph(m, oracle::permute_rows(x, perm), make_topology(oracle::permute(g, perm))).logits;
    EXPECT_EQ(a.shape(), (Shape{1, 2}));
    EXPECT_LE(oracle::max_abs_diff(a, b), 1e-10);
  }
}

TEST(ForwardGraph, ZeroFeaturesGiveZeroLogits) {
  Rng rng(51);
  const auto ctx = make_topology(oracle::random_hypergraph(5, 3, rng));
  for (auto mode : {HeraldMode::off, HeraldMode::per_layer}) {
    Model m(graph_config(4, mode), 4);
    const Tensor logits = forward_graph(m, Tensor::zeros({5, 4}), ctx).logits;
    for (double v : logits.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(ForwardGraph, MatchesCompositionOracle) {
  Rng rng(52);
  const auto g = oracle::random_hypergraph(6, 6, rng);
  const auto ctx = make_topology(g);
  Model m(graph_config(3, HeraldMode::off), 8);
  set_nonzero_biases(m, rng);
  const Tensor x = oracle::random_matrix(6, 3, rng);
  oracle::Dense h = oracle::to_dense(x);
  const auto base = oracle::propagation(oracle::incidence(g), g.edge_weights);
  for (std::size_t l = 1; l <= 3; ++l) {
    h = oracle::matmul(base, oracle::matmul(h, oracle::to_dense(m.weight(l))));
    for (auto& row : h)
      for (std::size_t k = 0; k < row.size(); ++k) row[k] = std::max(row[k] + m.bias(l).data()[k], 0.0);
  }
  oracle::Dense pooled(1, std::vector<double>(h[0].size(), 0.0));
  for (const auto& row : h)
    for (std::size_t k = 0; k < row.size(); ++k) pooled[0][k] += row[k];
  auto want = oracle::matmul(pooled, oracle::to_dense(m.classifier_weight()));
  for (std::size_t k = 0; k < 2; ++k) want[0][k] += m.classifier_bias().data()[k];
  EXPECT_LE(oracle::max_abs_diff(oracle::to_dense(forward_graph(m, x, ctx).logits), want), 1e-12);
}

TEST(FastHerald, OneSharedAdaptor) {
  const Model per(node_config(6, 3, HeraldMode::per_layer), 1);
  const Model fast(node_config(6, 3, HeraldMode::fast), 1);
  EXPECT_EQ(per.adaptor_count(), 2u);
  EXPECT_EQ(fast.adaptor_count(), 1u);
  EXPECT_LT(fast.parameter_count(), per.parameter_count());
  EXPECT_THROW(fast_herald_plan(per, Tensor::zeros({2, 6}), make_topology(Hypergraph(2, {{0, 1}}))), ConfigError);
}

TEST(FastHerald, ReusesOneBlendAcrossLayers) {
  Rng rng(60);
  const auto ctx = make_topology(oracle::random_hypergraph(6, 4, rng));
  const Tensor x = oracle::random_matrix(6, 6, rng);
  const Model fast(node_config(6, 3, HeraldMode::fast), 2);
  const Model per(node_config(6, 3, HeraldMode::per_layer), 2);
  const auto rf = forward_node(fast, x, ctx);
  const auto rp = forward_node(per, x, ctx);
  EXPECT_TRUE(rf.propagations[1].same_storage(rf.propagations[2]));
  EXPECT_TRUE(oracle::bit_equal(rf.propagations[0], ctx.propagation));
  EXPECT_GT(oracle::max_abs_diff(rf.propagations[2], rp.propagations[2]), 1e-9);
}

TEST(FastHerald, ZeroBlendCollapsesToPlainModel) {
  Rng rng(61);
  const auto ctx = make_topology(oracle::random_hypergraph(6, 4, rng));
  const Tensor x = oracle::random_matrix(6, 4, rng);
  auto c = node_config(4, 2, HeraldMode::fast);
  c.fixed_a = 0.0;
  const Model fast(c, 3);
  const Model plain(node_config(4, 2, HeraldMode::off), 3);
  EXPECT_TRUE(oracle::bit_equal(forward_node(fast, x, ctx).logits, forward_node(plain, x, ctx).logits));
}

TEST(ParameterCount, AdaptorContribution) {
  auto c = node_config(4, 2, HeraldMode::off, 1);
  const std::size_t plain = Model(c, 0).parameter_count();
  EXPECT_EQ(plain, 4u * 2u + 2u);
  c.herald = HeraldMode::per_layer;
  EXPECT_EQ(Model(c, 0).parameter_count() - plain, 27u);
  // The count depends only on the configuration, never on the graph size.
  EXPECT_EQ(parameter_count(Model(c, 0)), parameter_count(Model(c, 77)));
}

TEST(ParameterCount, HeraldOffMatchesPlainBackbone) {
  const auto c = node_config(10, 4, HeraldMode::off);
  EXPECT_EQ(Model(c, 0).parameter_count(), (10u * 5 + 5) + (5u * 5 + 5) + (5u * 4 + 4));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(70);
  Model m(node_config(4, 3, HeraldMode::per_layer), 5);
  set_nonzero_biases(m, rng);
  const auto path = std::filesystem::temp_directory_path() / "herald_ckpt_test.json";
  save_checkpoint(m, path.string());
  const Model back = load_checkpoint(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(back.state(), m.state());
  const auto ctx = make_topology(oracle::random_hypergraph(5, 3, rng));
  const Tensor x = oracle::random_matrix(5, 4, rng);
  EXPECT_TRUE(oracle::bit_equal(forward_node(back, x, ctx).logits, forward_node(m, x, ctx).logits));
  EXPECT_THROW(model_from_checkpoint_json(nlohmann::json{{"format", "other"}}), ParseError);
  EXPECT_THROW(m.clone().load_state({{"nope", {1.0}}}), ValidationError);
}

class EndToEndGradients : public ::testing::TestWithParam<int> {};

TEST_P(EndToEndGradients, AdaptorAndModelMatchFiniteDifferences) {
  for (const auto& f : suites::end_to_end_gradients(static_cast<std::uint64_t>(GetParam()))) ADD_FAILURE() << f;
}

INSTANTIATE_TEST_SUITE_P(TenSeeds, EndToEndGradients, ::testing::Range(0, 10));
