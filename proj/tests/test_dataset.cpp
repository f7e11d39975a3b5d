#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "herald/herald.hpp"
#include "support/oracles.hpp"

using namespace herald;
namespace fs = std::filesystem;

#ifndef HERALD_FIXTURE_DIR
#error "HERALD_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace {

const fs::path kFixtures = HERALD_FIXTURE_DIR;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("herald_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

nlohmann::json tiny_doc() {
  std::ifstream in(kFixtures / "tiny_node.json");
  return nlohmann::json::parse(in);
}

}  // namespace

TEST(NodeDataset, FixtureParsesExactly) {
  const auto ds = load_node_dataset(kFixtures / "tiny_node.json");
  EXPECT_EQ(ds.name, "tiny");
  EXPECT_EQ(ds.hypergraph, Hypergraph(4, {{0, 1}, {1, 2, 3}}, {1.0, 2.0}));
  EXPECT_EQ(ds.features.shape(), (Shape{4, 2}));
  EXPECT_EQ(std::vector<double>(ds.features.data().begin(), ds.features.data().end()),
            (std::vector<double>{1, 0, 0, 1, 0.5, 0.5, 2, -1}));
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 1, 0}));
  EXPECT_EQ(ds.num_classes, 2u);
  EXPECT_EQ(ds.mask("train"), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(ds.mask("val"), (std::vector<std::size_t>{2}));
  EXPECT_EQ(ds.mask("test"), (std::vector<std::size_t>{3}));
  EXPECT_TRUE(ds.warnings.empty());
}

TEST(NodeDataset, IsolatedNodesArePatchedWithWarning) {
  TempDir dir("iso");
  auto doc = tiny_doc();
  doc["hyperedges"] = {{0, 1}, {1, 3}};
  doc["edge_weights"] = {1.0, 1.0};
  write_text(dir.path / "d.json", doc.dump());
  const auto ds = load_node_dataset(dir.path / "d.json");
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_NE(ds.warnings[0].find("node 2"), std::string::npos);
  EXPECT_EQ(ds.hypergraph.hyperedges.back(), (std::vector<std::size_t>{2}));
}

TEST(NodeDataset, ErrorsCarryContext) {
  TempDir dir("bad");
  write_text(dir.path / "syntax.json", "{\n  \"format\": \"herald-node-dataset\",\n  \"version\": 1,\n  oops\n}");
  try {
    load_node_dataset(dir.path / "syntax.json");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("syntax.json:4"), std::string::npos) << e.what();
  }

  auto doc = tiny_doc();
  doc["features"][2] = {1.0};
  write_text(dir.path / "ragged.json", doc.dump());
  try {
    load_node_dataset(dir.path / "ragged.json");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("features[2]"), std::string::npos) << e.what();
  }

  doc = tiny_doc();
  doc["labels"][3] = 5;
  write_text(dir.path / "label.json", doc.dump());
  try {
    load_node_dataset(dir.path / "label.json");
    FAIL();
  } catch (const ParseError&) {
    FAIL() << "out-of-range label is a validation error, not a parse error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("labels[3]"), std::string::npos) << e.what();
  }

  doc = tiny_doc();
  doc["masks"]["val"] = {0};
  write_text(dir.path / "overlap.json", doc.dump());
  EXPECT_THROW(load_node_dataset(dir.path / "overlap.json"), ValidationError);
  EXPECT_THROW(load_node_dataset(dir.path / "missing.json"), ValidationError);
}

TEST(NodeDataset, RoundTrip) {
  TempDir dir("rt");
  const auto ds = load_node_dataset(kFixtures / "tiny_node.json");
  save_node_dataset(ds, dir.path / "copy.json");
  EXPECT_EQ(load_node_dataset(dir.path / "copy.json"), ds);
}

TEST(PlantedSplit, SizesAndDeterminism) {
  Rng rng(1);
  std::vector<int> labels(2000);
  for (auto& y : labels) y = static_cast<int>(rng.index(7));
  const auto a = planted_split(labels, 7, 3), b = planted_split(labels, 7, 3), c = planted_split(labels, 7, 4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.at("train").size(), 140u);
  EXPECT_EQ(a.at("val").size(), 500u);
  EXPECT_EQ(a.at("test").size(), 1000u);
  std::vector<int> per_class(7, 0);
  for (auto v : a.at("train")) ++per_class[static_cast<std::size_t>(labels[v])];
  for (int k : per_class) EXPECT_EQ(k, 20);
  std::set<std::size_t> all;
  for (const auto& [_, idx] : a) all.insert(idx.begin(), idx.end());
  EXPECT_EQ(all.size(), 1640u);
}

TEST(TuDataset, ToyFixtureParsesExactly) {
  const auto tu = load_tu_dataset(kFixtures / "TOY");
  EXPECT_EQ(tu.name, "TOY");
  ASSERT_EQ(tu.graphs.size(), 2u);
  EXPECT_EQ(tu.num_classes, 2u);
  EXPECT_EQ(tu.class_values, (std::vector<int>{-1, 1}));
  EXPECT_TRUE(tu.node_labels_present);
  EXPECT_EQ(tu.feature_dim, 3u);

  const auto& g0 = tu.graphs[0];
  EXPECT_EQ(g0.num_nodes, 3u);
  EXPECT_EQ(g0.label, 1);
  EXPECT_EQ(g0.edges, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {0, 2}, {1, 2}}));
  EXPECT_EQ(std::vector<double>(g0.features.data().begin(), g0.features.data().end()),
            (std::vector<double>{1, 0, 0, 0, 1, 0, 1, 0, 0}));

  const auto& g1 = tu.graphs[1];
  EXPECT_EQ(g1.num_nodes, 3u);
  EXPECT_EQ(g1.label, 0);
  EXPECT_EQ(g1.edges, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}}));
  EXPECT_EQ(std::vector<double>(g1.features.data().begin(), g1.features.data().end()),
            (std::vector<double>{0, 0, 1, 0, 0, 1, 0, 1, 0}));
}

TEST(TuDataset, DegreeFeaturesWithoutNodeLabels) {
  TempDir dir("deg");
  fs::create_directories(dir.path / "TOY");
  for (const char* f : {"TOY_A.txt", "TOY_graph_indicator.txt", "TOY_graph_labels.txt"})
    fs::copy_file(kFixtures / "TOY" / f, dir.path / "TOY" / f);
  const auto tu = load_tu_dataset(dir.path / "TOY");
  EXPECT_FALSE(tu.node_labels_present);
  EXPECT_EQ(tu.feature_dim, 3u);
  // degrees 2,2,2 and 1,1,0
  EXPECT_EQ(std::vector<double>(tu.graphs[1].features.data().begin(), tu.graphs[1].features.data().end()),
            (std::vector<double>{0, 1, 0, 0, 1, 0, 1, 0, 0}));
  TuOptions capped;
  capped.max_degree = 1;
  const auto c = load_tu_dataset(dir.path / "TOY", "TOY", capped);
  EXPECT_EQ(c.feature_dim, 2u);
  EXPECT_EQ(c.graphs[0].features.at(0, 1), 1.0);
}

TEST(TuDataset, InconsistentInputsAreRejected) {
  TempDir dir("tubad");
  fs::create_directories(dir.path / "TOY");
  for (const char* f : {"TOY_A.txt", "TOY_graph_indicator.txt", "TOY_node_labels.txt"})
    fs::copy_file(kFixtures / "TOY" / f, dir.path / "TOY" / f);
  write_text(dir.path / "TOY" / "TOY_graph_labels.txt", "1\n-1\n1\n");
  try {
    load_tu_dataset(dir.path / "TOY");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("graph 3 has no nodes"), std::string::npos) << e.what();
  }
  write_text(dir.path / "TOY" / "TOY_graph_labels.txt", "1\n-1\n");
  write_text(dir.path / "TOY" / "TOY_A.txt", "1, 4\n");
  EXPECT_THROW(load_tu_dataset(dir.path / "TOY"), ValidationError);
  write_text(dir.path / "TOY" / "TOY_A.txt", "1, x\n");
  EXPECT_THROW(load_tu_dataset(dir.path / "TOY"), ParseError);
}

TEST(GraphToHypergraph, Examples) {
  PlainGraph triangle{3, {{0, 1}, {0, 2}, {1, 2}}, Tensor::zeros({3, 1}), 0};
  const auto t = graph_to_hypergraph(triangle);
  EXPECT_EQ(t.hyperedges, (std::vector<std::vector<std::size_t>>{{0, 1, 2}, {0, 1, 2}, {0, 1, 2}}));
  PlainGraph path{3, {{0, 1}, {1, 2}}, Tensor::zeros({3, 1}), 0};
  EXPECT_EQ(graph_to_hypergraph(path).hyperedges, (std::vector<std::vector<std::size_t>>{{0, 1}, {0, 1, 2}, {1, 2}}));
  PlainGraph lonely{2, {}, Tensor::zeros({2, 1}), 0};
  const auto l = graph_to_hypergraph(lonely);
  EXPECT_EQ(l.hyperedges, (std::vector<std::vector<std::size_t>>{{0}, {1}}));
  EXPECT_EQ(l.edge_weights, (std::vector<double>{1, 1}));
}

TEST(GraphToHypergraph, PreservesNodeCount) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    PlainGraph g;
    g.num_nodes = 1 + rng.index(12);
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t k = 0; k < g.num_nodes * 2; ++k) {
      const std::size_t a = rng.index(g.num_nodes), b = rng.index(g.num_nodes);
      if (a != b) edges.insert(std::minmax(a, b));
    }
    g.edges.assign(edges.begin(), edges.end());
    const auto h = graph_to_hypergraph(g);
    EXPECT_EQ(h.num_nodes, g.num_nodes);
    EXPECT_EQ(h.num_edges(), g.num_nodes);
    EXPECT_NO_THROW(h.validate());
    EXPECT_TRUE(isolated_nodes(h).empty());
  }
}

TEST(Folds, BalancedExample) {
  std::vector<int> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = static_cast<int>(i % 2);
  const auto f = make_folds(labels, 10, 5);
  EXPECT_TRUE(f.stratified);
  for (const auto& fold : f.folds) {
    ASSERT_EQ(fold.size(), 10u);
    std::size_t ones = 0;
    for (auto i : fold) ones += static_cast<std::size_t>(labels[i]);
    EXPECT_EQ(ones, 5u);
  }
  EXPECT_EQ(make_folds(labels, 10, 5).folds, f.folds);
}

TEST(Folds, FallbackWhenClassTooSmall) {
  std::vector<int> labels(30, 0);
  labels[0] = labels[1] = 1;
  const auto f = make_folds(labels, 10, 1);
  EXPECT_FALSE(f.stratified);
  ASSERT_EQ(f.warnings.size(), 1u);
  std::size_t total = 0;
  for (const auto& fold : f.folds) total += fold.size();
  EXPECT_EQ(total, 30u);
  EXPECT_THROW(make_folds(labels, 31, 1), ConfigError);
}

TEST(Converters, LinqsCocitation) {
  TempDir dir("linqs");
  std::string content, cites;
  // 1700 papers so the standard split fits; papers cite within blocks of five.
  for (int p = 0; p < 1700; ++p) {
    content += "p" + std::to_string(p) + " " + (p % 2 ? "1 0" : "0 1") + " class" + std::to_string(p % 7) + "\n";
    if (p % 5 != 0) cites += "p" + std::to_string(p) + " p" + std::to_string(p - p % 5) + "\n";
  }
  cites += "p1 unknown\n";
  write_text(dir.path / "cora.content", content);
  write_text(dir.path / "cora.cites", cites);
  const auto ds = convert_linqs_cocitation(dir.path / "cora.content", dir.path / "cora.cites", "toy", 0);
  EXPECT_EQ(ds.num_nodes(), 1700u);
  EXPECT_EQ(ds.num_classes, 7u);
  EXPECT_EQ(ds.feature_dim(), 2u);
  // Each block head cites the four papers after it and is itself never cited, so
  // 340 co-citation hyperedges are followed by 340 patched singletons.
  EXPECT_EQ(ds.hypergraph.num_edges(), 680u);
  EXPECT_EQ(ds.hypergraph.hyperedges[0], (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(ds.warnings.size(), 340u);
  EXPECT_EQ(ds.mask("train").size(), 140u);
}

TEST(Converters, HypergcnJson) {
  TempDir dir("hgcn");
  nlohmann::json doc;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int v = 0; v < 10; ++v) {
    x.push_back({static_cast<double>(v), 1.0});
    y.push_back(v % 2);
  }
  doc["features"] = x;
  doc["labels"] = y;
  doc["hypergraph"] = {{"author a", {0, 1, 2}}, {"author b", {2, 3, 3}}, {"author c", {5, 6, 7, 8, 9}}};
  doc["splits"] = {{"train", {0, 5}}, {"test", {1, 2, 9}}};
  write_text(dir.path / "in.json", doc.dump());
  const auto ds = convert_hypergcn_json(dir.path / "in.json", "toy", 2, true);
  EXPECT_EQ(ds.num_nodes(), 10u);
  EXPECT_EQ(ds.hypergraph.num_edges(), 4u);  // three hyperedges plus the patched node 4
  EXPECT_EQ(ds.hypergraph.hyperedges[1], (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(ds.mask("train"), (std::vector<std::size_t>{0, 5}));
  EXPECT_EQ(ds.mask("test"), (std::vector<std::size_t>{1, 2, 9}));
  EXPECT_EQ(ds.mask("val").size(), 5u);
  EXPECT_EQ(ds.warnings.size(), 1u);
}
