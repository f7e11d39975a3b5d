#pragma once

// Dataset ingestion.
//
// Node datasets live in one canonical JSON document:
//
//   {
//     "format": "herald-node-dataset", "version": 1, "name": "...",
//     "num_nodes": |V|, "num_classes": C,
//     "hyperedges": [[v, ...], ...], "edge_weights": [...],      // weights optional
//     "features": [[x_00, x_01, ...], ...],                     // |V| dense rows
//     "labels": [y_0, ...],
//     "masks": {"train": [...], "val": [...], "test": [...]}
//   }
//
// Graph datasets use the TU flat-file layout (DS_A.txt, DS_graph_indicator.txt,
// DS_graph_labels.txt, optional DS_node_labels.txt). Each plain graph becomes a
// hypergraph with one hyperedge per node: the node together with its neighbours.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "herald/error.hpp"
#include "herald/hypergraph.hpp"
#include "herald/random.hpp"
#include "herald/tensor.hpp"

namespace herald {

inline constexpr const char* kNodeDatasetFormat = "herald-node-dataset";
inline constexpr int kNodeDatasetVersion = 1;

struct NodeDataset {
  std::string name;
  Hypergraph hypergraph;
  Tensor features;  // |V| x d
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::map<std::string, std::vector<std::size_t>> masks;
  std::vector<std::string> warnings;

  std::size_t num_nodes() const { return hypergraph.num_nodes; }
  std::size_t feature_dim() const { return features.cols(); }

  const std::vector<std::size_t>& mask(const std::string& which) const {
    auto it = masks.find(which);
    if (it == masks.end()) throw ValidationError("dataset has no '" + which + "' mask");
    return it->second;
  }

  void validate() const {
    hypergraph.validate();
    const std::size_t n = hypergraph.num_nodes;
    if (features.rows() != n) {
      throw ValidationError("features have " + std::to_string(features.rows()) + " rows for " +
                            std::to_string(n) + " nodes");
    }
    if (labels.size() != n) {
      throw ValidationError(std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                            " nodes");
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (labels[v] < 0 || static_cast<std::size_t>(labels[v]) >= num_classes) {
        throw ValidationError("labels[" + std::to_string(v) + "] = " + std::to_string(labels[v]) +
                              " is outside 0.." + std::to_string(num_classes - 1));
      }
    }
    std::vector<std::string> owner(n);
    for (const auto& [name, idx] : masks) {
      for (std::size_t v : idx) {
        if (v >= n) {
          throw ValidationError("mask '" + name + "' references node " + std::to_string(v));
        }
        if (!owner[v].empty()) {
          throw ValidationError("node " + std::to_string(v) + " is in both '" + owner[v] +
                                "' and '" + name + "' masks");
        }
        owner[v] = name;
      }
    }
    for (const char* required : {"train", "val", "test"}) mask(required);
  }

  bool operator==(const NodeDataset& o) const {
    const auto fa = features.data();
    const auto fb = o.features.data();
    return name == o.name && hypergraph == o.hypergraph && features.shape() == o.features.shape() &&
           std::equal(fa.begin(), fa.end(), fb.begin(), fb.end()) && labels == o.labels &&
           num_classes == o.num_classes && masks == o.masks;
  }
};

// Standard semi-supervised split: `per_class` training nodes from every class,
// then `val` and `test` nodes, all drawn from one seeded permutation.
inline std::map<std::string, std::vector<std::size_t>> planted_split(
    const std::vector<int>& labels, std::size_t num_classes, std::uint64_t seed,
    std::size_t per_class = 20, std::size_t val = 500, std::size_t test = 1000) {
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> taken(num_classes, 0);
  std::vector<std::size_t> train, rest;
  for (std::size_t v : order) {
    const auto c = static_cast<std::size_t>(labels[v]);
    if (taken[c] < per_class) {
      ++taken[c];
      train.push_back(v);
    } else {
      rest.push_back(v);
    }
  }
  if (rest.size() < val + test) {
    throw ConfigError("split needs " + std::to_string(val + test) + " nodes outside training, have " +
                      std::to_string(rest.size()));
  }
  std::map<std::string, std::vector<std::size_t>> m;
  m["train"] = train;
  m["val"].assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(val));
  m["test"].assign(rest.begin() + static_cast<std::ptrdiff_t>(val),
                   rest.begin() + static_cast<std::ptrdiff_t>(val + test));
  for (auto& [_, idx] : m) std::sort(idx.begin(), idx.end());
  return m;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T json_get(const nlohmann::json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline const nlohmann::json& json_at(const nlohmann::json& j, const std::string& key,
                                     const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(where + ": missing key '" + key + "'");
  return j.at(key);
}

}  // namespace detail

// Parses a canonical document. Isolated nodes receive singleton hyperedges,
// each recorded in `warnings`.
inline NodeDataset node_dataset_from_json(const nlohmann::json& doc) {
  using detail::json_at;
  using detail::json_get;
  if (json_get<std::string>(json_at(doc, "format", "document"), "format") != kNodeDatasetFormat) {
    throw ParseError("document is not a " + std::string(kNodeDatasetFormat));
  }
  const int version = json_get<int>(json_at(doc, "version", "document"), "version");
  if (version != kNodeDatasetVersion) {
    throw ParseError("unsupported dataset version " + std::to_string(version));
  }
  NodeDataset ds;
  ds.name = doc.value("name", std::string{});
  const auto n = json_get<std::size_t>(json_at(doc, "num_nodes", "document"), "num_nodes");
  ds.num_classes = json_get<std::size_t>(json_at(doc, "num_classes", "document"), "num_classes");
  ds.hypergraph.num_nodes = n;

  const auto& edges = json_at(doc, "hyperedges", "document");
  if (!edges.is_array()) throw ParseError("hyperedges: expected an array");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    ds.hypergraph.hyperedges.push_back(
        json_get<std::vector<std::size_t>>(edges[e], "hyperedges[" + std::to_string(e) + "]"));
  }
  if (doc.contains("edge_weights")) {
    ds.hypergraph.edge_weights = json_get<std::vector<double>>(doc.at("edge_weights"), "edge_weights");
  } else {
    ds.hypergraph.edge_weights.assign(ds.hypergraph.hyperedges.size(), 1.0);
  }

  const auto& rows = json_at(doc, "features", "document");
  if (!rows.is_array() || rows.size() != n) {
    throw ParseError("features: expected " + std::to_string(n) + " rows");
  }
  const std::size_t d = n ? rows[0].size() : 0;
  std::vector<double> x;
  x.reserve(n * d);
  for (std::size_t v = 0; v < n; ++v) {
    const std::string where = "features[" + std::to_string(v) + "]";
    if (!rows[v].is_array() || rows[v].size() != d) {
      throw ParseError(where + ": expected " + std::to_string(d) + " values");
    }
    for (const auto& value : rows[v]) x.push_back(json_get<double>(value, where));
  }
  ds.features = Tensor({n, d}, std::move(x));
  ds.labels = json_get<std::vector<int>>(json_at(doc, "labels", "document"), "labels");
  const auto& masks = json_at(doc, "masks", "document");
  if (!masks.is_object()) throw ParseError("masks: expected an object");
  for (const auto& [key, value] : masks.items()) {
    ds.masks[key] = json_get<std::vector<std::size_t>>(value, "masks." + key);
  }

  // Membership and weights are checked before patching so errors name the file's own indices.
  ds.hypergraph.validate();
  for (std::size_t v : patch_isolated_nodes(ds.hypergraph)) {
    ds.warnings.push_back("node " + std::to_string(v) +
                          " belongs to no hyperedge; added singleton hyperedge");
  }
  ds.validate();
  return ds;
}

inline NodeDataset load_node_dataset(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line number for the message
    const auto offset = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n');
    throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
  try {
    return node_dataset_from_json(doc);
  } catch (const ValidationError& e) {
    if (dynamic_cast<const ParseError*>(&e)) throw ParseError(path.string() + ": " + e.what());
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline nlohmann::json node_dataset_to_json(const NodeDataset& ds) {
  nlohmann::json rows = nlohmann::json::array();
  const std::size_t d = ds.features.cols();
  const auto x = ds.features.data();
  for (std::size_t v = 0; v < ds.num_nodes(); ++v) {
    rows.push_back(std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(v * d),
                                       x.begin() + static_cast<std::ptrdiff_t>((v + 1) * d)));
  }
  nlohmann::json masks = nlohmann::json::object();
  for (const auto& [key, idx] : ds.masks) masks[key] = idx;
  return {{"format", kNodeDatasetFormat},
          {"version", kNodeDatasetVersion},
          {"name", ds.name},
          {"num_nodes", ds.num_nodes()},
          {"num_classes", ds.num_classes},
          {"hyperedges", ds.hypergraph.hyperedges},
          {"edge_weights", ds.hypergraph.edge_weights},
          {"features", rows},
          {"labels", ds.labels},
          {"masks", masks}};
}

inline void save_node_dataset(const NodeDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << node_dataset_to_json(ds).dump() << '\n';
}

// ------------------------------------------------------------ graph datasets

struct PlainGraph {
  std::size_t num_nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // undirected, first < second, unique
  Tensor features;                                         // num_nodes x feature_dim
  int label = 0;
};

struct TuDataset {
  std::string name;
  std::vector<PlainGraph> graphs;
  std::size_t num_classes = 0;
  std::vector<int> class_values;  // original label of class id c
  bool node_labels_present = false;
  std::size_t feature_dim = 0;
};

struct TuOptions {
  // Degree one-hot width is min(max degree, cap) + 1; larger degrees share the last slot.
  std::size_t max_degree = 64;
};

namespace detail {

inline std::vector<std::vector<long long>> read_int_rows(const std::filesystem::path& path,
                                                         std::size_t expected_cols) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::vector<std::vector<long long>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<long long> row;
    std::string token;
    while (ss >> token) {
      try {
        std::size_t used = 0;
        row.push_back(std::stoll(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad integer '" + token + "'");
      }
    }
    if (row.empty()) continue;
    if (row.size() != expected_cols) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(expected_cols) + " values, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Tensor one_hot(const std::vector<std::size_t>& ids, std::size_t width) {
  Tensor t = Tensor::zeros({ids.size(), width});
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < ids.size(); ++i) d[i * width + ids[i]] = 1.0;
  return t;
}

}  // namespace detail

inline TuDataset load_tu_dataset(const std::filesystem::path& dir, std::string name = {},
                                 const TuOptions& options = {}) {
  if (name.empty()) name = dir.filename().string();
  if (name.empty()) name = dir.parent_path().filename().string();
  auto file = [&](const std::string& suffix) { return dir / (name + "_" + suffix + ".txt"); };

  const auto indicator = detail::read_int_rows(file("graph_indicator"), 1);
  const auto graph_labels = detail::read_int_rows(file("graph_labels"), 1);
  const auto adjacency = detail::read_int_rows(file("A"), 2);
  const bool has_node_labels = std::filesystem::exists(file("node_labels"));

  const std::size_t total_nodes = indicator.size();
  const std::size_t num_graphs = graph_labels.size();
  if (num_graphs == 0) throw ValidationError(name + ": no graphs");

  std::vector<std::size_t> graph_of(total_nodes), local(total_nodes);
  std::vector<std::size_t> sizes(num_graphs, 0);
  for (std::size_t v = 0; v < total_nodes; ++v) {
    const long long g = indicator[v][0];
    if (g < 1 || static_cast<std::size_t>(g) > num_graphs) {
      throw ValidationError(name + ": node " + std::to_string(v + 1) + " assigned to graph " +
                            std::to_string(g) + " but there are " + std::to_string(num_graphs) +
                            " graph labels");
    }
    graph_of[v] = static_cast<std::size_t>(g - 1);
    local[v] = sizes[graph_of[v]]++;
  }
  for (std::size_t g = 0; g < num_graphs; ++g) {
    if (sizes[g] == 0) {
      throw ValidationError(name + ": graph " + std::to_string(g + 1) + " has no nodes");
    }
  }

  TuDataset ds;
  ds.name = name;
  ds.node_labels_present = has_node_labels;
  std::set<long long> distinct;
  for (const auto& r : graph_labels) distinct.insert(r[0]);
  ds.class_values.assign(distinct.begin(), distinct.end());
  ds.num_classes = ds.class_values.size();
  ds.graphs.resize(num_graphs);
  for (std::size_t g = 0; g < num_graphs; ++g) {
    ds.graphs[g].num_nodes = sizes[g];
    const auto it = std::lower_bound(ds.class_values.begin(), ds.class_values.end(), graph_labels[g][0]);
    ds.graphs[g].label = static_cast<int>(it - ds.class_values.begin());
  }

  std::vector<std::set<std::pair<std::size_t, std::size_t>>> edge_sets(num_graphs);
  for (std::size_t k = 0; k < adjacency.size(); ++k) {
    const long long a = adjacency[k][0], b = adjacency[k][1];
    if (a < 1 || b < 1 || static_cast<std::size_t>(a) > total_nodes ||
        static_cast<std::size_t>(b) > total_nodes) {
      throw ValidationError(name + ": adjacency row " + std::to_string(k + 1) +
                            " references a node outside 1.." + std::to_string(total_nodes));
    }
    const auto u = static_cast<std::size_t>(a - 1), v = static_cast<std::size_t>(b - 1);
    if (graph_of[u] != graph_of[v]) {
      throw ValidationError(name + ": adjacency row " + std::to_string(k + 1) + " joins graphs " +
                            std::to_string(graph_of[u] + 1) + " and " + std::to_string(graph_of[v] + 1));
    }
    if (u == v) continue;
    edge_sets[graph_of[u]].insert(std::minmax(local[u], local[v]));
  }
  for (std::size_t g = 0; g < num_graphs; ++g) {
    ds.graphs[g].edges.assign(edge_sets[g].begin(), edge_sets[g].end());
  }

  // Node features: one-hot node labels, or one-hot capped degree.
  std::vector<std::size_t> feature_id(total_nodes);
  if (has_node_labels) {
    const auto node_labels = detail::read_int_rows(file("node_labels"), 1);
    if (node_labels.size() != total_nodes) {
      throw ValidationError(name + ": " + std::to_string(node_labels.size()) + " node labels for " +
                            std::to_string(total_nodes) + " nodes");
    }
    std::set<long long> values;
    for (const auto& r : node_labels) values.insert(r[0]);
    const std::vector<long long> sorted(values.begin(), values.end());
    for (std::size_t v = 0; v < total_nodes; ++v) {
      feature_id[v] = static_cast<std::size_t>(
          std::lower_bound(sorted.begin(), sorted.end(), node_labels[v][0]) - sorted.begin());
    }
    ds.feature_dim = sorted.size();
  } else {
    std::vector<std::vector<std::size_t>> degree(num_graphs);
    std::size_t max_seen = 0;
    for (std::size_t g = 0; g < num_graphs; ++g) {
      degree[g].assign(sizes[g], 0);
      for (const auto& [a, b] : ds.graphs[g].edges) {
        ++degree[g][a];
        ++degree[g][b];
      }
      for (std::size_t d : degree[g]) max_seen = std::max(max_seen, d);
    }
    const std::size_t cap = std::min(max_seen, options.max_degree);
    std::vector<std::size_t> cursor(num_graphs, 0);
    for (std::size_t v = 0; v < total_nodes; ++v) {
      const std::size_t g = graph_of[v];
      feature_id[v] = std::min(degree[g][local[v]], cap);
    }
    ds.feature_dim = cap + 1;
  }
  std::vector<std::vector<std::size_t>> per_graph(num_graphs);
  for (std::size_t v = 0; v < total_nodes; ++v) per_graph[graph_of[v]].push_back(feature_id[v]);
  for (std::size_t g = 0; g < num_graphs; ++g) {
    ds.graphs[g].features = detail::one_hot(per_graph[g], ds.feature_dim);
  }
  return ds;
}

// One hyperedge per node v: {v} together with all neighbours of v.
inline Hypergraph graph_to_hypergraph(const PlainGraph& g) {
  std::vector<std::vector<std::size_t>> members(g.num_nodes);
  for (std::size_t v = 0; v < g.num_nodes; ++v) members[v].push_back(v);
  for (const auto& [a, b] : g.edges) {
    members[a].push_back(b);
    members[b].push_back(a);
  }
  for (auto& m : members) std::sort(m.begin(), m.end());
  return Hypergraph(g.num_nodes, std::move(members));
}

struct GraphSample {
  Hypergraph hypergraph;
  Tensor features;
  int label = 0;
};

struct GraphDataset {
  std::string name;
  std::vector<GraphSample> samples;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;

  std::vector<int> labels() const {
    std::vector<int> y;
    for (const auto& s : samples) y.push_back(s.label);
    return y;
  }
};

inline GraphDataset build_graph_dataset(const TuDataset& tu) {
  GraphDataset ds;
  ds.name = tu.name;
  ds.num_classes = tu.num_classes;
  ds.feature_dim = tu.feature_dim;
  for (const auto& g : tu.graphs) ds.samples.push_back({graph_to_hypergraph(g), g.features, g.label});
  return ds;
}

// ---------------------------------------------------------------------- folds

struct Folds {
  std::vector<std::vector<std::size_t>> folds;
  bool stratified = true;
  std::vector<std::string> warnings;

  std::vector<std::size_t> complement(std::size_t fold) const {
    std::vector<std::size_t> rest;
    for (std::size_t f = 0; f < folds.size(); ++f)
      if (f != fold) rest.insert(rest.end(), folds[f].begin(), folds[f].end());
    std::sort(rest.begin(), rest.end());
    return rest;
  }
};

// k-way partition of 0..n-1, stratified by label when every class has at
// least k members. Items are dealt round-robin after a seeded shuffle, so fold
// sizes differ by at most one.
inline Folds make_folds(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > labels.size()) {
    throw ConfigError("cannot split " + std::to_string(labels.size()) + " items into " +
                      std::to_string(k) + " folds");
  }
  Folds out;
  out.folds.resize(k);
  Rng rng(seed);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [c, members] : by_class) {
    if (members.size() < k) {
      out.stratified = false;
      out.warnings.push_back("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                             " members, fewer than " + std::to_string(k) +
                             " folds; using an unstratified split");
      break;
    }
  }
  std::size_t cursor = 0;
  if (out.stratified) {
    for (auto& [c, members] : by_class) {
      rng.shuffle(members);
      for (std::size_t i : members) out.folds[cursor++ % k].push_back(i);
    }
  } else {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rng.shuffle(all);
    for (std::size_t i : all) out.folds[cursor++ % k].push_back(i);
  }
  for (auto& f : out.folds) std::sort(f.begin(), f.end());
  return out;
}

// ----------------------------------------------------------------- converters

// LINQS citation release (<name>.content, <name>.cites) to a co-citation
// hypergraph: every citing paper contributes one hyperedge holding the papers it
// cites. Hyperedges with fewer than two members are dropped.
inline NodeDataset convert_linqs_cocitation(const std::filesystem::path& content_path,
                                            const std::filesystem::path& cites_path,
                                            const std::string& name, std::uint64_t split_seed) {
  std::ifstream content(content_path);
  if (!content) throw ValidationError("cannot open '" + content_path.string() + "'");
  std::map<std::string, std::size_t> index;
  std::map<std::string, int> class_ids;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> class_names;
  std::vector<std::string> raw_labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(content, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() < 3) throw ParseError(content_path.string() + ":" + std::to_string(lineno) + ": too few fields");
    std::vector<double> row;
    for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
      try {
        row.push_back(std::stod(tok[i]));
      } catch (const std::exception&) {
        throw ParseError(content_path.string() + ":" + std::to_string(lineno) + ": bad feature '" + tok[i] + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(content_path.string() + ":" + std::to_string(lineno) + ": feature width changes");
    }
    if (!index.emplace(tok.front(), rows.size()).second) {
      throw ValidationError(content_path.string() + ":" + std::to_string(lineno) + ": duplicate paper " + tok.front());
    }
    rows.push_back(std::move(row));
    raw_labels.push_back(tok.back());
  }
  std::set<std::string> names(raw_labels.begin(), raw_labels.end());
  int next = 0;
  for (const auto& n : names) class_ids[n] = next++;

  std::map<std::size_t, std::set<std::size_t>> cited_by;
  std::ifstream cites(cites_path);
  if (!cites) throw ValidationError("cannot open '" + cites_path.string() + "'");
  lineno = 0;
  while (std::getline(cites, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string cited, citing;
    if (!(ss >> cited >> citing)) continue;
    auto a = index.find(cited), b = index.find(citing);
    if (a == index.end() || b == index.end()) continue;
    cited_by[b->second].insert(a->second);
  }

  NodeDataset ds;
  ds.name = name;
  const std::size_t n = rows.size();
  ds.hypergraph.num_nodes = n;
  for (const auto& [citing, cited] : cited_by) {
    if (cited.size() < 2) continue;
    ds.hypergraph.hyperedges.emplace_back(cited.begin(), cited.end());
    ds.hypergraph.edge_weights.push_back(1.0);
  }
  const std::size_t d = n ? rows.front().size() : 0;
  std::vector<double> x;
  x.reserve(n * d);
  for (const auto& r : rows) x.insert(x.end(), r.begin(), r.end());
  ds.features = Tensor({n, d}, std::move(x));
  for (const auto& l : raw_labels) ds.labels.push_back(class_ids[l]);
  ds.num_classes = names.size();
  for (std::size_t v : patch_isolated_nodes(ds.hypergraph)) {
    ds.warnings.push_back("node " + std::to_string(v) + " belongs to no hyperedge; added singleton hyperedge");
  }
  ds.masks = planted_split(ds.labels, ds.num_classes, split_seed);
  ds.validate();
  return ds;
}

// Intermediate JSON written by tools/hypergcn_dump.py from the pickled
// HyperGCN-style release: {"features": [[...]], "labels": [...],
// "hypergraph": {key: [nodes]} | [[nodes]], optional "splits": {"train", "test"}}.
inline NodeDataset convert_hypergcn_json(const std::filesystem::path& path, const std::string& name,
                                         std::uint64_t split_seed, bool keep_upstream_split = false) {
  using detail::json_at;
  using detail::json_get;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  NodeDataset ds;
  ds.name = name;
  const auto rows = json_get<std::vector<std::vector<double>>>(json_at(doc, "features", "document"), "features");
  const std::size_t n = rows.size();
  const std::size_t d = n ? rows.front().size() : 0;
  std::vector<double> x;
  x.reserve(n * d);
  for (std::size_t v = 0; v < n; ++v) {
    if (rows[v].size() != d) throw ParseError("features[" + std::to_string(v) + "]: ragged row");
    x.insert(x.end(), rows[v].begin(), rows[v].end());
  }
  ds.features = Tensor({n, d}, std::move(x));
  ds.labels = json_get<std::vector<int>>(json_at(doc, "labels", "document"), "labels");
  int max_label = -1;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  ds.hypergraph.num_nodes = n;
  const auto& hg = json_at(doc, "hypergraph", "document");
  auto add_edge = [&](const nlohmann::json& members, const std::string& where) {
    auto m = json_get<std::vector<std::size_t>>(members, where);
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    if (m.empty()) return;
    ds.hypergraph.hyperedges.push_back(std::move(m));
    ds.hypergraph.edge_weights.push_back(1.0);
  };
  if (hg.is_object()) {
    for (const auto& [key, members] : hg.items()) add_edge(members, "hypergraph." + key);
  } else if (hg.is_array()) {
    for (std::size_t e = 0; e < hg.size(); ++e) add_edge(hg[e], "hypergraph[" + std::to_string(e) + "]");
  } else {
    throw ParseError("hypergraph: expected an object or array");
  }
  ds.hypergraph.validate();
  for (std::size_t v : patch_isolated_nodes(ds.hypergraph)) {
    ds.warnings.push_back("node " + std::to_string(v) + " belongs to no hyperedge; added singleton hyperedge");
  }
  if (keep_upstream_split && doc.contains("splits")) {
    const auto& s = doc.at("splits");
    auto train = json_get<std::vector<std::size_t>>(json_at(s, "train", "splits"), "splits.train");
    auto test = json_get<std::vector<std::size_t>>(json_at(s, "test", "splits"), "splits.test");
    std::vector<char> used(n, 0);
    for (auto v : train) used.at(v) = 1;
    for (auto v : test) used.at(v) = 1;
    std::vector<std::size_t> pool;
    for (std::size_t v = 0; v < n; ++v)
      if (!used[v]) pool.push_back(v);
    Rng rng(split_seed);
    rng.shuffle(pool);
    pool.resize(std::min<std::size_t>(pool.size(), 500));
    std::sort(pool.begin(), pool.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    ds.masks = {{"train", train}, {"val", pool}, {"test", test}};
  } else {
    ds.masks = planted_split(ds.labels, ds.num_classes, split_seed);
  }
  ds.validate();
  return ds;
}

}  // namespace herald
