#pragma once

// Command-line front end: train-node, train-graph, convert-dataset,
// eval-checkpoint and report. `run` returns the process exit status:
//
//   0 success, 2 usage or configuration error, 3 data validation error,
//   4 numerical failure, 1 anything else.
//
// Run directory written by the training commands:
//
//   config.json                   train + model configuration, dataset, data path
//   metrics.jsonl                 one JSON object per epoch (and per fold)
//   checkpoint.json               node task: best-validation weights
//   checkpoint-fold<k>.json       graph task: final weights of fold k
//   summary.json                  final record(s) and aggregate accuracy

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "herald/dataset.hpp"
#include "herald/error.hpp"
#include "herald/model.hpp"
#include "herald/train.hpp"

namespace herald::cli {

namespace fs = std::filesystem;

inline constexpr const char* kDataRootEnv = "HERALD_DATA_ROOT";

inline fs::path data_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') return env;
  return "data";
}

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// A path to an existing file wins; otherwise <root>/<name>.json, then <root>/<name>/<name>.json.
inline fs::path resolve_node_dataset(const std::string& dataset, const fs::path& root) {
  if (fs::is_regular_file(dataset)) return dataset;
  for (const fs::path& p : {root / (dataset + ".json"), root / dataset / (dataset + ".json"),
                            root / dataset / "dataset.json"}) {
    if (fs::is_regular_file(p)) return p;
  }
  throw ValidationError("node dataset '" + dataset + "' not found (looked under " + root.string() +
                        "; set --data-root or " + kDataRootEnv + ")");
}

inline std::string tu_name(const std::string& dataset) {
  const std::string u = upper(dataset);
  if (u == "IMDB-B") return "IMDB-BINARY";
  if (u == "IMDB-M") return "IMDB-MULTI";
  if (u == "PTC") return "PTC_MR";
  return dataset;
}

// Returns (directory, file prefix) of a TU dataset.
inline std::pair<fs::path, std::string> resolve_tu_dataset(const std::string& dataset, const fs::path& root) {
  if (fs::is_directory(dataset)) {
    const fs::path dir = fs::path(dataset).lexically_normal();
    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    return {dir, name};
  }
  const std::string name = tu_name(dataset);
  for (const std::string& candidate : {name, upper(name), dataset}) {
    for (const fs::path& dir : {root / candidate, root / candidate / candidate}) {
      if (fs::is_regular_file(dir / (candidate + "_A.txt"))) return {dir, candidate};
    }
  }
  throw ValidationError("graph dataset '" + dataset + "' not found (looked under " + root.string() +
                        "; set --data-root or " + kDataRootEnv + ")");
}

// Backbone depth per benchmark; anything else falls back to 3.
inline std::size_t default_graph_depth(const std::string& dataset) {
  static const std::map<std::string, std::size_t> depth = {
      {"MUTAG", 4}, {"PTC_MR", 2}, {"IMDB-BINARY", 3}, {"PROTEINS", 3}, {"NCI1", 2}, {"COLLAB", 3}};
  auto it = depth.find(upper(tu_name(dataset)));
  return it == depth.end() ? 3 : it->second;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << std::setw(2) << j << '\n';
}

inline std::string percent(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * x;
  return os.str();
}

// Options shared by both training commands.
struct TrainFlags {
  std::string dataset;
  std::string herald = "off";
  std::string optimizer = "adam";
  std::string out;
  std::string data_root;
  std::optional<double> fixed_a;
  bool no_bias = false;
  TrainConfig config;
};

inline void add_train_flags(CLI::App& cmd, TrainFlags& f) {
  cmd.add_option("--dataset", f.dataset, "dataset name (under the data root) or path")->required();
  cmd.add_option("--herald", f.herald, "adaptor mode")->check(CLI::IsMember({"off", "on", "fast"}));
  cmd.add_option("--layers", f.config.layers, "number of convolution layers");
  cmd.add_option("--hidden", f.config.hidden, "hidden width");
  cmd.add_option("--herald-dim", f.config.herald_dim, "adaptor transform width h");
  cmd.add_option("--herald-layers", f.config.herald_layers, "1-based layers carrying the adaptor");
  cmd.add_option("--lr", f.config.lr, "learning rate");
  cmd.add_option("--weight-decay", f.config.weight_decay, "L2 weight decay");
  cmd.add_option("--optimizer", f.optimizer, "optimizer")->check(CLI::IsMember({"adam", "sgd"}));
  cmd.add_option("--epochs", f.config.epochs, "training epochs");
  cmd.add_option("--seed", f.config.seed, "random seed");
  cmd.add_option("--sigma", f.config.sigma, "Gaussian kernel bandwidth");
  cmd.add_option("--reg-weight", f.config.reg_weight, "weight of the topology regularizer");
  cmd.add_option("--fixed-a", f.fixed_a, "constant blend strength instead of the layer schedule");
  cmd.add_option("--dropout", f.config.dropout, "dropout rate after hidden layers");
  cmd.add_flag("--no-bias", f.no_bias, "disable layer biases");
  cmd.add_option("--out", f.out, "run directory");
  cmd.add_option("--data-root", f.data_root, std::string("dataset root (default $") + kDataRootEnv + " or ./data)");
}

inline TrainConfig finish_config(TrainFlags& f) {
  TrainConfig c = f.config;
  c.herald = parse_herald_mode(f.herald);
  c.optimizer = parse_optimizer(f.optimizer);
  c.bias = !f.no_bias;
  if (f.fixed_a) {
    c.a_schedule = false;
    c.fixed_a = *f.fixed_a;
  }
  c.validate();
  return c;
}

class MetricsLog {
 public:
  explicit MetricsLog(const fs::path& path) : out_(path) {
    if (!out_) throw ValidationError("cannot write '" + path.string() + "'");
  }
  void write(const RunRecord& r, const EpochMetrics& m) {
    nlohmann::json j = m;
    j["seed"] = r.seed;
    if (r.fold >= 0) j["fold"] = r.fold;
    out_ << j.dump() << '\n';
  }

 private:
  std::ofstream out_;
};

inline int cmd_train_node(TrainFlags& f, int runs, std::optional<std::uint64_t> split_seed,
                          std::ostream& out, std::ostream& err) {
  TrainConfig config = finish_config(f);
  if (runs < 1) throw ConfigError("--runs must be >= 1");
  const fs::path path = resolve_node_dataset(f.dataset, data_root(f.data_root));
  NodeDataset data = load_node_dataset(path);
  if (data.name.empty()) data.name = f.dataset;
  for (const auto& w : data.warnings) err << "warning: " << w << '\n';
  if (split_seed) data.masks = planted_split(data.labels, data.num_classes, *split_seed);

  const fs::path root = f.out.empty() ? fs::path("runs") / (f.dataset + "-" + f.herald) : fs::path(f.out);
  std::vector<double> accuracies;
  std::vector<std::string> dirs;
  for (int r = 0; r < runs; ++r) {
    TrainConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(r);
    const fs::path dir = runs == 1 ? root : root / ("seed-" + std::to_string(c.seed));
    fs::create_directories(dir);
    write_json(dir / "config.json", {{"task", "node"},
                                     {"dataset", data.name},
                                     {"dataset_path", path.string()},
                                     {"split_seed", split_seed ? nlohmann::json(*split_seed) : nlohmann::json(nullptr)},
                                     {"train", c}});
    MetricsLog log(dir / "metrics.jsonl");
    auto result = train_node(c, data, [&log](const RunRecord& rec, const EpochMetrics& m) { log.write(rec, m); });
    save_checkpoint(result.model, (dir / "checkpoint.json").string());
    write_json(dir / "summary.json", {{"kind", "node-run"},
                                      {"herald", f.herald},
                                      {"record", result.record},
                                      {"warnings", data.warnings}});
    accuracies.push_back(result.record.test_accuracy);
    dirs.push_back(dir.string());
    out << data.name << " herald=" << f.herald << " seed=" << c.seed << " best_epoch=" << result.record.best_epoch
        << " val=" << percent(result.record.best_val_accuracy) << " test=" << percent(result.record.test_accuracy)
        << " params=" << result.record.parameter_count << '\n';
  }
  if (runs > 1) {
    const Summary s = summarize(accuracies);
    write_json(root / "summary.json", {{"kind", "node-aggregate"},
                                       {"dataset", data.name},
                                       {"herald", f.herald},
                                       {"accuracies", accuracies},
                                       {"mean", s.mean},
                                       {"std", s.std},
                                       {"runs", dirs}});
    out << data.name << " herald=" << f.herald << " runs=" << runs << " test=" << percent(s.mean) << " +- "
        << percent(s.std) << '\n';
  }
  return 0;
}

inline int cmd_train_graph(TrainFlags& f, bool layers_given, bool hidden_given, std::size_t max_degree,
                           std::ostream& out, std::ostream& err) {
  if (!layers_given) f.config.layers = default_graph_depth(f.dataset);
  if (!hidden_given) f.config.hidden = 32;
  TrainConfig config = finish_config(f);
  const auto [dir_in, name] = resolve_tu_dataset(f.dataset, data_root(f.data_root));
  TuOptions tu;
  tu.max_degree = max_degree;
  const GraphDataset data = build_graph_dataset(load_tu_dataset(dir_in, name, tu));

  const fs::path dir = f.out.empty() ? fs::path("runs") / (name + "-" + f.herald) : fs::path(f.out);
  fs::create_directories(dir);
  write_json(dir / "config.json", {{"task", "graph"},
                                   {"dataset", data.name},
                                   {"dataset_path", dir_in.string()},
                                   {"max_degree", max_degree},
                                   {"train", config}});
  MetricsLog log(dir / "metrics.jsonl");
  auto cv = train_graph(config, data, [&log](const RunRecord& rec, const EpochMetrics& m) { log.write(rec, m); });
  for (const auto& w : cv.warnings) err << "warning: " << w << '\n';
  std::vector<RunRecord> records;
  for (std::size_t k = 0; k < cv.folds.size(); ++k) {
    save_checkpoint(cv.folds[k].model, (dir / ("checkpoint-fold" + std::to_string(k) + ".json")).string());
    records.push_back(cv.folds[k].record);
  }
  write_json(dir / "summary.json", {{"kind", "graph-cv"},
                                    {"dataset", data.name},
                                    {"herald", f.herald},
                                    {"accuracies", cv.accuracies},
                                    {"mean", cv.summary.mean},
                                    {"std", cv.summary.std},
                                    {"parameter_count", records.front().parameter_count},
                                    {"folds", records},
                                    {"warnings", cv.warnings}});
  out << data.name << " herald=" << f.herald << " folds=" << cv.accuracies.size() << " test="
      << percent(cv.summary.mean) << " +- " << percent(cv.summary.std)
      << " params=" << records.front().parameter_count << '\n';
  return 0;
}

struct ReportRow {
  std::string task, dataset, herald;
  std::vector<double> accuracies;
  std::size_t parameter_count = 0;
};

// Collects node-run and graph-cv summaries below `paths`, grouped by (task, dataset, mode).
inline std::vector<ReportRow> collect_report(const std::vector<std::string>& paths) {
  std::map<std::tuple<std::string, std::string, std::string>, ReportRow> groups;
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_regular_file(p)) {
      files.emplace_back(p);
    } else if (fs::is_directory(p)) {
      for (const auto& entry : fs::recursive_directory_iterator(p))
        if (entry.is_regular_file() && entry.path().filename() == "summary.json") files.push_back(entry.path());
    } else {
      throw ValidationError("report: '" + p + "' does not exist");
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(detail::read_file(file));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string() + ": " + e.what());
    }
    const std::string kind = j.value("kind", "");
    try {
      if (kind == "node-run") {
        const auto rec = j.at("record").get<RunRecord>();
        auto& row = groups[{"node", rec.dataset, j.at("herald").get<std::string>()}];
        row.task = "node";
        row.dataset = rec.dataset;
        row.herald = j.at("herald").get<std::string>();
        row.accuracies.push_back(rec.test_accuracy);
        row.parameter_count = rec.parameter_count;
      } else if (kind == "graph-cv") {
        const std::string dataset = j.at("dataset").get<std::string>();
        const std::string herald = j.at("herald").get<std::string>();
        auto& row = groups[{"graph", dataset, herald}];
        row.task = "graph";
        row.dataset = dataset;
        row.herald = herald;
        for (double a : j.at("accuracies").get<std::vector<double>>()) row.accuracies.push_back(a);
        row.parameter_count = j.at("parameter_count").get<std::size_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string() + ": " + e.what());
    }
  }
  std::vector<ReportRow> rows;
  for (auto& [_, row] : groups) rows.push_back(std::move(row));
  return rows;
}

inline int cmd_report(const std::vector<std::string>& paths, bool as_json, std::ostream& out) {
  const auto rows = collect_report(paths);
  if (as_json) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      const Summary s = summarize(r.accuracies);
      arr.push_back({{"task", r.task}, {"dataset", r.dataset}, {"herald", r.herald}, {"count", s.count},
                     {"mean", s.mean}, {"std", s.std}, {"parameter_count", r.parameter_count}});
    }
    out << std::setw(2) << arr << '\n';
    return 0;
  }
  out << std::left << std::setw(7) << "task" << std::setw(24) << "dataset" << std::setw(8) << "herald"
      << std::setw(6) << "n" << std::setw(18) << "accuracy (%)" << "params\n";
  for (const auto& r : rows) {
    const Summary s = summarize(r.accuracies);
    out << std::left << std::setw(7) << r.task << std::setw(24) << r.dataset << std::setw(8) << r.herald
        << std::setw(6) << s.count << std::setw(18) << (percent(s.mean) + " +- " + percent(s.std))
        << r.parameter_count << '\n';
  }
  return 0;
}

inline int cmd_eval_checkpoint(const std::string& checkpoint, const std::string& dataset, const std::string& mask,
                               const std::string& root_flag, std::size_t max_degree, std::ostream& out) {
  const Model model = load_checkpoint(checkpoint);
  const fs::path root = data_root(root_flag);
  double accuracy = 0.0;
  std::size_t count = 0;
  if (model.config().task == Task::node) {
    const NodeDataset data = load_node_dataset(resolve_node_dataset(dataset, root));
    const auto& idx = data.mask(mask);
    NoGrad guard;
    const Tensor logits = forward_node(model, data.features, make_topology(data.hypergraph)).logits;
    accuracy = evaluate(logits, data.labels, idx);
    count = idx.size();
  } else {
    const auto [dir, name] = resolve_tu_dataset(dataset, root);
    TuOptions tu;
    tu.max_degree = max_degree;
    const GraphDataset data = build_graph_dataset(load_tu_dataset(dir, name, tu));
    std::vector<std::size_t> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    accuracy = evaluate_graphs(model, data, graph_contexts(data), all);
    count = all.size();
  }
  out << "accuracy=" << percent(accuracy) << " n=" << count << '\n';
  return 0;
}

inline int cmd_convert(const std::string& format, const std::string& input, const std::string& output,
                       std::string name, std::uint64_t split_seed, bool upstream_split, std::ostream& out,
                       std::ostream& err) {
  NodeDataset ds;
  if (format == "linqs") {
    const fs::path dir(input);
    if (name.empty()) name = dir.filename().string();
    std::string stem = name;
    if (!fs::exists(dir / (stem + ".content"))) stem = "cora";
    ds = convert_linqs_cocitation(dir / (stem + ".content"), dir / (stem + ".cites"), name, split_seed);
  } else {
    if (name.empty()) name = fs::path(input).stem().string();
    ds = convert_hypergcn_json(input, name, split_seed, upstream_split);
  }
  for (const auto& w : ds.warnings) err << "warning: " << w << '\n';
  save_node_dataset(ds, output);
  out << ds.name << ": " << ds.num_nodes() << " nodes, " << ds.hypergraph.num_edges() << " hyperedges, "
      << ds.num_classes << " classes, " << ds.feature_dim() << " features -> " << output << '\n';
  return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Hypergraph convolution with a learned topology adaptor"};
  app.require_subcommand(1);

  TrainFlags node_flags;
  int runs = 1;
  std::optional<std::uint64_t> split_seed;
  auto* node = app.add_subcommand("train-node", "train node classification on a canonical dataset");
  add_train_flags(*node, node_flags);
  node->add_option("--patience", node_flags.config.patience, "early-stopping patience on validation accuracy (0 disables)");
  node->add_option("--runs", runs, "number of seeds, starting at --seed");
  node->add_option("--split-seed", split_seed, "resample the planted split with this seed");

  TrainFlags graph_flags;
  std::size_t max_degree = 64;
  auto* graph = app.add_subcommand("train-graph", "k-fold cross-validated graph classification on a TU dataset");
  add_train_flags(*graph, graph_flags);
  graph->add_option("--folds", graph_flags.config.folds, "cross-validation folds");
  graph->add_option("--batch-size", graph_flags.config.batch_size, "graphs per optimizer step");
  graph->add_option("--max-degree", max_degree, "cap for one-hot degree features");

  std::string format = "hypergcn-json", input, output, name;
  std::uint64_t convert_seed = 0;
  bool upstream_split = false;
  auto* convert = app.add_subcommand("convert-dataset", "convert an upstream release to the canonical node format");
  convert->add_option("--format", format, "input format")->check(CLI::IsMember({"linqs", "hypergcn-json"}));
  convert->add_option("--input", input, "input file (hypergcn-json) or directory (linqs)")->required();
  convert->add_option("--out", output, "output canonical JSON file")->required();
  convert->add_option("--name", name, "dataset name");
  convert->add_option("--split-seed", convert_seed, "seed of the planted split");
  convert->add_flag("--upstream-split", upstream_split, "keep the upstream train/test split");

  std::string checkpoint, eval_dataset, mask = "test", eval_root;
  std::size_t eval_max_degree = 64;
  auto* eval = app.add_subcommand("eval-checkpoint", "score a saved checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint.json")->required();
  eval->add_option("--dataset", eval_dataset, "dataset name or path")->required();
  eval->add_option("--mask", mask, "node mask to score")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--data-root", eval_root, "dataset root");
  eval->add_option("--max-degree", eval_max_degree, "cap for one-hot degree features");

  std::vector<std::string> report_paths;
  bool report_json = false;
  auto* report = app.add_subcommand("report", "aggregate run summaries into mean +- std per dataset and mode");
  report->add_option("paths", report_paths, "run directories or summary files")->required();
  report->add_flag("--json", report_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    err << (sub != nullptr ? sub->help() : app.help());
    return 2;
  }

  try {
    if (*node) return cmd_train_node(node_flags, runs, split_seed, out, err);
    if (*graph) {
      return cmd_train_graph(graph_flags, graph->count("--layers") > 0, graph->count("--hidden") > 0, max_degree,
                             out, err);
    }
    if (*convert) return cmd_convert(format, input, output, name, convert_seed, upstream_split, out, err);
    if (*eval) return cmd_eval_checkpoint(checkpoint, eval_dataset, mask, eval_root, eval_max_degree, out);
    if (*report) return cmd_report(report_paths, report_json, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace herald::cli
