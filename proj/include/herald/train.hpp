#pragma once

// Optimizers, training loops and run records.
//
// Node task: full-batch training on the train mask, model selection at the best
// validation accuracy, test accuracy of the selected weights.
// Graph task: k-fold cross-validation, a fixed number of epochs per fold, the
// final model scored on the held-out fold.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "herald/adaptor.hpp"
#include "herald/dataset.hpp"
#include "herald/error.hpp"
#include "herald/model.hpp"
#include "herald/ops.hpp"
#include "herald/random.hpp"
#include "herald/tensor.hpp"

namespace herald {

// ------------------------------------------------------------------ optimizers

class Optimizer {
 public:
  explicit Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;
  virtual void step() = 0;

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }
  const std::vector<Tensor>& parameters() const { return params_; }

 protected:
  std::vector<Tensor> params_;
};

// Plain gradient descent with L2 weight decay folded into the gradient.
class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<Tensor> params, double lr, double weight_decay = 0.0)
      : Optimizer(std::move(params)), lr_(lr), weight_decay_(weight_decay) {}

  void step() override {
    for (auto& p : params_) {
      if (!p.has_grad()) continue;
      auto g = p.grad();
      auto x = p.mutable_data();
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr_ * (g[i] + weight_decay_ * x[i]);
    }
  }

 private:
  double lr_;
  double weight_decay_;
};

// Adam with bias correction; weight decay is added to the gradient (L2 form).
// Parameters that received no gradient this step are left untouched.
class Adam final : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, double lr, double weight_decay = 0.0, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : Optimizer(std::move(params)),
        lr_(lr),
        weight_decay_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void step() override {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (!params_[k].has_grad()) continue;
      auto g = params_[k].grad();
      auto x = params_[k].mutable_data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double gi = g[i] + weight_decay_ * x[i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
        x[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// --------------------------------------------------------------------- config

enum class OptimizerKind { adam, sgd };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  int epochs = 300;
  int patience = 50;  // node task only; 0 disables early stopping
  std::uint64_t seed = 0;
  HeraldMode herald = HeraldMode::off;
  bool a_schedule = true;
  double fixed_a = 0.1;  // used when a_schedule is false
  double sigma = kDefaultSigma;
  double reg_weight = 0.1;
  std::size_t layers = 3;
  std::size_t hidden = 64;
  std::size_t herald_dim = 32;
  std::vector<int> herald_layers;  // empty: default placement
  double dropout = 0.5;
  bool bias = true;
  std::size_t folds = 10;       // graph task
  std::size_t batch_size = 32;  // graph task, graphs per optimizer step

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (!(reg_weight >= 0.0) || !std::isfinite(reg_weight)) throw ConfigError("reg-weight must be >= 0");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    if (!a_schedule && !(fixed_a >= 0.0 && fixed_a <= 1.0)) throw ConfigError("a must lie in [0, 1]");
    if (layers < 1 || hidden < 1 || herald_dim < 1) throw ConfigError("layers and widths must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }

  ModelConfig model_config(Task task, std::size_t input_dim, std::size_t num_classes) const {
    ModelConfig m;
    m.task = task;
    m.input_dim = input_dim;
    m.hidden_dim = hidden;
    m.num_classes = num_classes;
    m.num_layers = layers;
    m.herald = herald;
    m.herald_layers = herald_layers;
    m.herald_dim = herald_dim;
    m.sigma = sigma;
    m.dropout = dropout;
    m.bias = bias;
    m.readout = task == Task::graph ? Readout::sum : Readout::none;
    if (!a_schedule) m.fixed_a = fixed_a;
    m.validate();
    return m;
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"optimizer", to_string(c.optimizer)},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"epochs", c.epochs},
                     {"patience", c.patience},
                     {"seed", c.seed},
                     {"herald", to_string(c.herald)},
                     {"a_schedule", c.a_schedule},
                     {"fixed_a", c.fixed_a},
                     {"sigma", c.sigma},
                     {"reg_weight", c.reg_weight},
                     {"layers", c.layers},
                     {"hidden", c.hidden},
                     {"herald_dim", c.herald_dim},
                     {"herald_layers", c.herald_layers},
                     {"dropout", c.dropout},
                     {"bias", c.bias},
                     {"folds", c.folds},
                     {"batch_size", c.batch_size}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  j.at("lr").get_to(c.lr);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("epochs").get_to(c.epochs);
  j.at("patience").get_to(c.patience);
  j.at("seed").get_to(c.seed);
  c.herald = parse_herald_mode(j.at("herald").get<std::string>());
  j.at("a_schedule").get_to(c.a_schedule);
  j.at("fixed_a").get_to(c.fixed_a);
  j.at("sigma").get_to(c.sigma);
  j.at("reg_weight").get_to(c.reg_weight);
  j.at("layers").get_to(c.layers);
  j.at("hidden").get_to(c.hidden);
  j.at("herald_dim").get_to(c.herald_dim);
  j.at("herald_layers").get_to(c.herald_layers);
  j.at("dropout").get_to(c.dropout);
  j.at("bias").get_to(c.bias);
  j.at("folds").get_to(c.folds);
  j.at("batch_size").get_to(c.batch_size);
}

inline std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& c, const Model& model) {
  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  if (c.optimizer == OptimizerKind::adam) return std::make_unique<Adam>(params, c.lr, c.weight_decay);
  return std::make_unique<Sgd>(params, c.lr, c.weight_decay);
}

// ----------------------------------------------------------------- run record

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;  // absent under cross-validation

  bool operator==(const EpochMetrics&) const = default;
};

struct RunRecord {
  std::string task;
  std::string dataset;
  std::uint64_t seed = 0;
  int fold = -1;  // -1 outside cross-validation
  nlohmann::json config;
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double wall_time_seconds = 0.0;
  std::size_t parameter_count = 0;

  bool operator==(const RunRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const EpochMetrics& m) {
  j = nlohmann::json{{"epoch", m.epoch},
                     {"train_loss", m.train_loss},
                     {"train_accuracy", m.train_accuracy},
                     {"val_accuracy", m.val_accuracy ? nlohmann::json(*m.val_accuracy) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, EpochMetrics& m) {
  j.at("epoch").get_to(m.epoch);
  j.at("train_loss").get_to(m.train_loss);
  j.at("train_accuracy").get_to(m.train_accuracy);
  if (j.contains("val_accuracy") && !j.at("val_accuracy").is_null()) {
    m.val_accuracy = j.at("val_accuracy").get<double>();
  } else {
    m.val_accuracy.reset();
  }
}

inline void to_json(nlohmann::json& j, const RunRecord& r) {
  j = nlohmann::json{{"task", r.task},
                     {"dataset", r.dataset},
                     {"seed", r.seed},
                     {"fold", r.fold},
                     {"config", r.config},
                     {"epochs", r.epochs},
                     {"best_epoch", r.best_epoch},
                     {"best_val_accuracy", r.best_val_accuracy},
                     {"test_accuracy", r.test_accuracy},
                     {"wall_time_seconds", r.wall_time_seconds},
                     {"parameter_count", r.parameter_count}};
}

inline void from_json(const nlohmann::json& j, RunRecord& r) {
  j.at("task").get_to(r.task);
  j.at("dataset").get_to(r.dataset);
  j.at("seed").get_to(r.seed);
  j.at("fold").get_to(r.fold);
  r.config = j.at("config");
  j.at("epochs").get_to(r.epochs);
  j.at("best_epoch").get_to(r.best_epoch);
  j.at("best_val_accuracy").get_to(r.best_val_accuracy);
  j.at("test_accuracy").get_to(r.test_accuracy);
  j.at("wall_time_seconds").get_to(r.wall_time_seconds);
  j.at("parameter_count").get_to(r.parameter_count);
}

// ------------------------------------------------------------------ evaluation

inline std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t c = logits.cols();
  const auto d = logits.data();
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (d[row * c + j] > d[row * c + best]) best = j;
  return best;
}

// Fraction of `rows` whose argmax matches the label; ties resolve to the lowest class.
inline double evaluate(const Tensor& logits, std::span<const int> labels,
                       std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("evaluate: empty index set");
  if (labels.size() != logits.rows()) {
    throw DimensionError("evaluate: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows of logits");
  }
  std::size_t hits = 0;
  for (std::size_t r : rows) {
    if (r >= logits.rows()) throw DimensionError("evaluate: row " + std::to_string(r) + " out of range");
    if (static_cast<int>(argmax_row(logits, r)) == labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

// ------------------------------------------------------------------ node task

using EpochCallback = std::function<void(const RunRecord&, const EpochMetrics&)>;

struct NodeTrainingResult {
  RunRecord record;
  Model model;  // weights of the best validation epoch
};

namespace detail {

inline std::string parameter_norms(const Model& model) {
  std::ostringstream os;
  bool first = true;
  for (const auto& p : model.parameters()) {
    double ss = 0.0;
    for (double x : p.tensor.data()) ss += x * x;
    os << (first ? "" : ", ") << p.name << "=" << std::sqrt(ss);
    first = false;
  }
  return os.str();
}

[[noreturn]] inline void numerical_abort(const std::string& where, int epoch, const Model& model,
                                         const std::string& cause) {
  throw NumericalError(where + " epoch " + std::to_string(epoch) + ": " + cause +
                       "; parameter norms: " + parameter_norms(model));
}

inline void check_gradients(const Model& model, const std::string& where, int epoch) {
  for (const auto& p : model.parameters()) {
    if (p.tensor.has_grad() && !all_finite(p.tensor.grad())) {
      numerical_abort(where, epoch, model, "non-finite gradient in " + p.name);
    }
  }
}

// Runs fn, re-raising numerical failures from inside the ops with the epoch and
// parameter norms attached.
template <typename Fn>
decltype(auto) guarded(const std::string& where, int epoch, const Model& model, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    if (std::string(e.what()).find("parameter norms") != std::string::npos) throw;
    numerical_abort(where, epoch, model, e.what());
  }
}

// Adds reg_weight * sum of regularizers to the loss.
inline Tensor with_regularizer(Tensor loss, const std::vector<Tensor>& regs, double weight) {
  if (weight == 0.0) return loss;
  for (const auto& r : regs) loss = add(loss, scale(r, weight));
  return loss;
}

}  // namespace detail

inline NodeTrainingResult train_node(const TrainConfig& config, const NodeDataset& data,
                                     const EpochCallback& on_epoch = {}) {
  config.validate();
  data.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto& train_idx = data.mask("train");
  const auto& val_idx = data.mask("val");
  const auto& test_idx = data.mask("test");
  if (train_idx.empty()) throw ValidationError("training mask is empty");

  Model model(config.model_config(Task::node, data.feature_dim(), data.num_classes), config.seed);
  auto optimizer = make_optimizer(config, model);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const TopologyContext ctx = make_topology(data.hypergraph);

  RunRecord record;
  record.task = "node";
  record.dataset = data.name;
  record.seed = config.seed;
  record.config = {{"train", config}, {"model", model.config()}};
  record.parameter_count = model.parameter_count();
  record.best_val_accuracy = -1.0;
  auto best_state = model.state();
  int since_best = 0;

  ForwardOptions train_opts;
  train_opts.training = true;
  train_opts.dropout_rng = &dropout_rng;
  train_opts.regularize = config.herald != HeraldMode::off && config.reg_weight > 0.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    detail::guarded("train-node", epoch, model, [&] {
      Tape tape;
      const auto r = forward_node(model, data.features, ctx, train_opts);
      const Tensor loss = detail::with_regularizer(
          cross_entropy(r.logits, data.labels, train_idx), r.regularizers, config.reg_weight);
      m.train_loss = loss.item();
      if (!std::isfinite(m.train_loss)) detail::numerical_abort("train-node", epoch, model, "loss is not finite");
      optimizer->zero_grad();
      tape.backward(loss);
    });
    detail::check_gradients(model, "train-node", epoch);
    optimizer->step();

    const Tensor logits = detail::guarded("train-node", epoch, model, [&] {
      NoGrad guard;
      return forward_node(model, data.features, ctx).logits;
    });
    m.train_accuracy = evaluate(logits, data.labels, train_idx);
    const double val = val_idx.empty() ? m.train_accuracy : evaluate(logits, data.labels, val_idx);
    m.val_accuracy = val;
    record.epochs.push_back(m);
    if (on_epoch) on_epoch(record, m);

    if (val > record.best_val_accuracy) {
      record.best_val_accuracy = val;
      record.best_epoch = epoch;
      best_state = model.state();
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }

  model.load_state(best_state);
  const Tensor logits = detail::guarded("train-node", record.best_epoch, model, [&] {
    NoGrad guard;
    return forward_node(model, data.features, ctx).logits;
  });
  record.test_accuracy = test_idx.empty() ? 0.0 : evaluate(logits, data.labels, test_idx);
  record.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(record), std::move(model)};
}

// ----------------------------------------------------------------- graph task

struct GraphFoldResult {
  RunRecord record;
  Model model;  // weights after the last epoch
};

struct CrossValidationResult {
  std::vector<GraphFoldResult> folds;
  std::vector<double> accuracies;
  Summary summary;
  std::vector<std::string> warnings;
};

// Topology operators for every graph, built once and shared by all folds.
inline std::vector<TopologyContext> graph_contexts(const GraphDataset& data) {
  std::vector<TopologyContext> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) out.push_back(make_topology(s.hypergraph));
  return out;
}

inline double evaluate_graphs(const Model& model, const GraphDataset& data,
                              const std::vector<TopologyContext>& contexts,
                              std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("evaluate: empty index set");
  NoGrad guard;
  std::size_t hits = 0;
  for (std::size_t i : indices) {
    const Tensor logits = forward_graph(model, data.samples[i].features, contexts[i]).logits;
    if (static_cast<int>(argmax_row(logits, 0)) == data.samples[i].label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

// Trains one model on `train` for config.epochs epochs and scores it on `test`.
inline GraphFoldResult train_graph_fold(const TrainConfig& config, const GraphDataset& data,
                                        const std::vector<TopologyContext>& contexts,
                                        std::span<const std::size_t> train,
                                        std::span<const std::size_t> test, int fold,
                                        const EpochCallback& on_epoch = {}) {
  const auto start = std::chrono::steady_clock::now();
  if (train.empty()) throw ValidationError("fold " + std::to_string(fold) + " has no training graphs");
  Model model(config.model_config(Task::graph, data.feature_dim, data.num_classes), config.seed);
  auto optimizer = make_optimizer(config, model);
  Rng rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(fold + 1));

  RunRecord record;
  record.task = "graph";
  record.dataset = data.name;
  record.seed = config.seed;
  record.fold = fold;
  record.config = {{"train", config}, {"model", model.config()}};
  record.parameter_count = model.parameter_count();

  ForwardOptions opts;
  opts.training = true;
  opts.dropout_rng = &rng;
  opts.regularize = config.herald != HeraldMode::off && config.reg_weight > 0.0;

  const std::string where = "train-graph fold " + std::to_string(fold);
  std::vector<std::size_t> order(train.begin(), train.end());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - b);
      optimizer->zero_grad();
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t g = order[k];
        const int label = data.samples[g].label;
        detail::guarded(where, epoch, model, [&] {
          Tape tape;
          const auto r = forward_graph(model, data.samples[g].features, contexts[g], opts);
          const std::size_t row = 0;
          Tensor loss = detail::with_regularizer(
              cross_entropy(r.logits, std::span<const int>(&label, 1), std::span<const std::size_t>(&row, 1)),
              r.regularizers, config.reg_weight);
          if (static_cast<int>(argmax_row(r.logits, 0)) == label) ++hits;
          loss_sum += loss.item();
          tape.backward(scale(loss, inv));
        });
      }
      detail::check_gradients(model, where, epoch);
      optimizer->step();
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_accuracy = static_cast<double>(hits) / static_cast<double>(order.size());
    if (!std::isfinite(m.train_loss)) {
      detail::numerical_abort(where, epoch, model, "loss is not finite");
    }
    record.epochs.push_back(m);
    if (on_epoch) on_epoch(record, m);
  }
  record.best_epoch = config.epochs;
  record.best_val_accuracy = 0.0;
  record.test_accuracy = test.empty() ? 0.0 : detail::guarded(where, config.epochs, model, [&] {
    return evaluate_graphs(model, data, contexts, test);
  });
  record.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(record), std::move(model)};
}

inline CrossValidationResult train_graph(const TrainConfig& config, const GraphDataset& data,
                                         const EpochCallback& on_epoch = {}) {
  config.validate();
  if (data.samples.empty()) throw ValidationError("graph dataset is empty");
  const auto contexts = graph_contexts(data);
  const Folds folds = make_folds(data.labels(), config.folds, config.seed);
  CrossValidationResult out;
  out.warnings = folds.warnings;
  for (std::size_t f = 0; f < folds.folds.size(); ++f) {
    const auto train = folds.complement(f);
    auto result = train_graph_fold(config, data, contexts, train, folds.folds[f], static_cast<int>(f), on_epoch);
    out.accuracies.push_back(result.record.test_accuracy);
    out.folds.push_back(std::move(result));
  }
  out.summary = summarize(out.accuracies);
  return out;
}

}  // namespace herald
