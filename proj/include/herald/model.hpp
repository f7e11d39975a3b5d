#pragma once

// HGNN-style network: every layer computes X' = act(P X W + b) where P is the
// fixed propagation matrix N or, on instrumented layers, the adaptor's blend N^.
//
// Node task: layers run input -> hidden -> ... -> classes, the last one linear.
// Graph task: all layers are hidden ReLU layers, node embeddings are summed,
// and a linear classifier maps the sum to class logits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "herald/adaptor.hpp"
#include "herald/error.hpp"
#include "herald/ops.hpp"
#include "herald/random.hpp"
#include "herald/tensor.hpp"

namespace herald {

enum class Task { node, graph };
enum class HeraldMode { off, per_layer, fast };
enum class Activation { relu, identity };
enum class Readout { none, sum };

inline std::string to_string(Task t) { return t == Task::node ? "node" : "graph"; }
inline std::string to_string(Readout r) { return r == Readout::none ? "none" : "sum"; }
inline std::string to_string(HeraldMode m) {
  switch (m) {
    case HeraldMode::off: return "off";
    case HeraldMode::per_layer: return "on";
    case HeraldMode::fast: return "fast";
  }
  return "off";
}

inline HeraldMode parse_herald_mode(const std::string& s) {
  if (s == "off") return HeraldMode::off;
  if (s == "on") return HeraldMode::per_layer;
  if (s == "fast") return HeraldMode::fast;
  throw ConfigError("unknown adaptor mode '" + s + "' (expected off, on or fast)");
}

inline Task parse_task(const std::string& s) {
  if (s == "node") return Task::node;
  if (s == "graph") return Task::graph;
  throw ConfigError("unknown task '" + s + "'");
}

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  bool herald = false;
  Activation activation = Activation::relu;
};

struct ModelConfig {
  Task task = Task::node;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t num_classes = 0;
  std::size_t num_layers = 3;
  HeraldMode herald = HeraldMode::off;
  // 1-based layers carrying the adaptor; empty selects the last two layers
  // after the first (layer 1 alone for a one-layer network).
  std::vector<int> herald_layers;
  std::size_t herald_dim = 32;
  double sigma = kDefaultSigma;
  double dropout = 0.5;
  bool bias = true;
  Readout readout = Readout::none;
  // Replaces the per-layer schedule with a constant blend strength.
  std::optional<double> fixed_a;

  std::vector<int> instrumented_layers() const {
    if (herald == HeraldMode::off) return {};
    if (!herald_layers.empty()) {
      auto v = herald_layers;
      std::sort(v.begin(), v.end());
      return v;
    }
    const int depth = static_cast<int>(num_layers);
    if (depth == 1) return {1};
    std::vector<int> v;
    for (int l = std::max(2, depth - 1); l <= depth; ++l) v.push_back(l);
    return v;
  }

  bool is_instrumented(int layer) const {
    const auto v = instrumented_layers();
    return std::find(v.begin(), v.end(), layer) != v.end();
  }

  std::vector<LayerSpec> layer_specs() const {
    std::vector<LayerSpec> specs;
    std::size_t in = input_dim;
    for (std::size_t l = 1; l <= num_layers; ++l) {
      LayerSpec s;
      s.in_dim = in;
      const bool last_node_layer = task == Task::node && l == num_layers;
      s.out_dim = last_node_layer ? num_classes : hidden_dim;
      s.activation = last_node_layer ? Activation::identity : Activation::relu;
      s.herald = is_instrumented(static_cast<int>(l));
      specs.push_back(s);
      in = s.out_dim;
    }
    return specs;
  }

  double blend_strength(int layer) const { return fixed_a ? *fixed_a : a_schedule(layer); }

  void validate() const {
    if (input_dim < 1 || hidden_dim < 1 || num_classes < 1 || num_layers < 1) {
      throw ConfigError("model dimensions and depth must all be >= 1");
    }
    if (herald != HeraldMode::off && herald_dim < 1) throw ConfigError("adaptor width must be >= 1");
    for (int l : herald_layers) {
      if (l < 1 || l > static_cast<int>(num_layers)) {
        throw ConfigError("adaptor layer " + std::to_string(l) + " outside 1.." +
                          std::to_string(num_layers));
      }
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    if (fixed_a && !(*fixed_a >= 0.0 && *fixed_a <= 1.0)) throw ConfigError("a must lie in [0, 1]");
    if (task == Task::graph && readout != Readout::sum) {
      throw ConfigError("graph classification needs the sum readout");
    }
    if (task == Task::node && readout != Readout::none) {
      throw ConfigError("node classification has no readout");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"task", to_string(c.task)},
                     {"input_dim", c.input_dim},
                     {"hidden_dim", c.hidden_dim},
                     {"num_classes", c.num_classes},
                     {"num_layers", c.num_layers},
                     {"herald", to_string(c.herald)},
                     {"herald_layers", c.herald_layers},
                     {"herald_dim", c.herald_dim},
                     {"sigma", c.sigma},
                     {"dropout", c.dropout},
                     {"bias", c.bias},
                     {"readout", to_string(c.readout)},
                     {"fixed_a", c.fixed_a ? nlohmann::json(*c.fixed_a) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.task = parse_task(j.at("task").get<std::string>());
  j.at("input_dim").get_to(c.input_dim);
  j.at("hidden_dim").get_to(c.hidden_dim);
  j.at("num_classes").get_to(c.num_classes);
  j.at("num_layers").get_to(c.num_layers);
  c.herald = parse_herald_mode(j.at("herald").get<std::string>());
  j.at("herald_layers").get_to(c.herald_layers);
  j.at("herald_dim").get_to(c.herald_dim);
  j.at("sigma").get_to(c.sigma);
  j.at("dropout").get_to(c.dropout);
  j.at("bias").get_to(c.bias);
  c.readout = j.at("readout").get<std::string>() == "sum" ? Readout::sum : Readout::none;
  if (j.contains("fixed_a") && !j.at("fixed_a").is_null()) {
    c.fixed_a = j.at("fixed_a").get<double>();
  } else {
    c.fixed_a.reset();
  }
}

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    const auto specs = config_.layer_specs();
    for (std::size_t l = 0; l < specs.size(); ++l) {
      weights_.push_back(glorot(specs[l].in_dim, specs[l].out_dim, rng));
      biases_.push_back(config_.bias ? Tensor::parameter({1, specs[l].out_dim},
                                                         std::vector<double>(specs[l].out_dim, 0.0))
                                     : Tensor());
    }
    if (config_.task == Task::graph) {
      classifier_weight_ = glorot(config_.hidden_dim, config_.num_classes, rng);
      if (config_.bias) {
        classifier_bias_ =
            Tensor::parameter({1, config_.num_classes}, std::vector<double>(config_.num_classes, 0.0));
      }
    }
    // Adaptors are drawn last so that models differing only in adaptor mode
    // share every other initial weight for a given seed.
    if (config_.herald == HeraldMode::per_layer) {
      for (int l : config_.instrumented_layers()) {
        adaptors_.emplace(l, HeraldParams::init(specs[static_cast<std::size_t>(l - 1)].in_dim,
                                                config_.herald_dim, config_.sigma, rng));
      }
    } else if (config_.herald == HeraldMode::fast) {
      const auto layers = config_.instrumented_layers();
      if (!layers.empty()) {
        const int first = layers.front();
        adaptors_.emplace(first, HeraldParams::init(specs[static_cast<std::size_t>(first - 1)].in_dim,
                                                    config_.herald_dim, config_.sigma, rng));
      }
    }
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }

  // Stable, ordered list of every trainable tensor.
  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const std::string prefix = "conv" + std::to_string(l + 1);
      out.push_back({prefix + ".weight", weights_[l]});
      if (biases_[l]) out.push_back({prefix + ".bias", biases_[l]});
    }
    for (const auto& [layer, p] : adaptors_) {
      const std::string prefix = "adaptor" + std::to_string(layer);
      out.push_back({prefix + ".node_transform", p.node_transform});
      out.push_back({prefix + ".edge_transform", p.edge_transform});
      out.push_back({prefix + ".distance_weights", p.distance_weights});
    }
    if (classifier_weight_) out.push_back({"classifier.weight", classifier_weight_});
    if (classifier_bias_) out.push_back({"classifier.bias", classifier_bias_});
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
  }

  std::size_t adaptor_count() const { return adaptors_.size(); }

  // Adaptor owned by a layer, or nullptr. In fast mode only the first instrumented layer owns one.
  const HeraldParams* adaptor(int layer) const {
    auto it = adaptors_.find(layer);
    return it == adaptors_.end() ? nullptr : &it->second;
  }

  const Tensor& weight(std::size_t layer) const { return weights_.at(layer - 1); }
  const Tensor& bias(std::size_t layer) const { return biases_.at(layer - 1); }
  const Tensor& classifier_weight() const { return classifier_weight_; }
  const Tensor& classifier_bias() const { return classifier_bias_; }

  std::map<std::string, std::vector<double>> state() const {
    std::map<std::string, std::vector<double>> s;
    for (const auto& p : parameters()) s[p.name] = {p.tensor.data().begin(), p.tensor.data().end()};
    return s;
  }

  // Overwrites the named parameters present in `state`; unknown names are errors.
  void load_state(const std::map<std::string, std::vector<double>>& state, bool require_all = true) {
    auto params = parameters();
    std::size_t matched = 0;
    for (const auto& [name, values] : state) {
      auto it = std::find_if(params.begin(), params.end(),
                             [&](const NamedTensor& p) { return p.name == name; });
      if (it == params.end()) throw ValidationError("unknown parameter '" + name + "'");
      if (values.size() != it->tensor.numel()) {
        throw DimensionError("parameter '" + name + "' expects " +
                             std::to_string(it->tensor.numel()) + " values, got " +
                             std::to_string(values.size()));
      }
      std::copy(values.begin(), values.end(), it->tensor.mutable_data().begin());
      ++matched;
    }
    if (require_all && matched != params.size()) {
      throw ValidationError("state provides " + std::to_string(matched) + " of " +
                            std::to_string(params.size()) + " parameters");
    }
  }

  Model clone(std::uint64_t seed = 0) const {
    Model m(config_, seed);
    m.load_state(state());
    return m;
  }

 private:
  static Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> w(fan_in * fan_out);
    for (auto& x : w) x = rng.uniform(-r, r);
    return Tensor::parameter({fan_in, fan_out}, std::move(w));
  }

  ModelConfig config_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  std::map<int, HeraldParams> adaptors_;
  Tensor classifier_weight_;
  Tensor classifier_bias_;
};

inline std::size_t parameter_count(const Model& model) { return model.parameter_count(); }

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
  bool regularize = false;     // collect ||N - N_res||_F per adaptor
  bool keep_adaptor_outputs = false;
};

struct ForwardResult {
  Tensor logits;
  Tensor embeddings;                  // node embeddings before any readout
  std::vector<Tensor> regularizers;   // one per adaptor evaluation
  std::vector<Tensor> propagations;   // matrix applied at each layer
  std::vector<HeraldOutput> adaptor_outputs;
};

// Shared blend for fast mode, computed from the features entering the first
// instrumented layer.
inline HeraldOutput fast_herald_plan(const Model& model, const Tensor& features,
                                     const TopologyContext& ctx, bool with_laplacian = true) {
  const auto& cfg = model.config();
  if (cfg.herald != HeraldMode::fast) throw ConfigError("fast_herald_plan needs a fast-mode model");
  const auto layers = cfg.instrumented_layers();
  if (layers.empty()) throw ConfigError("fast mode without an instrumented layer");
  const int first = layers.front();
  return herald_forward(*model.adaptor(first), features, ctx, cfg.blend_strength(first),
                        with_laplacian);
}

namespace detail {

inline Tensor dropout(const Tensor& x, double p, Rng& rng) {
  std::vector<double> mask(x.numel());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

inline ForwardResult propagate_layers(const Model& model, const Tensor& features,
                                      const TopologyContext& ctx, const ForwardOptions& opts) {
  const auto& cfg = model.config();
  if (features.rows() != ctx.num_nodes || features.cols() != cfg.input_dim) {
    throw DimensionError("forward: features " + shape_string(features.shape()) + " for " +
                         std::to_string(ctx.num_nodes) + " nodes and input width " +
                         std::to_string(cfg.input_dim));
  }
  if (opts.training && cfg.dropout > 0.0 && opts.dropout_rng == nullptr) {
    throw ContractError("training forward with dropout needs a generator");
  }
  const auto specs = cfg.layer_specs();
  ForwardResult result;
  Tensor x = features;
  Tensor shared;
  for (std::size_t idx = 0; idx < specs.size(); ++idx) {
    const int layer = static_cast<int>(idx + 1);
    const auto& spec = specs[idx];
    Tensor prop = ctx.propagation;
    if (cfg.herald == HeraldMode::per_layer && spec.herald) {
      auto out = herald_forward(*model.adaptor(layer), x, ctx, cfg.blend_strength(layer), false);
      if (opts.regularize) {
        result.regularizers.push_back(topology_regularizer(ctx.propagation, out.residual_propagation));
      }
      prop = out.blended_propagation;
      if (opts.keep_adaptor_outputs) result.adaptor_outputs.push_back(std::move(out));
    } else if (cfg.herald == HeraldMode::fast && (spec.herald || shared)) {
      if (!shared) {
        auto out = fast_herald_plan(model, x, ctx, false);
        if (opts.regularize) {
          result.regularizers.push_back(topology_regularizer(ctx.propagation, out.residual_propagation));
        }
        shared = out.blended_propagation;
        if (opts.keep_adaptor_outputs) result.adaptor_outputs.push_back(std::move(out));
      }
      prop = shared;
    }
    result.propagations.push_back(prop);
    Tensor h = matmul(prop, matmul(x, model.weight(idx + 1)));
    if (model.bias(idx + 1)) h = add_row(h, model.bias(idx + 1));
    if (spec.activation == Activation::relu) {
      h = relu(h);
      if (opts.training && cfg.dropout > 0.0) h = dropout(h, cfg.dropout, *opts.dropout_rng);
    }
    x = h;
  }
  result.embeddings = x;
  return result;
}

}  // namespace detail

// Class logits for every node, |V| x C.
inline ForwardResult forward_node(const Model& model, const Tensor& features,
                                  const TopologyContext& ctx, const ForwardOptions& opts = {}) {
  if (model.config().task != Task::node) throw ConfigError("forward_node on a graph-task model");
  auto r = detail::propagate_layers(model, features, ctx, opts);
  r.logits = r.embeddings;
  return r;
}

// Class logits for the whole hypergraph, 1 x C.
inline ForwardResult forward_graph(const Model& model, const Tensor& features,
                                   const TopologyContext& ctx, const ForwardOptions& opts = {}) {
  if (model.config().task != Task::graph) throw ConfigError("forward_graph on a node-task model");
  auto r = detail::propagate_layers(model, features, ctx, opts);
  Tensor pooled = sum_cols(r.embeddings);
  Tensor logits = matmul(pooled, model.classifier_weight());
  if (model.classifier_bias()) logits = add_row(logits, model.classifier_bias());
  r.logits = logits;
  return r;
}

// ------------------------------------------------------------- checkpoints
//
// One JSON document: the model config plus name -> {shape, data} for every
// parameter. Doubles are written in shortest round-trip form, so a save/load
// cycle reproduces every bit.

inline nlohmann::json checkpoint_json(const Model& model) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model.parameters()) {
    params[p.name] = {{"shape", p.tensor.shape()},
                      {"data", std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())}};
  }
  return {{"format", "herald-checkpoint"}, {"version", 1}, {"config", model.config()},
          {"parameters", params}};
}

inline Model model_from_checkpoint_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "herald-checkpoint") {
      throw ParseError("not a checkpoint document");
    }
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
    Model model(j.at("config").get<ModelConfig>(), 0);
    std::map<std::string, std::vector<double>> state;
    for (const auto& [name, entry] : j.at("parameters").items()) {
      state[name] = entry.at("data").get<std::vector<double>>();
      const auto shape = entry.at("shape").get<Shape>();
      if (shape_numel(shape) != state[name].size()) {
        throw ParseError("checkpoint parameter '" + name + "' has inconsistent shape");
      }
    }
    model.load_state(state);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint '" + path + "'");
  out << checkpoint_json(model).dump() << '\n';
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  return model_from_checkpoint_json(j);
}

}  // namespace herald
