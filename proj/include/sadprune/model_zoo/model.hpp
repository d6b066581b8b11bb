#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadprune/core/error.hpp"
#include "sadprune/core/tensor.hpp"
#include "sadprune/nn/layers.hpp"
#include "sadprune/prune/mask_set.hpp"

namespace sadprune {

enum class model_family { wide_resnet, tabular_mlp };
enum class task_kind { classification, regression };

inline std::string to_string(model_family f) { return f == model_family::wide_resnet ? "wide-resnet" : "tabular-mlp"; }
inline std::string to_string(task_kind t) { return t == task_kind::classification ? "classification" : "regression"; }

inline model_family parse_family(const std::string& s) {
  if (s == "wide-resnet" || s == "wrn") return model_family::wide_resnet;
  if (s == "tabular-mlp" || s == "mlp") return model_family::tabular_mlp;
  throw config_error("unknown model family '" + s + "'");
}

inline task_kind parse_task(const std::string& s) {
  if (s == "classification") return task_kind::classification;
  if (s == "regression") return task_kind::regression;
  throw config_error("unknown task '" + s + "'");
}

/// Architecture description for teachers and students.
struct model_spec {
  model_family family = model_family::wide_resnet;
  std::size_t depth = 16;
  std::size_t width_factor = 2;
  std::size_t num_outputs = 100;
  task_kind task = task_kind::classification;
  // Tabular only: input feature count, and optional explicit hidden widths.
  std::size_t input_features = 0;
  std::vector<std::size_t> hidden_widths;

  void validate() const {
    if (depth == 0 || width_factor == 0) throw config_error("model depth and width_factor must be positive");
    if (num_outputs == 0) throw config_error("num_outputs must be >= 1");
    if (task == task_kind::regression && num_outputs != 1) {
      throw config_error("regression models must have exactly one output");
    }
    if (family == model_family::wide_resnet && (depth % 6 != 4 || depth < 10)) {
      throw config_error("wide-resnet depth must be 6k+4, got " + std::to_string(depth));
    }
    if (family == model_family::tabular_mlp) {
      if (input_features == 0) throw config_error("tabular-mlp needs input_features > 0");
      if (!hidden_widths.empty() && hidden_widths.size() != depth) {
        throw config_error("tabular-mlp hidden_widths must list exactly `depth` widths");
      }
    }
  }

  /// Hidden widths of a tabular-mlp: 64*w*2^(depth-1-i) unless given explicitly (depth 3, w 1 -> 256,128,64).
  std::vector<std::size_t> mlp_widths() const {
    if (!hidden_widths.empty()) return hidden_widths;
    std::vector<std::size_t> widths;
    for (std::size_t i = 0; i < depth; ++i) widths.push_back(64 * width_factor * (std::size_t{1} << (depth - 1 - i)));
    return widths;
  }

  friend bool operator==(const model_spec&, const model_spec&) = default;
};

inline nlohmann::json to_json_value(const model_spec& s) {
  return {{"family", to_string(s.family)},     {"depth", s.depth},
          {"width_factor", s.width_factor},    {"num_outputs", s.num_outputs},
          {"task", to_string(s.task)},         {"input_features", s.input_features},
          {"hidden_widths", s.hidden_widths}};
}

inline model_spec model_spec_from_json(const nlohmann::json& j) {
  model_spec s;
  s.family = parse_family(j.at("family").get<std::string>());
  s.depth = j.at("depth").get<std::size_t>();
  s.width_factor = j.at("width_factor").get<std::size_t>();
  s.num_outputs = j.at("num_outputs").get<std::size_t>();
  s.task = parse_task(j.at("task").get<std::string>());
  s.input_features = j.value("input_features", std::size_t{0});
  s.hidden_widths = j.value("hidden_widths", std::vector<std::size_t>{});
  return s;
}

/// Activation map exported from a tap layer: (N,C,H,W) for conv nets or (N,C) for tabular / pooled taps.
template <typename T>
struct feature_map {
  std::string layer_id;
  tensor<T> values;

  std::size_t channels() const { return values.dim(1); }
  bool spatial() const { return values.rank() == 4; }
};

template <typename T>
using feature_set = std::vector<feature_map<T>>;

template <typename T>
struct forward_result {
  tensor<T> outputs;  // logits (N, classes) or predictions (N, 1)
  feature_set<T> features;
};

/// Common interface of teacher and student networks.
template <typename T>
class model {
 public:
  virtual ~model() = default;

  virtual const model_spec& spec() const = 0;

  /// Runs the network, caching what backward() needs; features follow forward order.
  virtual forward_result<T> forward(const tensor<T>& input, bool training) = 0;

  /// Back-propagates output gradients plus optional per-tap gradients (empty tensor = none),
  /// accumulating into parameter grads. Must follow a forward() on the same batch.
  virtual void backward(const tensor<T>& grad_outputs, const std::vector<tensor<T>>& tap_grads) = 0;

  virtual std::vector<nn::parameter<T>*> parameters() = 0;
  virtual std::vector<nn::buffer<T>*> buffers() = 0;
  virtual std::vector<std::string> tap_ids() const = 0;
  virtual std::vector<prunable_layer> prunable_layers() const = 0;

  /// Weight whose first axis indexes the output channels of `layer_id` (ranking source).
  virtual const nn::parameter<T>& filter_weights(const std::string& layer_id) const = 0;

  /// 0/1 arrays aligned with parameters(): 1 where both the input and output channel survive.
  virtual std::vector<tensor<T>> parameter_masks(const mask_set& masks) const = 0;

  virtual std::unique_ptr<model> clone() const = 0;

  std::vector<const nn::parameter<T>*> parameters() const {
    auto ps = const_cast<model*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.zero();
  }

 protected:
  void check_tap_grads(const std::vector<tensor<T>>& tap_grads, std::size_t taps) const {
    if (!tap_grads.empty() && tap_grads.size() != taps) {
      throw structural_error("expected " + std::to_string(taps) + " tap gradients, got " +
                             std::to_string(tap_grads.size()));
    }
  }
};

/// 0/1 mask value for a pair of channel flags.
template <typename T>
T keep_value(bool out_alive, bool in_alive) {
  return (out_alive && in_alive) ? T{1} : T{0};
}

}  // namespace sadprune
