#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sadprune/core/random.hpp"
#include "sadprune/model_zoo/model.hpp"
#include "sadprune/model_zoo/tabular_mlp.hpp"
#include "sadprune/model_zoo/wide_resnet.hpp"

namespace sadprune {

/// Constructs a model with deterministic initialization from `seed`.
template <typename T>
std::unique_ptr<model<T>> build_model(const model_spec& spec, std::uint64_t seed) {
  spec.validate();
  rng_t rng(seed);
  if (spec.family == model_family::wide_resnet) {
    auto m = std::make_unique<wide_resnet<T>>(spec);
    m->init(rng);
    return m;
  }
  auto m = std::make_unique<tabular_mlp<T>>(spec);
  m->init(rng);
  return m;
}

enum class snapshot_tag { init, previous_round };

inline std::string to_string(snapshot_tag t) { return t == snapshot_tag::init ? "init" : "previous_round"; }

/// Immutable deep copy of a model's parameters (and batch-norm buffers).
template <typename T>
class weight_snapshot {
 public:
  snapshot_tag tag() const { return tag_; }
  const std::map<std::string, tensor<T>>& entries() const { return params_; }
  const std::map<std::string, tensor<T>>& buffer_entries() const { return buffers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
  }

  /// Rebuilds a snapshot from stored entries (checkpoint resume).
  static weight_snapshot from_entries(snapshot_tag tag, std::map<std::string, tensor<T>> params,
                                      std::map<std::string, tensor<T>> buffers) {
    weight_snapshot s;
    s.tag_ = tag;
    s.params_ = std::move(params);
    s.buffers_ = std::move(buffers);
    return s;
  }

  const tensor<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw structural_error("snapshot has no parameter '" + name + "'");
    return it->second;
  }

 private:
  template <typename U>
  friend weight_snapshot<U> snapshot(model<U>& m, snapshot_tag tag);

  snapshot_tag tag_ = snapshot_tag::init;
  std::map<std::string, tensor<T>> params_;
  std::map<std::string, tensor<T>> buffers_;
};

template <typename T>
weight_snapshot<T> snapshot(model<T>& m, snapshot_tag tag) {
  weight_snapshot<T> s;
  s.tag_ = tag;
  for (auto* p : m.parameters()) s.params_.emplace(p->name, p->value);
  for (auto* b : m.buffers()) s.buffers_.emplace(b->name, b->value);
  return s;
}

/// Copies every snapshot entry back into the model; shapes must match exactly.
template <typename T>
void restore(model<T>& m, const weight_snapshot<T>& s) {
  auto params = m.parameters();
  if (params.size() != s.entries().size()) {
    throw structural_error("snapshot holds " + std::to_string(s.entries().size()) + " parameters, model has " +
                           std::to_string(params.size()));
  }
  for (auto* p : params) {
    const auto& v = s.at(p->name);
    p->value.require_same_shape(v, "restore");
    p->value = v;
  }
  for (auto* b : m.buffers()) {
    auto it = s.buffer_entries().find(b->name);
    if (it == s.buffer_entries().end()) throw structural_error("snapshot has no buffer '" + b->name + "'");
    b->value.require_same_shape(it->second, "restore");
    b->value = it->second;
  }
}

/// Zeroes every weight feeding or produced by a masked-off channel (batch-norm affine terms included).
template <typename T>
void apply_mask(model<T>& m, const mask_set& masks) {
  const auto pm = m.parameter_masks(masks);
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params[i]->value;
    for (std::size_t j = 0; j < v.size(); ++j) v[j] *= pm[i][j];
  }
}

struct parameter_size {
  std::string name;
  std::size_t total = 0;
  std::size_t surviving = 0;
};

struct size_report {
  std::size_t total_params = 0;
  std::size_t surviving_params = 0;
  double reduction_fraction = 0.0;
  std::vector<parameter_size> per_parameter;

  std::size_t pruned_params() const { return total_params - surviving_params; }
};

/// Counts weights whose input and output channels both survive.
template <typename T>
size_report effective_size(const model<T>& m, const mask_set& masks) {
  const auto pm = m.parameter_masks(masks);
  const auto params = m.parameters();
  size_report r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    parameter_size ps{params[i]->name, pm[i].size(), 0};
    for (std::size_t j = 0; j < pm[i].size(); ++j) ps.surviving += pm[i][j] != T{0} ? 1 : 0;
    r.total_params += ps.total;
    r.surviving_params += ps.surviving;
    r.per_parameter.push_back(std::move(ps));
  }
  r.reduction_fraction =
      r.total_params == 0 ? 0.0 : 1.0 - static_cast<double>(r.surviving_params) / static_cast<double>(r.total_params);
  return r;
}

inline nlohmann::json to_json_value(const size_report& r) {
  return {{"total_params", r.total_params},
          {"surviving_params", r.surviving_params},
          {"reduction_fraction", r.reduction_fraction}};
}

}  // namespace sadprune
