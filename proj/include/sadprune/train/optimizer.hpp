#pragma once

#include <cstddef>
#include <vector>

#include "sadprune/core/error.hpp"
#include "sadprune/core/tensor.hpp"
#include "sadprune/nn/layers.hpp"

namespace sadprune {

/// SGD with heavy-ball momentum and L2 weight decay. Gradients of masked entries are zeroed
/// before the update and the weights are re-masked afterwards, so pruned weights stay exactly zero.
template <typename T>
class sgd {
 public:
  sgd() = default;
  sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {
    if (momentum < 0 || momentum >= 1) throw config_error("momentum must lie in [0, 1)");
    if (weight_decay < 0) throw config_error("weight decay must be >= 0");
  }

  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

  /// `masks` is either empty or aligned with `params` (0/1 tensors shaped like each value).
  void step(const std::vector<nn::parameter<T>*>& params, const std::vector<tensor<T>>& masks, double lr) {
    if (!masks.empty() && masks.size() != params.size()) throw structural_error("optimizer mask count mismatch");
    if (velocity_.empty()) {
      for (auto* p : params) velocity_.emplace_back(p->value.shape());
    }
    if (velocity_.size() != params.size()) throw structural_error("optimizer parameter list changed between steps");
    const T mu = static_cast<T>(momentum_), wd = static_cast<T>(weight_decay_), eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& w = params[i]->value;
      const auto& g = params[i]->grad;
      auto& v = velocity_[i];
      const T* m = masks.empty() ? nullptr : masks[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        T d = g[j] + wd * w[j];
        if (m) d *= m[j];
        v[j] = mu * v[j] + d;
        w[j] -= eta * v[j];
        if (m) w[j] *= m[j];
      }
    }
  }

  /// Drops momentum buffers; called whenever weights are rewound.
  void reset() { velocity_.clear(); }
  bool has_state() const { return !velocity_.empty(); }
  const std::vector<tensor<T>>& velocity() const { return velocity_; }
  void set_velocity(std::vector<tensor<T>> v) { velocity_ = std::move(v); }

 private:
  double momentum_ = 0.9;
  double weight_decay_ = 0.0;
  std::vector<tensor<T>> velocity_;
};

}  // namespace sadprune
