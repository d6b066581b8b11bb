#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sadprune/core/error.hpp"

namespace sadprune {

/// Piecewise-constant learning rate: base * gamma^(milestones <= epoch), with 0-based epochs.
struct lr_schedule {
  double base = 0.05;
  double gamma = 0.1;
  std::vector<std::size_t> milestones;

  lr_schedule() = default;
  lr_schedule(double base_lr, double decay, std::vector<std::size_t> ms)
      : base(base_lr), gamma(decay), milestones(std::move(ms)) {
    validate();
  }

  void validate() const {
    if (!(base > 0) || !std::isfinite(base)) throw config_error("learning rate must be > 0");
    if (!(gamma > 0) || !std::isfinite(gamma)) throw config_error("learning-rate decay factor must be > 0");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
      if (milestones[i] <= milestones[i - 1]) throw config_error("lr milestones must be strictly increasing");
    }
  }

  double operator()(std::size_t epoch) const {
    validate();
    const auto crossed = std::count_if(milestones.begin(), milestones.end(), [&](std::size_t m) { return m <= epoch; });
    return base * std::pow(gamma, static_cast<double>(crossed));
  }
};

}  // namespace sadprune
