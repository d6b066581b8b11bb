#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "sadprune/core/random.hpp"
#include "sadprune/core/tensor.hpp"

namespace sadprune::testing {

template <typename T = double>
tensor<T> random_tensor(shape_t shape, rng_t& rng, double lo = -1.0, double hi = 1.0) {
  tensor<T> t(std::move(shape));
  fill_uniform(t.values(), rng, lo, hi);
  return t;
}

inline std::size_t random_index(rng_t& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Central difference of `f` with respect to x[i]; x is restored afterwards.
template <typename T>
double central_difference(const std::function<double()>& f, T& x, double step) {
  const T saved = x;
  x = static_cast<T>(saved + step);
  const double up = f();
  x = static_cast<T>(saved - step);
  const double down = f();
  x = saved;
  return (up - down) / (2 * step);
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace sadprune::testing
