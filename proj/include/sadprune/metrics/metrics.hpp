#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sadprune/core/error.hpp"
#include "sadprune/core/tensor.hpp"

namespace sadprune {

namespace detail {

inline void require_pair(std::size_t a, std::size_t b, const char* who) {
  if (a != b) {
    throw input_error(std::string(who) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
  if (a == 0) throw input_error(std::string(who) + ": empty input");
}

}  // namespace detail

/// Fraction of positions where prediction equals label.
template <typename L>
double accuracy(std::span<const L> predictions, std::span<const L> labels) {
  detail::require_pair(predictions.size(), labels.size(), "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

template <typename L>
double accuracy(const std::vector<L>& predictions, const std::vector<L>& labels) {
  return accuracy(std::span<const L>(predictions), std::span<const L>(labels));
}

template <typename T>
double mae(std::span<const T> y, std::span<const T> y_hat) {
  detail::require_pair(y.size(), y_hat.size(), "mae");
  double sum = 0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(static_cast<double>(y[i]) - static_cast<double>(y_hat[i]));
  if (!std::isfinite(sum)) throw numeric_error("mae: non-finite input");
  return sum / static_cast<double>(y.size());
}

template <typename T>
double mse(std::span<const T> y, std::span<const T> y_hat) {
  detail::require_pair(y.size(), y_hat.size(), "mse");
  double sum = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = static_cast<double>(y[i]) - static_cast<double>(y_hat[i]);
    sum += d * d;
  }
  if (!std::isfinite(sum)) throw numeric_error("mse: non-finite input");
  return sum / static_cast<double>(y.size());
}

template <typename T>
double mae(const std::vector<T>& y, const std::vector<T>& y_hat) {
  return mae(std::span<const T>(y), std::span<const T>(y_hat));
}

template <typename T>
double mse(const std::vector<T>& y, const std::vector<T>& y_hat) {
  return mse(std::span<const T>(y), std::span<const T>(y_hat));
}

/// Row-wise argmax of an (N, K) logit matrix; the first maximum wins.
template <typename T>
std::vector<int> argmax_rows(const tensor<T>& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[b * k + j] > logits[b * k + best]) best = j;
    }
    out[b] = static_cast<int>(best);
  }
  return out;
}

}  // namespace sadprune
