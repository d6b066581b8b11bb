#pragma once

#include <cmath>

#include "sadprune/core/tensor.hpp"

namespace sadprune {

/// Global average pooling over height x width: (N,C,H,W) -> (N,C).
/// A 2-axis map is already a channel descriptor and passes through unchanged.
template <typename T>
tensor<T> gap_hw(const tensor<T>& f) {
  if (f.rank() == 2) return f;
  if (f.rank() != 4) throw input_error("gap_hw expects a 2- or 4-axis map, got " + shape_string(f.shape()));
  const std::size_t n = f.dim(0), c = f.dim(1), plane = f.dim(2) * f.dim(3);
  tensor<T> out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    T sum = 0;
    for (std::size_t p = 0; p < plane; ++p) sum += f[i * plane + p];
    out[i] = sum / static_cast<T>(plane);
  }
  return out;
}

/// Scales each row of an (N,P) matrix to unit L2 norm; all-zero rows stay zero.
template <typename T>
tensor<T> normalize_rows(tensor<T> v) {
  const std::size_t n = v.dim(0), p = v.dim(1);
  for (std::size_t s = 0; s < n; ++s) {
    T sq = 0;
    for (std::size_t j = 0; j < p; ++j) sq += v[s * p + j] * v[s * p + j];
    if (sq > T{0}) {
      const T inv = T{1} / std::sqrt(sq);
      for (std::size_t j = 0; j < p; ++j) v[s * p + j] *= inv;
    }
  }
  return v;
}

/// Gradient of normalize_rows: raw (N,P) input, upstream grad (N,P).
template <typename T>
tensor<T> normalize_rows_backward(const tensor<T>& raw, const tensor<T>& grad) {
  const std::size_t n = raw.dim(0), p = raw.dim(1);
  tensor<T> out(raw.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const T* v = raw.data() + s * p;
    const T* g = grad.data() + s * p;
    T sq = 0;
    for (std::size_t j = 0; j < p; ++j) sq += v[j] * v[j];
    if (!(sq > T{0})) continue;
    const T norm = std::sqrt(sq);
    T dot = 0;
    for (std::size_t j = 0; j < p; ++j) dot += v[j] * g[j];
    for (std::size_t j = 0; j < p; ++j) out[s * p + j] = (g[j] - v[j] * dot / sq) / norm;
  }
  return out;
}

/// Mean over channels: (N,C,H,W) -> (N, H*W). A 2-axis (N,C) map is read as one channel
/// whose positions are the units, so it passes through.
template <typename T>
tensor<T> channel_mean(const tensor<T>& f) {
  if (f.rank() == 2) return f;
  if (f.rank() != 4) throw input_error("channel pooling expects a 2- or 4-axis map, got " + shape_string(f.shape()));
  const std::size_t n = f.dim(0), c = f.dim(1), plane = f.dim(2) * f.dim(3);
  tensor<T> out({n, plane});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* src = f.data() + (s * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) out[s * plane + p] += src[p];
    }
  }
  out *= T{1} / static_cast<T>(c);
  return out;
}

/// Channel average pooling followed by per-sample L2 normalization: (N,C,H,W) -> (N, H*W).
template <typename T>
tensor<T> channel_pool_norm(const tensor<T>& f) {
  return normalize_rows(channel_mean(f));
}

}  // namespace sadprune
