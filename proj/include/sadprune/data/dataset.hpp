#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sadprune/core/error.hpp"
#include "sadprune/core/random.hpp"
#include "sadprune/core/tensor.hpp"
#include "sadprune/model_zoo/model.hpp"

namespace sadprune {

template <typename T>
struct batch {
  tensor<T> x;
  std::vector<int> labels;   // classification
  std::vector<T> targets;    // regression
  std::size_t size() const { return x.empty() ? 0 : x.dim(0); }
};

/// In-memory split. Images are stored normalized as (C, H, W) rows; tabular rows are flat.
/// When `augment` is set and an rng is passed to make_batch, images get a pad-4 random crop
/// and a random horizontal flip.
struct dataset {
  task_kind task = task_kind::classification;
  shape_t sample_shape;
  std::vector<float> x;
  std::vector<int> labels;
  std::vector<float> targets;
  std::size_t num_classes = 0;
  bool augment = false;
  std::size_t crop_padding = 4;

  std::size_t sample_size() const { return shape_size(sample_shape); }
  std::size_t size() const { return sample_shape.empty() ? 0 : x.size() / sample_size(); }

  void validate() const {
    if (sample_shape.empty() || x.size() % sample_size() != 0) throw structural_error("dataset: ragged feature storage");
    const auto n = size();
    if (task == task_kind::classification && labels.size() != n) throw structural_error("dataset: label count mismatch");
    if (task == task_kind::regression && targets.size() != n) throw structural_error("dataset: target count mismatch");
  }

  template <typename T>
  batch<T> make_batch(std::span<const std::size_t> indices, rng_t* rng = nullptr) const {
    const std::size_t stride = sample_size();
    shape_t shape{indices.size()};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    batch<T> out;
    out.x = tensor<T>(shape);
    const bool image = sample_shape.size() == 3;
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const std::size_t i = indices[b];
      if (i >= size()) throw input_error("batch index " + std::to_string(i) + " out of range");
      const float* src = x.data() + i * stride;
      T* dst = out.x.data() + b * stride;
      if (image && augment && rng) {
        augment_into(src, dst, *rng);
      } else {
        for (std::size_t k = 0; k < stride; ++k) dst[k] = static_cast<T>(src[k]);
      }
      if (task == task_kind::classification) {
        out.labels.push_back(labels[i]);
      } else {
        out.targets.push_back(static_cast<T>(targets[i]));
      }
    }
    return out;
  }

  /// Row subset in the given order.
  dataset subset(std::span<const std::size_t> indices) const {
    dataset out = *this;
    out.x.clear();
    out.labels.clear();
    out.targets.clear();
    const std::size_t stride = sample_size();
    out.x.reserve(indices.size() * stride);
    for (auto i : indices) {
      out.x.insert(out.x.end(), x.begin() + static_cast<std::ptrdiff_t>(i * stride),
                   x.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
      if (task == task_kind::classification) out.labels.push_back(labels[i]);
      else out.targets.push_back(targets[i]);
    }
    return out;
  }

 private:
  template <typename T>
  void augment_into(const float* src, T* dst, rng_t& rng) const {
    const std::size_t c = sample_shape[0], h = sample_shape[1], w = sample_shape[2];
    const long pad = static_cast<long>(crop_padding);
    std::uniform_int_distribution<long> shift(-pad, pad);
    const long dy = shift(rng), dx = shift(rng);
    const bool flip = std::bernoulli_distribution(0.5)(rng);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t r = 0; r < h; ++r) {
        const long sr = static_cast<long>(r) + dy;
        for (std::size_t col = 0; col < w; ++col) {
          const long oc = flip ? static_cast<long>(w - 1 - col) : static_cast<long>(col);
          const long sc = oc + dx;
          float v = 0.0f;  // zero padding in normalized space
          if (sr >= 0 && sc >= 0 && sr < static_cast<long>(h) && sc < static_cast<long>(w)) {
            v = src[(ch * h + static_cast<std::size_t>(sr)) * w + static_cast<std::size_t>(sc)];
          }
          dst[(ch * h + r) * w + col] = static_cast<T>(v);
        }
      }
    }
  }
};

/// Shuffled (or sequential) mini-batch index lists covering every row once.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, rng_t* rng) {
  if (batch_size == 0) throw config_error("batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (rng) std::shuffle(order.begin(), order.end(), *rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

/// Per-class deterministic selection of round(fraction * count_c) rows, returned in ascending order.
inline std::vector<std::size_t> stratified_subset(const std::vector<int>& labels, std::size_t num_classes,
                                                  double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw config_error("subset_fraction must lie in (0, 1]");
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (fraction == 1.0) return all;
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
  rng_t rng(seed);
  std::vector<std::size_t> out;
  for (auto& rows : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
    out.insert(out.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace sadprune
