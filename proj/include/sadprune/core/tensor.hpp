#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sadprune/core/error.hpp"

namespace sadprune {

using shape_t = std::vector<std::size_t>;

/// 64-byte aligned storage. Vectorized kernels peel differently on unaligned starts, so an
/// unaligned heap would make results depend on where a buffer happened to land.
template <typename T>
struct aligned_allocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  aligned_allocator() = default;
  template <typename U>
  aligned_allocator(const aligned_allocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const aligned_allocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using aligned_vector = std::vector<T, aligned_allocator<T>>;

inline std::size_t shape_size(const shape_t& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const shape_t& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense row-major array. Conv activations use NCHW, tabular activations (N, C).
template <typename T>
class tensor {
 public:
  using value_type = T;

  tensor() = default;
  explicit tensor(shape_t shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  tensor(shape_t shape, const std::vector<T>& values)
      : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (data_.size() != shape_size(shape_)) {
      throw structural_error("tensor: " + std::to_string(data_.size()) + " values do not fill shape " +
                             shape_string(shape_));
    }
  }

  const shape_t& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  aligned_vector<T>& storage() noexcept { return data_; }
  const aligned_vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t n, std::size_t c) { return data_[n * shape_[1] + c]; }
  const T& at(std::size_t n, std::size_t c) const { return data_[n * shape_[1] + c]; }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T{0}); }

  void reshape(shape_t shape) {
    if (shape_size(shape) != data_.size()) {
      throw structural_error("tensor: cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  tensor& operator+=(const tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  void require_same_shape(const tensor& other, const char* what) const {
    if (shape_ != other.shape_) {
      throw structural_error(std::string("tensor ") + what + ": shape " + shape_string(shape_) + " vs " +
                             shape_string(other.shape_));
    }
  }

  template <typename U>
  tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
  }

  friend bool operator==(const tensor& a, const tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  shape_t shape_;
  aligned_vector<T> data_;
};

/// Spatial plane size for 4-axis maps, 1 for 2-axis maps.
template <typename T>
std::size_t plane_size(const tensor<T>& t) {
  return t.rank() == 4 ? t.dim(2) * t.dim(3) : 1;
}

}  // namespace sadprune
