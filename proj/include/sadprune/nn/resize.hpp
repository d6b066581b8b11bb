#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace sadprune::nn {

/// Bilinear interpolation with half-pixel centers (align_corners = false), separable per axis.
class bilinear_resize {
 public:
  bilinear_resize() = default;
  bilinear_resize(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w)
      : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w), rows_(axis(in_h, out_h)), cols_(axis(in_w, out_w)) {}

  std::size_t in_plane() const { return in_h_ * in_w_; }
  std::size_t out_plane() const { return out_h_ * out_w_; }
  bool identity() const { return in_h_ == out_h_ && in_w_ == out_w_; }

  template <typename T>
  void apply(const T* in, T* out) const {
    for (std::size_t r = 0; r < out_h_; ++r) {
      const auto& ry = rows_[r];
      for (std::size_t c = 0; c < out_w_; ++c) {
        const auto& cx = cols_[c];
        const T top = in[ry.lo * in_w_ + cx.lo] * static_cast<T>(1 - cx.frac) + in[ry.lo * in_w_ + cx.hi] * static_cast<T>(cx.frac);
        const T bot = in[ry.hi * in_w_ + cx.lo] * static_cast<T>(1 - cx.frac) + in[ry.hi * in_w_ + cx.hi] * static_cast<T>(cx.frac);
        out[r * out_w_ + c] = top * static_cast<T>(1 - ry.frac) + bot * static_cast<T>(ry.frac);
      }
    }
  }

  /// Accumulates the transpose of `apply` into `in_grad`.
  template <typename T>
  void adjoint(const T* out_grad, T* in_grad) const {
    for (std::size_t r = 0; r < out_h_; ++r) {
      const auto& ry = rows_[r];
      for (std::size_t c = 0; c < out_w_; ++c) {
        const auto& cx = cols_[c];
        const T g = out_grad[r * out_w_ + c];
        const T top = g * static_cast<T>(1 - ry.frac), bot = g * static_cast<T>(ry.frac);
        in_grad[ry.lo * in_w_ + cx.lo] += top * static_cast<T>(1 - cx.frac);
        in_grad[ry.lo * in_w_ + cx.hi] += top * static_cast<T>(cx.frac);
        in_grad[ry.hi * in_w_ + cx.lo] += bot * static_cast<T>(1 - cx.frac);
        in_grad[ry.hi * in_w_ + cx.hi] += bot * static_cast<T>(cx.frac);
      }
    }
  }

 private:
  struct tap {
    std::size_t lo, hi;
    double frac;
  };

  static std::vector<tap> axis(std::size_t in, std::size_t out) {
    std::vector<tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * scale - 0.5);
      const auto lo = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
      const auto hi = std::min(lo + 1, in - 1);
      taps[o] = {lo, hi, hi == lo ? 0.0 : src - static_cast<double>(lo)};
    }
    return taps;
  }

  std::size_t in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  std::vector<tap> rows_, cols_;
};

}  // namespace sadprune::nn
