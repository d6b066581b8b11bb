#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sadprune/core/random.hpp"
#include "sadprune/distill/pooling.hpp"
#include "sadprune/model_zoo/model.hpp"
#include "sadprune/nn/layers.hpp"
#include "sadprune/nn/resize.hpp"

namespace sadprune {

/// Geometry of one tap: channels plus spatial size (0 x 0 for 2-axis taps).
struct tap_geometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  bool spatial() const { return height > 0; }

  template <typename T>
  static tap_geometry of(const tensor<T>& f) {
    return f.rank() == 4 ? tap_geometry{f.dim(1), f.dim(2), f.dim(3)} : tap_geometry{f.dim(1), 0, 0};
  }
};

/// One student-to-teacher projector per (teacher tap, student tap) pair: a 1x1 channel map
/// C_s -> C_t followed by bilinear resizing to the teacher tap's spatial size.
///
/// Pair rules by tap rank: a 2-axis student tap is read as a 1x1 map; a 2-axis teacher tap
/// receives the projected student descriptor after spatial averaging.
template <typename T>
class projection_bank {
 public:
  projection_bank() = default;

  static projection_bank create(const std::vector<tap_geometry>& teacher, const std::vector<tap_geometry>& student,
                                rng_t& rng) {
    projection_bank b;
    b.teacher_ = teacher;
    b.student_ = student;
    for (std::size_t t = 0; t < teacher.size(); ++t) {
      for (std::size_t s = 0; s < student.size(); ++s) {
        b.weights_.emplace_back("projection." + std::to_string(t) + "." + std::to_string(s),
                                shape_t{teacher[t].channels, student[s].channels});
        const double bound = 1.0 / std::sqrt(static_cast<double>(student[s].channels));
        fill_uniform(b.weights_.back().value.values(), rng, -bound, bound);
        if (teacher[t].spatial()) {
          const std::size_t sh = student[s].spatial() ? student[s].height : 1;
          const std::size_t sw = student[s].spatial() ? student[s].width : 1;
          b.resizers_.emplace_back(sh, sw, teacher[t].height, teacher[t].width);
        } else {
          b.resizers_.emplace_back();
        }
      }
    }
    return b;
  }

  std::size_t teacher_taps() const { return teacher_.size(); }
  std::size_t student_taps() const { return student_.size(); }
  const tap_geometry& teacher_geometry(std::size_t t) const { return teacher_.at(t); }
  nn::parameter<T>& weight(std::size_t t, std::size_t s) { return weights_.at(t * student_.size() + s); }
  const nn::parameter<T>& weight(std::size_t t, std::size_t s) const { return weights_.at(t * student_.size() + s); }

  std::vector<nn::parameter<T>*> parameters() {
    std::vector<nn::parameter<T>*> ps;
    for (auto& w : weights_) ps.push_back(&w);
    return ps;
  }

  /// Materializes the projected student map: (N, C_t, H_t, W_t) or (N, C_t) for 2-axis teacher taps.
  tensor<T> project(std::size_t t, std::size_t s, const tensor<T>& student_map) const {
    check(t, s, student_map);
    const auto& w = weight(t, s).value;
    const std::size_t n = student_map.dim(0), ct = teacher_[t].channels, cs = student_[s].channels;
    if (!teacher_[t].spatial()) {
      const tensor<T> v = gap_hw(student_map);
      tensor<T> out({n, ct});
      nn::matrix_map<T>(out.data(), n, ct).noalias() =
          nn::const_matrix_map<T>(v.data(), n, cs) * nn::const_matrix_map<T>(w.data(), ct, cs).transpose();
      return out;
    }
    const auto& rs = resizers_[t * student_.size() + s];
    const std::size_t in_plane = rs.in_plane(), out_plane = rs.out_plane();
    tensor<T> out({n, ct, teacher_[t].height, teacher_[t].width});
    std::vector<T> mixed(in_plane);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < ct; ++o) {
        std::fill(mixed.begin(), mixed.end(), T{0});
        for (std::size_t i = 0; i < cs; ++i) {
          const T wv = w[o * cs + i];
          const T* src = student_map.data() + (b * cs + i) * in_plane;
          for (std::size_t p = 0; p < in_plane; ++p) mixed[p] += wv * src[p];
        }
        rs.apply(mixed.data(), out.data() + (b * ct + o) * out_plane);
      }
    }
    return out;
  }

  /// Un-normalized channel-pooled descriptor of the projected map, (N, P_t).
  ///
  /// For spatial teacher taps the channel mean commutes with the 1x1 projection and the resize,
  /// so this mixes student channels by the column means of the projector and resizes once.
  tensor<T> pooled_descriptor(std::size_t t, std::size_t s, const tensor<T>& student_map) const {
    check(t, s, student_map);
    if (!teacher_[t].spatial()) return project(t, s, student_map);
    const std::vector<T> wbar = column_means(t, s);
    const auto& rs = resizers_[t * student_.size() + s];
    const std::size_t n = student_map.dim(0), cs = student_[s].channels;
    const std::size_t in_plane = rs.in_plane(), out_plane = rs.out_plane();
    tensor<T> out({n, out_plane});
    std::vector<T> mixed(in_plane);
    for (std::size_t b = 0; b < n; ++b) {
      std::fill(mixed.begin(), mixed.end(), T{0});
      for (std::size_t i = 0; i < cs; ++i) {
        const T* src = student_map.data() + (b * cs + i) * in_plane;
        for (std::size_t p = 0; p < in_plane; ++p) mixed[p] += wbar[i] * src[p];
      }
      rs.apply(mixed.data(), out.data() + b * out_plane);
    }
    return out;
  }

  /// Backward of pooled_descriptor: accumulates the projector gradient and adds into `student_grad`.
  void pooled_descriptor_backward(std::size_t t, std::size_t s, const tensor<T>& student_map, const tensor<T>& grad,
                                  tensor<T>& student_grad) {
    auto& w = weight(t, s);
    const std::size_t n = student_map.dim(0), ct = teacher_[t].channels, cs = student_[s].channels;
    if (student_grad.empty()) student_grad = tensor<T>(student_map.shape());
    if (!teacher_[t].spatial()) {
      const tensor<T> v = gap_hw(student_map);
      nn::matrix_map<T>(w.grad.data(), ct, cs).noalias() +=
          nn::const_matrix_map<T>(grad.data(), n, ct).transpose() * nn::const_matrix_map<T>(v.data(), n, cs);
      tensor<T> dv({n, cs});
      nn::matrix_map<T>(dv.data(), n, cs).noalias() =
          nn::const_matrix_map<T>(grad.data(), n, ct) * nn::const_matrix_map<T>(w.value.data(), ct, cs);
      const std::size_t plane = plane_size(student_map);
      for (std::size_t i = 0; i < n * cs; ++i) {
        T* dst = student_grad.data() + i * plane;
        const T g = dv[i] / static_cast<T>(plane);
        for (std::size_t p = 0; p < plane; ++p) dst[p] += g;
      }
      return;
    }
    const std::vector<T> wbar = column_means(t, s);
    const auto& rs = resizers_[t * student_.size() + s];
    const std::size_t in_plane = rs.in_plane(), out_plane = rs.out_plane();
    std::vector<T> dmixed(in_plane);
    std::vector<T> dwbar(cs, T{0});
    for (std::size_t b = 0; b < n; ++b) {
      std::fill(dmixed.begin(), dmixed.end(), T{0});
      rs.adjoint(grad.data() + b * out_plane, dmixed.data());
      for (std::size_t i = 0; i < cs; ++i) {
        const T* src = student_map.data() + (b * cs + i) * in_plane;
        T* dst = student_grad.data() + (b * cs + i) * in_plane;
        T acc = 0;
        for (std::size_t p = 0; p < in_plane; ++p) {
          acc += src[p] * dmixed[p];
          dst[p] += wbar[i] * dmixed[p];
        }
        dwbar[i] += acc;
      }
    }
    for (std::size_t o = 0; o < ct; ++o) {
      for (std::size_t i = 0; i < cs; ++i) w.grad[o * cs + i] += dwbar[i] / static_cast<T>(ct);
    }
  }

 private:
  void check(std::size_t t, std::size_t s, const tensor<T>& student_map) const {
    if (t >= teacher_.size() || s >= student_.size()) throw structural_error("projection pair out of range");
    const auto g = tap_geometry::of(student_map);
    const auto& e = student_[s];
    if (g.channels != e.channels || g.height != e.height || g.width != e.width) {
      throw structural_error("student tap " + std::to_string(s) + " geometry changed: got " +
                             shape_string(student_map.shape()));
    }
  }

  std::vector<T> column_means(std::size_t t, std::size_t s) const {
    const auto& w = weight(t, s).value;
    const std::size_t ct = w.dim(0), cs = w.dim(1);
    std::vector<T> wbar(cs, T{0});
    for (std::size_t o = 0; o < ct; ++o) {
      for (std::size_t i = 0; i < cs; ++i) wbar[i] += w[o * cs + i];
    }
    for (auto& v : wbar) v /= static_cast<T>(ct);
    return wbar;
  }

  std::vector<tap_geometry> teacher_, student_;
  std::vector<nn::parameter<T>> weights_;
  std::vector<nn::bilinear_resize> resizers_;
};

}  // namespace sadprune
