#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sadprune/core/random.hpp"
#include "sadprune/core/tensor.hpp"

namespace sadprune::nn {

template <typename T>
using row_matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using matrix_map = Eigen::Map<row_matrix<T>>;
template <typename T>
using const_matrix_map = Eigen::Map<const row_matrix<T>>;

/// A trainable array with its accumulated gradient.
template <typename T>
struct parameter {
  std::string name;
  tensor<T> value;
  tensor<T> grad;

  parameter() = default;
  parameter(std::string n, shape_t shape) : name(std::move(n)), value(shape), grad(shape) {}
};

/// Non-trainable state that still belongs to the model (batch-norm running statistics).
template <typename T>
struct buffer {
  std::string name;
  tensor<T> value;
};

/// 2-D convolution without bias, lowered to GEMM through im2col.
template <typename T>
class conv2d {
 public:
  conv2d() = default;
  conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t pad)
      : weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}),
        in_(in_channels),
        out_(out_channels),
        k_(kernel),
        stride_(stride),
        pad_(pad) {}

  /// He-normal in fan-out mode, as in the reference wide-resnet code.
  void init(rng_t& rng) {
    double fan_out = static_cast<double>(k_ * k_ * out_);
    fill_normal(weight_.value.values(), rng, 0.0, std::sqrt(2.0 / fan_out));
  }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  parameter<T>& weight() { return weight_; }
  const parameter<T>& weight() const { return weight_; }

  std::size_t out_size(std::size_t in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  tensor<T> forward(const tensor<T>& x) {
    if (x.rank() != 4 || x.dim(1) != in_) {
      throw input_error(weight_.name + ": expected (N," + std::to_string(in_) + ",H,W) input, got " +
                        shape_string(x.shape()));
    }
    input_ = x;
    const std::size_t n = x.dim(0), oh = out_size(x.dim(2)), ow = out_size(x.dim(3));
    const std::size_t plane = oh * ow, rows = in_ * k_ * k_;
    tensor<T> y({n, out_, oh, ow});
    const_matrix_map<T> w(weight_.value.data(), out_, rows);
    for (std::size_t first = 0; first < n; first += chunk(plane)) {
      const std::size_t count = std::min(chunk(plane), n - first);
      const std::size_t cols = count * plane;
      col_.resize(rows * cols);
      im2col(x, first, count, oh, ow);
      out_buf_.resize(out_ * cols);
      matrix_map<T> out(out_buf_.data(), out_, cols);
      out.noalias() = w * const_matrix_map<T>(col_.data(), rows, cols);
      for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t c = 0; c < out_; ++c) {
          std::copy_n(out_buf_.data() + c * cols + s * plane, plane, &y.at(first + s, c, 0, 0));
        }
      }
    }
    return y;
  }

  /// Accumulates the weight gradient; returns the input gradient unless `need_input_grad` is false.
  tensor<T> backward(const tensor<T>& dy, bool need_input_grad = true) {
    const tensor<T>& x = input_;
    const std::size_t n = x.dim(0), oh = dy.dim(2), ow = dy.dim(3);
    const std::size_t plane = oh * ow, rows = in_ * k_ * k_;
    tensor<T> dx;
    if (need_input_grad) dx = tensor<T>(x.shape());
    const_matrix_map<T> w(weight_.value.data(), out_, rows);
    matrix_map<T> dw(weight_.grad.data(), out_, rows);
    for (std::size_t first = 0; first < n; first += chunk(plane)) {
      const std::size_t count = std::min(chunk(plane), n - first);
      const std::size_t cols = count * plane;
      out_buf_.resize(out_ * cols);
      for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t c = 0; c < out_; ++c) {
          std::copy_n(&dy.at(first + s, c, 0, 0), plane, out_buf_.data() + c * cols + s * plane);
        }
      }
      const_matrix_map<T> dout(out_buf_.data(), out_, cols);
      col_.resize(rows * cols);
      im2col(x, first, count, oh, ow);
      dw.noalias() += dout * const_matrix_map<T>(col_.data(), rows, cols).transpose();
      if (need_input_grad) {
        matrix_map<T> dcol(col_.data(), rows, cols);
        dcol.noalias() = w.transpose() * dout;
        col2im(dx, first, count, oh, ow);
      }
    }
    return dx;
  }

 private:
  // Samples per GEMM so the column buffer stays near 4M entries.
  std::size_t chunk(std::size_t plane) const {
    const std::size_t per = in_ * k_ * k_ * plane;
    return std::max<std::size_t>(1, (std::size_t{1} << 22) / std::max<std::size_t>(per, 1));
  }

  // Output columns q whose input column q * stride + kj - pad lands inside [0, w).
  std::pair<std::size_t, std::size_t> valid_columns(std::size_t kj, std::size_t w, std::size_t ow) const {
    const long off = static_cast<long>(kj) - static_cast<long>(pad_);
    const long st = static_cast<long>(stride_);
    const long lo = off >= 0 ? 0 : (-off + st - 1) / st;
    const long hi = (static_cast<long>(w) - 1 - off) < 0 ? 0 : (static_cast<long>(w) - 1 - off) / st + 1;
    const long end = std::min<long>(hi, static_cast<long>(ow));
    return {static_cast<std::size_t>(std::min(lo, end)), static_cast<std::size_t>(std::max(lo, end))};
  }

  void im2col(const tensor<T>& x, std::size_t first, std::size_t count, std::size_t oh, std::size_t ow) {
    const std::size_t h = x.dim(2), w = x.dim(3), plane = oh * ow, cols = count * plane;
    for (std::size_t c = 0; c < in_; ++c) {
      for (std::size_t ki = 0; ki < k_; ++ki) {
        for (std::size_t kj = 0; kj < k_; ++kj) {
          const auto [qlo, qhi] = valid_columns(kj, w, ow);
          const long shift = static_cast<long>(kj) - static_cast<long>(pad_);
          T* row = col_.data() + ((c * k_ + ki) * k_ + kj) * cols;
          for (std::size_t s = 0; s < count; ++s) {
            const T* src = &x.at(first + s, c, 0, 0);
            T* dst = row + s * plane;
            for (std::size_t r = 0; r < oh; ++r) {
              const long ih = static_cast<long>(r * stride_ + ki) - static_cast<long>(pad_);
              T* out_row = dst + r * ow;
              if (ih < 0 || ih >= static_cast<long>(h)) {
                std::fill_n(out_row, ow, T{0});
                continue;
              }
              const T* in_row = src + ih * static_cast<long>(w);
              std::fill_n(out_row, qlo, T{0});
              if (stride_ == 1) {
                std::copy(in_row + (static_cast<long>(qlo) + shift), in_row + (static_cast<long>(qhi) + shift),
                          out_row + qlo);
              } else {
                for (std::size_t q = qlo; q < qhi; ++q) out_row[q] = in_row[static_cast<long>(q * stride_) + shift];
              }
              std::fill(out_row + qhi, out_row + ow, T{0});
            }
          }
        }
      }
    }
  }

  void col2im(tensor<T>& dx, std::size_t first, std::size_t count, std::size_t oh, std::size_t ow) const {
    const std::size_t h = dx.dim(2), w = dx.dim(3), plane = oh * ow, cols = count * plane;
    for (std::size_t c = 0; c < in_; ++c) {
      for (std::size_t ki = 0; ki < k_; ++ki) {
        for (std::size_t kj = 0; kj < k_; ++kj) {
          const auto [qlo, qhi] = valid_columns(kj, w, ow);
          const long shift = static_cast<long>(kj) - static_cast<long>(pad_);
          const T* row = col_.data() + ((c * k_ + ki) * k_ + kj) * cols;
          for (std::size_t s = 0; s < count; ++s) {
            T* dst = &dx.at(first + s, c, 0, 0);
            const T* src = row + s * plane;
            for (std::size_t r = 0; r < oh; ++r) {
              const long ih = static_cast<long>(r * stride_ + ki) - static_cast<long>(pad_);
              if (ih < 0 || ih >= static_cast<long>(h)) continue;
              T* in_row = dst + ih * static_cast<long>(w);
              const T* g = src + r * ow;
              if (stride_ == 1) {
                T* d = in_row + (static_cast<long>(qlo) + shift);
                for (std::size_t q = qlo; q < qhi; ++q) d[q - qlo] += g[q];
              } else {
                for (std::size_t q = qlo; q < qhi; ++q) in_row[static_cast<long>(q * stride_) + shift] += g[q];
              }
            }
          }
        }
      }
    }
  }

  parameter<T> weight_;
  std::size_t in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  tensor<T> input_;
  aligned_vector<T> col_;
  aligned_vector<T> out_buf_;
};

namespace detail {

template <typename T>
Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> plane_array(const T* p, std::size_t n) {
  return Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(p, static_cast<Eigen::Index>(n));
}

}  // namespace detail

/// Batch normalization over all axes but the channel axis; works on (N,C) and (N,C,H,W).
template <typename T>
class batch_norm {
 public:
  batch_norm() = default;
  batch_norm(const std::string& name, std::size_t channels)
      : gamma_(name + ".gamma", {channels}),
        beta_(name + ".beta", {channels}),
        running_mean_{name + ".running_mean", tensor<T>({channels})},
        running_var_{name + ".running_var", tensor<T>({channels}, T{1})} {
    gamma_.value.fill(T{1});
  }

  parameter<T>& gamma() { return gamma_; }
  parameter<T>& beta() { return beta_; }
  const parameter<T>& gamma() const { return gamma_; }
  const parameter<T>& beta() const { return beta_; }
  buffer<T>& running_mean() { return running_mean_; }
  buffer<T>& running_var() { return running_var_; }
  std::size_t channels() const { return gamma_.value.size(); }

  tensor<T> forward(const tensor<T>& x, bool training) {
    const std::size_t n = x.dim(0), c = x.dim(1), plane = plane_size(x);
    if (c != channels()) {
      throw input_error(gamma_.name + ": channel mismatch, input " + shape_string(x.shape()));
    }
    training_ = training;
    tensor<T> y(x.shape());
    if (xhat_.shape() != x.shape()) xhat_ = tensor<T>(x.shape());
    inv_std_.assign(c, T{0});
    const double count = static_cast<double>(n * plane);
    const T* xp = x.data();
    T* xh = xhat_.data();
    T* yp = y.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean, var;
      if (training) {
        double sum = 0;
        for (std::size_t s = 0; s < n; ++s) sum += detail::plane_array(xp + (s * c + ch) * plane, plane).sum();
        mean = sum / count;
        // Per-sample partial sums in T, accumulated across samples in double.
        double sq = 0;
        const T mt = static_cast<T>(mean);
        for (std::size_t s = 0; s < n; ++s) sq += (detail::plane_array(xp + (s * c + ch) * plane, plane) - mt).square().sum();
        var = sq / count;
        const double unbiased = count > 1 ? var * count / (count - 1) : var;
        running_mean_.value[ch] = static_cast<T>((1 - momentum) * running_mean_.value[ch] + momentum * mean);
        running_var_.value[ch] = static_cast<T>((1 - momentum) * running_var_.value[ch] + momentum * unbiased);
      } else {
        mean = running_mean_.value[ch];
        var = running_var_.value[ch];
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var + epsilon));
      inv_std_[ch] = inv;
      const T g = gamma_.value[ch], b = beta_.value[ch], m = static_cast<T>(mean);
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T v = (xp[off + i] - m) * inv;
          xh[off + i] = v;
          yp[off + i] = g * v + b;
        }
      }
    }
    return y;
  }

  tensor<T> backward(const tensor<T>& dy) {
    const std::size_t n = dy.dim(0), c = dy.dim(1), plane = plane_size(dy);
    tensor<T> dx(dy.shape());
    const T count = static_cast<T>(n * plane);
    const T* dyp = dy.data();
    const T* xh = xhat_.data();
    T* dxp = dx.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      T dbeta = 0, dgamma = 0;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * c + ch) * plane;
        const auto d = detail::plane_array(dyp + off, plane);
        dbeta += d.sum();
        dgamma += (d * detail::plane_array(xh + off, plane)).sum();
      }
      beta_.grad[ch] += dbeta;
      gamma_.grad[ch] += dgamma;
      const T g = gamma_.value[ch], inv = inv_std_[ch];
      const T scale = training_ ? g * inv / count : g * inv;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * c + ch) * plane;
        if (training_) {
          for (std::size_t i = 0; i < plane; ++i) dxp[off + i] = scale * (count * dyp[off + i] - dbeta - xh[off + i] * dgamma);
        } else {
          for (std::size_t i = 0; i < plane; ++i) dxp[off + i] = scale * dyp[off + i];
        }
      }
    }
    return dx;
  }

  static constexpr double momentum = 0.1;
  static constexpr double epsilon = 1e-5;

 private:
  parameter<T> gamma_, beta_;
  buffer<T> running_mean_, running_var_;
  tensor<T> xhat_;
  std::vector<T> inv_std_;
  bool training_ = true;
};

/// Fully connected layer on (N, in) inputs.
template <typename T>
class linear {
 public:
  linear() = default;
  linear(const std::string& name, std::size_t in, std::size_t out)
      : weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {}

  /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
  void init(rng_t& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features()));
    fill_uniform(weight_.value.values(), rng, -bound, bound);
    fill_uniform(bias_.value.values(), rng, -bound, bound);
  }

  std::size_t in_features() const { return weight_.value.dim(1); }
  std::size_t out_features() const { return weight_.value.dim(0); }
  parameter<T>& weight() { return weight_; }
  parameter<T>& bias() { return bias_; }
  const parameter<T>& weight() const { return weight_; }
  const parameter<T>& bias() const { return bias_; }

  tensor<T> forward(const tensor<T>& x) {
    if (x.rank() != 2 || x.dim(1) != in_features()) {
      throw input_error(weight_.name + ": expected (N," + std::to_string(in_features()) + ") input, got " +
                        shape_string(x.shape()));
    }
    input_ = x;
    const std::size_t n = x.dim(0);
    tensor<T> y({n, out_features()});
    matrix_map<T> out(y.data(), n, out_features());
    out.noalias() = const_matrix_map<T>(x.data(), n, in_features()) *
                    const_matrix_map<T>(weight_.value.data(), out_features(), in_features()).transpose();
    out.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.data(), out_features());
    return y;
  }

  tensor<T> backward(const tensor<T>& dy, bool need_input_grad = true) {
    const std::size_t n = dy.dim(0);
    const_matrix_map<T> g(dy.data(), n, out_features());
    matrix_map<T>(weight_.grad.data(), out_features(), in_features()).noalias() +=
        g.transpose() * const_matrix_map<T>(input_.data(), n, in_features());
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad.data(), out_features()) += g.colwise().sum();
    tensor<T> dx;
    if (need_input_grad) {
      dx = tensor<T>({n, in_features()});
      matrix_map<T>(dx.data(), n, in_features()).noalias() =
          g * const_matrix_map<T>(weight_.value.data(), out_features(), in_features());
    }
    return dx;
  }

 private:
  parameter<T> weight_, bias_;
  tensor<T> input_;
};

template <typename T>
tensor<T> relu(tensor<T> x) {
  T* p = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = p[i] > T{0} ? p[i] : T{0};
  return x;
}

/// Gradient through a ReLU given its output.
template <typename T>
tensor<T> relu_backward(const tensor<T>& out, tensor<T> dy) {
  const T* o = out.data();
  T* d = dy.data();
  for (std::size_t i = 0; i < dy.size(); ++i) d[i] = o[i] > T{0} ? d[i] : T{0};
  return dy;
}

/// (N,C,H,W) -> (N,C) spatial mean.
template <typename T>
tensor<T> global_avg_pool(const tensor<T>& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), plane = plane_size(x);
  tensor<T> y({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    T sum = 0;
    for (std::size_t p = 0; p < plane; ++p) sum += x[i * plane + p];
    y[i] = sum / static_cast<T>(plane);
  }
  return y;
}

template <typename T>
tensor<T> global_avg_pool_backward(const tensor<T>& dy, const shape_t& input_shape) {
  tensor<T> dx(input_shape);
  const std::size_t plane = shape_size(input_shape) / dy.size();
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const T g = dy[i] / static_cast<T>(plane);
    std::fill_n(dx.data() + i * plane, plane, g);
  }
  return dx;
}

}  // namespace sadprune::nn
