#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sadprune/distill/attention.hpp"
#include "sadprune/distill/pooling.hpp"
#include "sadprune/distill/projection.hpp"

namespace sadprune {

template <typename T>
struct loss_with_grad {
  T value = 0;
  tensor<T> grad;  // d value / d input
};

namespace detail {

template <typename T>
void require_finite(const feature_set<T>& fs, const char* who) {
  for (const auto& f : fs) {
    if (!f.values.all_finite()) {
      throw numeric_error(std::string(who) + " tap '" + f.layer_id + "' contains non-finite values");
    }
  }
}

template <typename T>
void require_alpha_shape(const attention_matrix<T>& a, std::size_t n, std::size_t m) {
  if (a.alpha.rank() != 2 || a.teacher_taps() != n || a.student_taps() != m) {
    throw structural_error("attention matrix shape " + shape_string(a.alpha.shape()) + " does not match " +
                           std::to_string(n) + "x" + std::to_string(m) + " taps");
  }
}

}  // namespace detail

/// Result of the attention-weighted feature loss with everything needed for back-propagation.
template <typename T>
struct attention_loss_result {
  T value = 0;
  tensor<T> d_alpha;                   // (n, m): batch-mean distances
  std::vector<tensor<T>> student_grads;  // one per student tap
};

/// sum_t sum_s alpha[t][s] * || phi_c(h_t) - phi_c(proj_ts(h_s)) ||_2, averaged over the batch.
/// When `accumulate_grads` is set, projector gradients (times `grad_scale`) are accumulated into
/// the bank and student-tap gradients are returned with the same scale; d_alpha is unscaled.
template <typename T>
attention_loss_result<T> attention_loss_with_grad(const feature_set<T>& teacher, const feature_set<T>& student,
                                                  const attention_matrix<T>& alpha, projection_bank<T>& bank,
                                                  bool accumulate_grads = true, T grad_scale = T{1}) {
  const std::size_t n = teacher.size(), m = student.size();
  if (bank.teacher_taps() != n || bank.student_taps() != m) {
    throw structural_error("projection bank covers " + std::to_string(bank.teacher_taps()) + "x" +
                           std::to_string(bank.student_taps()) + " pairs, features give " + std::to_string(n) + "x" +
                           std::to_string(m));
  }
  detail::require_alpha_shape(alpha, n, m);
  detail::require_finite(teacher, "teacher");
  detail::require_finite(student, "student");

  attention_loss_result<T> r;
  r.d_alpha = tensor<T>({n, m});
  r.student_grads.resize(m);
  for (std::size_t t = 0; t < n; ++t) {
    const tensor<T> u_t = channel_pool_norm(teacher[t].values);
    const std::size_t batch = u_t.dim(0), p = u_t.dim(1);
    for (std::size_t s = 0; s < m; ++s) {
      if (student[s].values.dim(0) != batch) throw structural_error("teacher and student batch sizes differ");
      const T a = alpha(t, s);
      const tensor<T> raw = bank.pooled_descriptor(t, s, student[s].values);
      const tensor<T> u_s = normalize_rows(raw);
      tensor<T> d_u(u_s.shape());
      T dist_sum = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        T sq = 0;
        for (std::size_t j = 0; j < p; ++j) {
          const T diff = u_s[b * p + j] - u_t[b * p + j];
          sq += diff * diff;
        }
        const T dist = std::sqrt(sq);
        dist_sum += dist;
        if (dist > T{0}) {
          const T coef = grad_scale * a / (dist * static_cast<T>(batch));
          for (std::size_t j = 0; j < p; ++j) d_u[b * p + j] = coef * (u_s[b * p + j] - u_t[b * p + j]);
        }
      }
      const T mean_dist = dist_sum / static_cast<T>(batch);
      r.d_alpha[t * m + s] = mean_dist;
      r.value += a * mean_dist;
      if (accumulate_grads && a != T{0} && grad_scale != T{0}) {
        bank.pooled_descriptor_backward(t, s, student[s].values, normalize_rows_backward(raw, d_u),
                                        r.student_grads[s]);
      }
    }
  }
  for (std::size_t s = 0; s < m; ++s) {
    if (r.student_grads[s].empty()) r.student_grads[s] = tensor<T>(student[s].values.shape());
  }
  return r;
}

template <typename T>
T attention_loss(const feature_set<T>& teacher, const feature_set<T>& student, const attention_matrix<T>& alpha,
                 projection_bank<T>& bank) {
  projection_bank<T> scratch = bank;
  return attention_loss_with_grad(teacher, student, alpha, scratch, false).value;
}

/// Mean cross-entropy of logits (N, K) against integer labels.
template <typename T>
loss_with_grad<T> cross_entropy(const tensor<T>& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw input_error("cross_entropy: label count does not match batch");
  loss_with_grad<T> r{T{0}, tensor<T>(logits.shape())};
  for (std::size_t b = 0; b < n; ++b) {
    const T* z = logits.data() + b * k;
    T mx = z[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j]);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - mx);
    const T log_sum = std::log(sum) + mx;
    const auto y = static_cast<std::size_t>(labels[b]);
    if (y >= k) throw input_error("cross_entropy: label " + std::to_string(labels[b]) + " out of range");
    r.value += log_sum - z[y];
    for (std::size_t j = 0; j < k; ++j) {
      r.grad[b * k + j] = (std::exp(z[j] - log_sum) - (j == y ? T{1} : T{0})) / static_cast<T>(n);
    }
  }
  r.value /= static_cast<T>(n);
  return r;
}

/// Mean squared error of predictions (N, 1) against targets.
template <typename T>
loss_with_grad<T> mse_loss(const tensor<T>& predictions, const std::vector<T>& targets) {
  const std::size_t n = predictions.dim(0);
  if (targets.size() != n || predictions.size() != n) throw input_error("mse_loss: shape mismatch");
  loss_with_grad<T> r{T{0}, tensor<T>(predictions.shape())};
  for (std::size_t b = 0; b < n; ++b) {
    const T diff = predictions[b] - targets[b];
    r.value += diff * diff;
    r.grad[b] = T{2} * diff / static_cast<T>(n);
  }
  r.value /= static_cast<T>(n);
  return r;
}

/// Temperature-softened KL(teacher || student) scaled by T^2, averaged over the batch.
/// The gradient is with respect to the student logits.
template <typename T>
loss_with_grad<T> soft_target_loss(const tensor<T>& teacher_logits, const tensor<T>& student_logits, T temperature) {
  if (!(temperature > T{0})) throw config_error("soft-target temperature must be > 0");
  teacher_logits.require_same_shape(student_logits, "soft_target_loss");
  const std::size_t n = student_logits.dim(0), k = student_logits.dim(1);
  loss_with_grad<T> r{T{0}, tensor<T>(student_logits.shape())};
  std::vector<T> log_pt(k), log_ps(k);
  auto log_softmax = [&](const T* z, std::vector<T>& out) {
    T mx = z[0] / temperature;
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j] / temperature);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] / temperature - mx);
    const T lse = std::log(sum) + mx;
    for (std::size_t j = 0; j < k; ++j) out[j] = z[j] / temperature - lse;
  };
  for (std::size_t b = 0; b < n; ++b) {
    log_softmax(teacher_logits.data() + b * k, log_pt);
    log_softmax(student_logits.data() + b * k, log_ps);
    T kl = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T pt = std::exp(log_pt[j]);
      kl += pt * (log_pt[j] - log_ps[j]);
      r.grad[b * k + j] = temperature * (std::exp(log_ps[j]) - pt) / static_cast<T>(n);
    }
    r.value += kl;
  }
  r.value *= temperature * temperature / static_cast<T>(n);
  return r;
}

/// (1 - alpha_kd) * class + alpha_kd * kd + beta * attention. alpha_kd = 0 gives class + beta * attention.
template <typename T>
T student_loss(T class_loss, T att_loss, T kd_loss, T beta, T alpha_kd) {
  if (beta < T{0}) throw config_error("beta must be >= 0");
  if (alpha_kd < T{0} || alpha_kd > T{1}) throw config_error("alpha_kd must lie in [0, 1]");
  if (!std::isfinite(static_cast<double>(class_loss)) || !std::isfinite(static_cast<double>(att_loss)) ||
      !std::isfinite(static_cast<double>(kd_loss))) {
    throw numeric_error("student_loss: non-finite loss term");
  }
  return (T{1} - alpha_kd) * class_loss + alpha_kd * kd_loss + beta * att_loss;
}

}  // namespace sadprune
