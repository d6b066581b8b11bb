#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sadprune/core/random.hpp"
#include "sadprune/distill/pooling.hpp"
#include "sadprune/model_zoo/model.hpp"
#include "sadprune/nn/layers.hpp"

namespace sadprune {

enum class activation { identity, relu };

inline activation parse_activation(const std::string& s) {
  if (s == "identity") return activation::identity;
  if (s == "relu") return activation::relu;
  throw config_error("unknown query/key activation '" + s + "'");
}

inline std::string to_string(activation a) { return a == activation::identity ? "identity" : "relu"; }

/// Learnable layer-matching parameters: queries from teacher taps, keys from student taps.
template <typename T>
struct attention_head {
  std::size_t d = 128;
  std::vector<nn::parameter<T>> w_q;   // per teacher tap, (d, C_t)
  std::vector<nn::parameter<T>> w_k;   // per student tap, (d, C_s)
  std::vector<nn::parameter<T>> w_qk;  // per student tap, (d, d)
  std::vector<nn::parameter<T>> pos_t; // per teacher tap, (d)
  std::vector<nn::parameter<T>> pos_s; // per student tap, (d)
  activation f_q = activation::identity;
  activation f_k = activation::identity;

  static attention_head create(const std::vector<std::size_t>& teacher_channels,
                               const std::vector<std::size_t>& student_channels, std::size_t d, rng_t& rng,
                               activation f_q = activation::identity, activation f_k = activation::identity) {
    if (d == 0) throw config_error("attention width d must be >= 1");
    attention_head h;
    h.d = d;
    h.f_q = f_q;
    h.f_k = f_k;
    auto linear_init = [&](nn::parameter<T>& p, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      fill_uniform(p.value.values(), rng, -bound, bound);
    };
    for (std::size_t t = 0; t < teacher_channels.size(); ++t) {
      h.w_q.emplace_back("attention.w_q." + std::to_string(t), shape_t{d, teacher_channels[t]});
      linear_init(h.w_q.back(), teacher_channels[t]);
    }
    for (std::size_t s = 0; s < student_channels.size(); ++s) {
      h.w_k.emplace_back("attention.w_k." + std::to_string(s), shape_t{d, student_channels[s]});
      linear_init(h.w_k.back(), student_channels[s]);
      h.w_qk.emplace_back("attention.w_qk." + std::to_string(s), shape_t{d, d});
      linear_init(h.w_qk.back(), d);
    }
    for (std::size_t t = 0; t < teacher_channels.size(); ++t) {
      h.pos_t.emplace_back("attention.pos_t." + std::to_string(t), shape_t{d});
      fill_normal(h.pos_t.back().value.values(), rng, 0.0, 0.02);
    }
    for (std::size_t s = 0; s < student_channels.size(); ++s) {
      h.pos_s.emplace_back("attention.pos_s." + std::to_string(s), shape_t{d});
      fill_normal(h.pos_s.back().value.values(), rng, 0.0, 0.02);
    }
    return h;
  }

  std::size_t teacher_taps() const { return w_q.size(); }
  std::size_t student_taps() const { return w_k.size(); }

  std::vector<nn::parameter<T>*> parameters() {
    std::vector<nn::parameter<T>*> ps;
    for (auto* group : {&w_q, &w_k, &w_qk, &pos_t, &pos_s}) {
      for (auto& p : *group) ps.push_back(&p);
    }
    return ps;
  }
};

/// alpha: (teacher taps x student taps), each row a softmax over student taps.
template <typename T>
struct attention_matrix {
  tensor<T> alpha;

  std::size_t teacher_taps() const { return alpha.dim(0); }
  std::size_t student_taps() const { return alpha.dim(1); }
  T operator()(std::size_t t, std::size_t s) const { return alpha[t * alpha.dim(1) + s]; }
};

namespace detail {

template <typename T>
std::vector<T> batch_mean_descriptor(const tensor<T>& f) {
  const tensor<T> pooled = gap_hw(f);
  const std::size_t n = pooled.dim(0), c = pooled.dim(1);
  std::vector<T> mean(c, T{0});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += pooled.at(s, ch);
  }
  for (auto& v : mean) v /= static_cast<T>(n);
  return mean;
}

template <typename T>
std::vector<T> matvec(const tensor<T>& w, const std::vector<T>& x) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  std::vector<T> y(rows, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    y[r] = acc;
  }
  return y;
}

template <typename T>
void activate(std::vector<T>& v, activation a) {
  if (a == activation::relu) {
    for (auto& x : v) x = x > T{0} ? x : T{0};
  }
}

}  // namespace detail

/// Forward + backward of the layer-matching softmax for one batch.
///
/// Q_t = f_Q(W_Q[t] . batchmean(gap_hw(F_t^T))), K_s = f_K(W_K[s] . batchmean(gap_hw(F_s^S))),
/// logit[t][s] = (Q_t . W_QK[s] K_s + pos_t[t] . pos_s[s]) / sqrt(d), alpha[t] = softmax(logit[t]).
template <typename T>
class attention_pass {
 public:
  attention_pass(attention_head<T>& head, const feature_set<T>& teacher, const feature_set<T>& student)
      : head_(&head), teacher_(&teacher), student_(&student) {
    const std::size_t n = head.teacher_taps(), m = head.student_taps(), d = head.d;
    if (teacher.size() != n || student.size() != m) {
      throw structural_error("attention head expects " + std::to_string(n) + " teacher / " + std::to_string(m) +
                             " student taps, got " + std::to_string(teacher.size()) + " / " +
                             std::to_string(student.size()));
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (teacher[t].channels() != head.w_q[t].value.dim(1)) {
        throw structural_error("teacher tap '" + teacher[t].layer_id + "' has " +
                               std::to_string(teacher[t].channels()) + " channels, head expects " +
                               std::to_string(head.w_q[t].value.dim(1)));
      }
      g_t_.push_back(detail::batch_mean_descriptor(teacher[t].values));
      q_pre_.push_back(detail::matvec(head.w_q[t].value, g_t_.back()));
      q_.push_back(q_pre_.back());
      detail::activate(q_.back(), head.f_q);
    }
    for (std::size_t s = 0; s < m; ++s) {
      if (student[s].channels() != head.w_k[s].value.dim(1)) {
        throw structural_error("student tap '" + student[s].layer_id + "' has " +
                               std::to_string(student[s].channels()) + " channels, head expects " +
                               std::to_string(head.w_k[s].value.dim(1)));
      }
      k_s_.push_back(detail::batch_mean_descriptor(student[s].values));
      k_pre_.push_back(detail::matvec(head.w_k[s].value, k_s_.back()));
      k_.push_back(k_pre_.back());
      detail::activate(k_.back(), head.f_k);
      wk_.push_back(detail::matvec(head.w_qk[s].value, k_.back()));
    }
    const T scale = T{1} / std::sqrt(static_cast<T>(d));
    logits_ = tensor<T>({n, m});
    alpha_.alpha = tensor<T>({n, m});
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t s = 0; s < m; ++s) {
        T acc = 0;
        for (std::size_t i = 0; i < d; ++i) {
          acc += q_[t][i] * wk_[s][i] + head.pos_t[t].value[i] * head.pos_s[s].value[i];
        }
        logits_[t * m + s] = acc * scale;
      }
      softmax_row(t);
    }
  }

  const attention_matrix<T>& alpha() const { return alpha_; }
  const tensor<T>& logits() const { return logits_; }

  /// Given dL/dalpha (n x m), accumulates head gradients and adds student-feature gradients into
  /// `student_grads` (one tensor per student tap, shaped like the tap; empty entries are allocated).
  void backward(const tensor<T>& d_alpha, std::vector<tensor<T>>& student_grads) {
    auto& head = *head_;
    const std::size_t n = head.teacher_taps(), m = head.student_taps(), d = head.d;
    const T scale = T{1} / std::sqrt(static_cast<T>(d));
    std::vector<std::vector<T>> dq(n, std::vector<T>(d, T{0}));
    std::vector<std::vector<T>> dk(m, std::vector<T>(d, T{0}));
    for (std::size_t t = 0; t < n; ++t) {
      T dot = 0;
      for (std::size_t s = 0; s < m; ++s) dot += alpha_(t, s) * d_alpha[t * m + s];
      for (std::size_t s = 0; s < m; ++s) {
        const T a = alpha_(t, s) * (d_alpha[t * m + s] - dot) * scale;
        if (a == T{0}) continue;
        auto& wqk = head.w_qk[s];
        for (std::size_t i = 0; i < d; ++i) {
          dq[t][i] += a * wk_[s][i];
          head.pos_t[t].grad[i] += a * head.pos_s[s].value[i];
          head.pos_s[s].grad[i] += a * head.pos_t[t].value[i];
          const T aq = a * q_[t][i];
          for (std::size_t j = 0; j < d; ++j) {
            wqk.grad[i * d + j] += aq * k_[s][j];
            dk[s][j] += aq * wqk.value[i * d + j];
          }
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t c = g_t_[t].size();
      for (std::size_t i = 0; i < d; ++i) {
        const T g = head.f_q == activation::relu && !(q_pre_[t][i] > T{0}) ? T{0} : dq[t][i];
        if (g == T{0}) continue;
        for (std::size_t ch = 0; ch < c; ++ch) head.w_q[t].grad[i * c + ch] += g * g_t_[t][ch];
      }
    }
    if (student_grads.size() != m) student_grads.resize(m);
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t c = k_s_[s].size();
      std::vector<T> dks(c, T{0});
      for (std::size_t i = 0; i < d; ++i) {
        const T g = head.f_k == activation::relu && !(k_pre_[s][i] > T{0}) ? T{0} : dk[s][i];
        if (g == T{0}) continue;
        for (std::size_t ch = 0; ch < c; ++ch) {
          head.w_k[s].grad[i * c + ch] += g * k_s_[s][ch];
          dks[ch] += g * head.w_k[s].value[i * c + ch];
        }
      }
      const tensor<T>& f = (*student_)[s].values;
      if (student_grads[s].empty()) student_grads[s] = tensor<T>(f.shape());
      const std::size_t batch = f.dim(0), plane = plane_size(f);
      const T denom = static_cast<T>(batch * plane);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          T* dst = student_grads[s].data() + (b * c + ch) * plane;
          const T g = dks[ch] / denom;
          for (std::size_t p = 0; p < plane; ++p) dst[p] += g;
        }
      }
    }
  }

 private:
  void softmax_row(std::size_t t) {
    const std::size_t m = logits_.dim(1);
    T mx = logits_[t * m];
    for (std::size_t s = 1; s < m; ++s) mx = std::max(mx, logits_[t * m + s]);
    T sum = 0;
    for (std::size_t s = 0; s < m; ++s) {
      alpha_.alpha[t * m + s] = std::exp(logits_[t * m + s] - mx);
      sum += alpha_.alpha[t * m + s];
    }
    for (std::size_t s = 0; s < m; ++s) alpha_.alpha[t * m + s] /= sum;
  }

  attention_head<T>* head_;
  const feature_set<T>* teacher_;
  const feature_set<T>* student_;
  std::vector<std::vector<T>> g_t_, q_pre_, q_, k_s_, k_pre_, k_, wk_;
  tensor<T> logits_;
  attention_matrix<T> alpha_;
};

/// Layer-matching probabilities for one batch (no gradients).
template <typename T>
attention_matrix<T> attention_weights(const feature_set<T>& teacher, const feature_set<T>& student,
                                      attention_head<T>& head) {
  return attention_pass<T>(head, teacher, student).alpha();
}

/// Row-wise softmax of an arbitrary logit matrix (used for hand-set logits).
template <typename T>
attention_matrix<T> softmax_rows(const tensor<T>& logits) {
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  attention_matrix<T> a{tensor<T>({n, m})};
  for (std::size_t t = 0; t < n; ++t) {
    T mx = logits[t * m];
    for (std::size_t s = 1; s < m; ++s) mx = std::max(mx, logits[t * m + s]);
    T sum = 0;
    for (std::size_t s = 0; s < m; ++s) sum += (a.alpha[t * m + s] = std::exp(logits[t * m + s] - mx));
    for (std::size_t s = 0; s < m; ++s) a.alpha[t * m + s] /= sum;
  }
  return a;
}

}  // namespace sadprune
