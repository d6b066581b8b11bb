#pragma once

#include <vector>

#include "sadprune/distill/attention.hpp"
#include "sadprune/distill/losses.hpp"
#include "sadprune/distill/projection.hpp"

namespace sadprune {

struct distill_settings {
  double beta = 0.0;         // attention-loss weight
  double alpha_kd = 0.0;     // soft-target weight; 0 is class + beta * attention
  double temperature = 4.0;  // soft-target temperature
  std::size_t d = 128;       // query/key width
  activation f_q = activation::identity;
  activation f_k = activation::identity;

  bool uses_teacher() const { return beta > 0.0 || alpha_kd > 0.0; }
};

/// Per-batch loss breakdown plus the gradients that drive the student's backward pass.
template <typename T>
struct distill_step {
  T total = 0;
  T class_loss = 0;
  T attention_loss = 0;
  T kd_loss = 0;
  tensor<T> grad_outputs;
  std::vector<tensor<T>> tap_grads;  // empty when beta == 0
  attention_matrix<T> alpha;
};

/// Student objective: class loss, optional soft targets and the attention-weighted feature loss.
/// Owns the attention head and projection bank, which train alongside the student and are never pruned.
template <typename T>
class distiller {
 public:
  distiller() = default;

  /// Sizes head and projectors from one pair of sample feature sets.
  distiller(const distill_settings& settings, const feature_set<T>& teacher_sample,
            const feature_set<T>& student_sample, rng_t& rng)
      : settings_(settings) {
    if (settings.beta < 0) throw config_error("beta must be >= 0");
    if (settings.alpha_kd < 0 || settings.alpha_kd > 1) throw config_error("alpha_kd must lie in [0, 1]");
    if (!(settings.temperature > 0)) throw config_error("temperature must be > 0");
    std::vector<std::size_t> tc, sc;
    std::vector<tap_geometry> tg, sg;
    for (const auto& f : teacher_sample) {
      tc.push_back(f.channels());
      tg.push_back(tap_geometry::of(f.values));
    }
    for (const auto& f : student_sample) {
      sc.push_back(f.channels());
      sg.push_back(tap_geometry::of(f.values));
    }
    head_ = attention_head<T>::create(tc, sc, settings.d, rng, settings.f_q, settings.f_k);
    bank_ = projection_bank<T>::create(tg, sg, rng);
  }

  const distill_settings& settings() const { return settings_; }
  attention_head<T>& head() { return head_; }
  projection_bank<T>& bank() { return bank_; }

  std::vector<nn::parameter<T>*> parameters() {
    auto ps = head_.parameters();
    for (auto* p : bank_.parameters()) ps.push_back(p);
    return ps;
  }

  /// Classification step. `teacher` may be null when the teacher is unused.
  distill_step<T> classification(const forward_result<T>* teacher, const forward_result<T>& student,
                                 const std::vector<int>& labels) {
    distill_step<T> r;
    auto ce = cross_entropy(student.outputs, labels);
    r.class_loss = ce.value;
    const T akd = static_cast<T>(settings_.alpha_kd);
    r.grad_outputs = ce.grad;
    r.grad_outputs *= T{1} - akd;
    if (akd > T{0}) {
      auto kd = soft_target_loss(require(teacher).outputs, student.outputs, static_cast<T>(settings_.temperature));
      r.kd_loss = kd.value;
      kd.grad *= akd;
      r.grad_outputs += kd.grad;
    }
    attention_terms(teacher, student, r);
    r.total = student_loss(r.class_loss, r.attention_loss, r.kd_loss, static_cast<T>(settings_.beta), akd);
    return r;
  }

  /// Regression step: MSE class loss, no soft-target term.
  distill_step<T> regression(const forward_result<T>* teacher, const forward_result<T>& student,
                             const std::vector<T>& targets) {
    distill_step<T> r;
    auto mse = mse_loss(student.outputs, targets);
    r.class_loss = mse.value;
    r.grad_outputs = mse.grad;
    attention_terms(teacher, student, r);
    r.total = student_loss(r.class_loss, r.attention_loss, T{0}, static_cast<T>(settings_.beta), T{0});
    return r;
  }

 private:
  static const forward_result<T>& require(const forward_result<T>* teacher) {
    if (!teacher) throw structural_error("distillation term requested without teacher outputs");
    return *teacher;
  }

  void attention_terms(const forward_result<T>* teacher, const forward_result<T>& student, distill_step<T>& r) {
    const T beta = static_cast<T>(settings_.beta);
    if (!(beta > T{0})) return;
    const auto& tf = require(teacher).features;
    attention_pass<T> pass(head_, tf, student.features);
    r.alpha = pass.alpha();
    auto att = attention_loss_with_grad(tf, student.features, r.alpha, bank_, true, beta);
    r.attention_loss = att.value;
    att.d_alpha *= beta;
    pass.backward(att.d_alpha, att.student_grads);
    r.tap_grads = std::move(att.student_grads);
  }

  distill_settings settings_;
  attention_head<T> head_;
  projection_bank<T> bank_;
};

}  // namespace sadprune
