#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadprune/data/dataset.hpp"
#include "sadprune/distill/distiller.hpp"
#include "sadprune/io/checkpoint.hpp"
#include "sadprune/metrics/metrics.hpp"
#include "sadprune/model_zoo/zoo.hpp"
#include "sadprune/prune/ranking.hpp"
#include "sadprune/prune/reinit.hpp"
#include "sadprune/train/optimizer.hpp"
#include "sadprune/train/records.hpp"
#include "sadprune/train/schedule.hpp"

namespace sadprune {

struct train_options {
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::size_t eval_batch_size = 250;
  lr_schedule lr;
  double momentum = 0.9;
  double weight_decay = 0.0;
  distill_settings distill;
  std::optional<prune_config> prune;     // none: masks stay fixed
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints written

  void validate() const {
    if (epochs == 0) throw config_error("epochs must be >= 1");
    if (batch_size == 0 || eval_batch_size == 0) throw config_error("batch sizes must be >= 1");
    lr.validate();
    if (momentum < 0 || momentum >= 1) throw config_error("momentum must lie in [0, 1)");
    if (weight_decay < 0) throw config_error("weight decay must be >= 0");
    if (prune) {
      prune->validate();
      if (prune->strat == strategy::sad) throw config_error("strategy SAD does not prune");
    }
  }
};

/// Optional callbacks: phase markers for power tagging, a cumulative energy probe and a
/// per-epoch observer.
struct train_hooks {
  std::function<void(const std::string&)> on_phase;
  std::function<double()> energy_j;
  std::function<void(const epoch_record&)> on_epoch;
};

struct prune_event {
  std::size_t epoch = 0;
  std::size_t round = 0;
  std::size_t removed = 0;
  double sparsity_before = 0;
  double sparsity_after = 0;
  bool saturated = false;
  bool skipped = false;  // nothing removed, weights left untouched
};

inline nlohmann::json to_json_value(const prune_event& e) {
  return {{"epoch", e.epoch},
          {"round", e.round},
          {"removed", e.removed},
          {"sparsity_before", e.sparsity_before},
          {"sparsity_after", e.sparsity_after},
          {"saturated", e.saturated},
          {"skipped", e.skipped}};
}

inline prune_event prune_event_from_json(const nlohmann::json& j) {
  return {j.at("epoch").get<std::size_t>(),        j.at("round").get<std::size_t>(),
          j.at("removed").get<std::size_t>(),      j.at("sparsity_before").get<double>(),
          j.at("sparsity_after").get<double>(),    j.at("saturated").get<bool>(),
          j.at("skipped").get<bool>()};
}

struct winning_ticket {
  std::size_t round = 0;
  std::size_t epoch = 0;
  double sparsity = 0;
  double metric = 0;
  std::string checkpoint;
};

inline nlohmann::json to_json_value(const winning_ticket& t) {
  return {{"round", t.round}, {"epoch", t.epoch}, {"sparsity", t.sparsity}, {"metric", t.metric},
          {"checkpoint", t.checkpoint}};
}

/// Best record per sparsity plateau, then the best plateau; equal metrics favour the sparser
/// plateau. `checkpoint_for` maps a plateau's sparsity to its stored checkpoint (may be null).
inline winning_ticket select_winning_ticket(const std::vector<epoch_record>& history, bool higher_is_better,
                                            const std::function<std::string(double)>& checkpoint_for = {}) {
  if (history.empty()) throw input_error("cannot select a winning ticket from an empty history");
  auto better = [&](double a, double b) { return higher_is_better ? a > b : a < b; };
  std::map<double, const epoch_record*> best;  // keyed by sparsity
  for (const auto& r : history) {
    if (!std::isfinite(r.metric)) continue;
    auto& slot = best[r.cumulative_sparsity];
    if (!slot || better(r.metric, slot->metric)) slot = &r;
  }
  if (best.empty()) throw input_error("no finite evaluation metric in history");
  const epoch_record* pick = nullptr;
  for (const auto& [sparsity, r] : best) {  // ascending sparsity: ">=" lets ties move to the sparser plateau
    if (!pick || better(r->metric, pick->metric) || r->metric == pick->metric) pick = r;
  }
  winning_ticket t{pick->round, pick->epoch, pick->cumulative_sparsity, pick->metric, {}};
  if (checkpoint_for) t.checkpoint = checkpoint_for(pick->cumulative_sparsity);
  return t;
}

struct train_result {
  std::vector<epoch_record> history;
  std::vector<prune_event> events;
  mask_set masks;
  std::optional<winning_ticket> ticket;
  bool aborted = false;
  nlohmann::json diagnostic;  // set when aborted
};

struct evaluation {
  double metric = 0;  // accuracy or MSE
  double mae = std::numeric_limits<double>::quiet_NaN();
};

/// Validation pass in eval mode (no augmentation, running batch-norm statistics).
template <typename T>
evaluation evaluate(model<T>& m, const dataset& data, std::size_t batch_size = 250) {
  evaluation e;
  std::vector<int> pred, labels;
  std::vector<double> y, yhat;
  for (const auto& idx : batch_indices(data.size(), batch_size, nullptr)) {
    const auto b = data.make_batch<T>(idx, nullptr);
    const auto out = m.forward(b.x, false);
    if (data.task == task_kind::classification) {
      const auto p = argmax_rows(out.outputs);
      pred.insert(pred.end(), p.begin(), p.end());
      labels.insert(labels.end(), b.labels.begin(), b.labels.end());
    } else {
      for (std::size_t i = 0; i < b.size(); ++i) {
        y.push_back(static_cast<double>(b.targets[i]));
        yhat.push_back(static_cast<double>(out.outputs[i]));
      }
    }
  }
  if (data.task == task_kind::classification) {
    e.metric = accuracy(pred, labels);
  } else {
    e.metric = mse(y, yhat);
    e.mae = mae(y, yhat);
  }
  return e;
}

/// The distillation/pruning epoch loop. The teacher (optional) is only ever run in eval mode.
/// Each epoch: train on shuffled batches, evaluate, record, then prune when epoch % every == 0
/// and rewind per strategy (SP-SAD: weights at the pruning event; LTH-SAD: initial weights).
template <typename T>
class trainer {
 public:
  trainer(train_options opt, model<T>& student, model<T>* teacher, const dataset& train, const dataset& val,
          train_hooks hooks = {})
      : opt_(std::move(opt)),
        student_(student),
        teacher_(teacher),
        train_(train),
        val_(val),
        hooks_(std::move(hooks)),
        student_opt_(opt_.momentum, opt_.weight_decay),
        distill_opt_(opt_.momentum, opt_.weight_decay),
        data_rng_(derive_seed(opt_.seed, 100)) {
    opt_.validate();
    train_.validate();
    val_.validate();
    if (train_.task != student.spec().task || val_.task != student.spec().task) {
      throw structural_error("dataset task does not match the student's task");
    }
    if (opt_.distill.uses_teacher() && !teacher_) throw structural_error("distillation requested without a teacher");
    masks_ = mask_set::all_ones(student.prunable_layers());
    if (opt_.distill.uses_teacher()) {
      std::vector<std::size_t> probe{0, std::min<std::size_t>(1, train_.size() - 1)};
      const auto b = train_.make_batch<T>(probe, nullptr);
      const auto tf = teacher_->forward(b.x, false);
      const auto sf = student_.forward(b.x, false);
      rng_t rng(derive_seed(opt_.seed, 200));
      distiller_ = distiller<T>(opt_.distill, tf.features, sf.features, rng);
    }
    init_ = snapshot(student_, snapshot_tag::init);
    previous_ = snapshot(student_, snapshot_tag::previous_round);
  }

  /// Starts from a pre-sparsified student: masks are applied and become the init state.
  void set_masks(const mask_set& masks) {
    masks.require_matches(student_.prunable_layers());
    masks_ = masks;
    apply_mask(student_, masks_);
    init_ = snapshot(student_, snapshot_tag::init);
    previous_ = snapshot(student_, snapshot_tag::previous_round);
    student_opt_.reset();
  }

  const mask_set& masks() const { return masks_; }
  const std::vector<epoch_record>& history() const { return history_; }
  const std::vector<prune_event>& events() const { return events_; }
  std::size_t completed_epochs() const { return epoch_; }
  const weight_snapshot<T>& init_snapshot() const { return init_; }
  bool aborted() const { return aborted_; }
  const nlohmann::json& diagnostic() const { return diagnostic_; }

  /// Runs the remaining epochs and selects the winning ticket.
  train_result run() {
    while (epoch_ < opt_.epochs && !aborted_) step_epoch();
    train_result r;
    r.history = history_;
    r.events = events_;
    r.masks = masks_;
    r.aborted = aborted_;
    r.diagnostic = diagnostic_;
    if (!history_.empty()) {
      r.ticket = select_winning_ticket(history_, higher_is_better(), [this](double s) { return best_path(s); });
    }
    return r;
  }

  /// One epoch. Returns false if training aborted on a non-finite loss.
  bool step_epoch() {
    if (aborted_) return false;
    const auto t0 = std::chrono::steady_clock::now();
    const double e0 = hooks_.energy_j ? hooks_.energy_j() : std::numeric_limits<double>::quiet_NaN();
    const std::size_t epoch = epoch_ + 1;
    const double lr = opt_.lr(epoch_);
    phase("train");

    double sums[4] = {0, 0, 0, 0};
    std::size_t seen = 0, batch_no = 0;
    const auto param_masks = student_.parameter_masks(masks_);
    for (const auto& idx : batch_indices(train_.size(), opt_.batch_size, &data_rng_)) {
      ++batch_no;
      const auto b = train_.make_batch<T>(idx, &data_rng_);
      std::optional<forward_result<T>> tout;
      if (opt_.distill.uses_teacher()) tout = teacher_->forward(b.x, false);
      const auto sout = student_.forward(b.x, true);
      distill_step<T> s;
      if (train_.task == task_kind::classification) {
        s = opt_.distill.uses_teacher() ? distiller_.classification(&*tout, sout, b.labels)
                                        : plain_classification(sout, b.labels);
      } else {
        s = opt_.distill.uses_teacher() ? distiller_.regression(&*tout, sout, b.targets) : plain_regression(sout, b.targets);
      }
      if (!std::isfinite(static_cast<double>(s.total))) {
        abort_run(epoch, batch_no, s, lr);
        return false;
      }
      student_.zero_grad();
      for (auto* p : distiller_.parameters()) p->grad.zero();
      student_.backward(s.grad_outputs, s.tap_grads);
      student_opt_.step(student_.parameters(), param_masks, lr);
      if (opt_.distill.beta > 0) distill_opt_.step(distiller_.parameters(), {}, lr);
      const double w = static_cast<double>(b.size());
      sums[0] += w * static_cast<double>(s.total);
      sums[1] += w * static_cast<double>(s.class_loss);
      sums[2] += w * static_cast<double>(s.attention_loss);
      sums[3] += w * static_cast<double>(s.kd_loss);
      seen += b.size();
    }

    phase("inference");
    const auto ev = evaluate(student_, val_, opt_.eval_batch_size);
    epoch_record rec;
    rec.epoch = epoch;
    rec.round = masks_.round;
    rec.total_loss = sums[0] / static_cast<double>(seen);
    rec.class_loss = sums[1] / static_cast<double>(seen);
    rec.attention_loss = sums[2] / static_cast<double>(seen);
    rec.kd_loss = sums[3] / static_cast<double>(seen);
    rec.metric = ev.metric;
    rec.mae = ev.mae;
    rec.cumulative_sparsity = masks_.cumulative_sparsity;
    rec.learning_rate = lr;
    if (!std::isfinite(rec.metric)) {
      distill_step<T> s;
      s.total = std::numeric_limits<T>::quiet_NaN();
      abort_run(epoch, batch_no, s, lr);
      return false;
    }
    track_best(rec);

    if (opt_.prune && epoch % opt_.prune->every == 0) {
      rec.event = prune(epoch).skipped ? "prune-skipped" : "prune";
    }
    epoch_ = epoch;
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (hooks_.energy_j) rec.energy_j = hooks_.energy_j() - e0;
    history_.push_back(rec);
    if (!opt_.checkpoint_dir.empty()) save_state(opt_.checkpoint_dir / "last.ckpt");
    if (hooks_.on_epoch) hooks_.on_epoch(rec);
    return true;
  }

  /// Extracts the next mask and rewinds per strategy. A round that removes nothing leaves the
  /// weights untouched and is reported as skipped.
  prune_event prune(std::size_t epoch) {
    if (!opt_.prune) throw config_error("pruning requested without a prune configuration");
    prune_report rep;
    const double before = masks_.cumulative_sparsity;
    if (!opt_.checkpoint_dir.empty()) {
      save_model_checkpoint(opt_.checkpoint_dir / ("round_" + std::to_string(masks_.round) + ".ckpt"), student_, masks_,
                            {{"epoch", epoch}, {"seed", opt_.seed}});
    }
    auto next = next_masks(student_, masks_, *opt_.prune, &rep);
    prune_event ev{epoch, next.round, rep.removed, before, next.cumulative_sparsity, rep.saturated, rep.removed == 0};
    masks_ = std::move(next);
    if (!ev.skipped) {
      if (opt_.prune->strat == strategy::sp_sad) {
        previous_ = snapshot(student_, snapshot_tag::previous_round);
        reinit_sp(student_, previous_, masks_, &student_opt_);
      } else {  // LTH-SAD, and the LTH pre-sparsification stage of SS-SAD
        reinit_lth(student_, init_, masks_, &student_opt_);
      }
    }
    events_.push_back(ev);
    return ev;
  }

  /// Full resumable state at an epoch boundary.
  void save_state(const std::filesystem::path& path) {
    tensor_archive<T> a;
    put_model(a, "student/", student_);
    put_snapshot(a, "init/", init_);
    put_snapshot(a, "previous/", previous_);
    const auto& v = student_opt_.velocity();
    for (std::size_t i = 0; i < v.size(); ++i) a.tensors["velocity/" + std::to_string(i)] = v[i];
    if (opt_.distill.uses_teacher()) {
      const auto dp = distiller_.parameters();
      for (std::size_t i = 0; i < dp.size(); ++i) a.tensors["distiller/" + std::to_string(i)] = dp[i]->value;
      const auto& dv = distill_opt_.velocity();
      for (std::size_t i = 0; i < dv.size(); ++i) a.tensors["distiller_velocity/" + std::to_string(i)] = dv[i];
    }
    std::ostringstream rng_state;
    rng_state << data_rng_;
    nlohmann::json hist = nlohmann::json::array(), evs = nlohmann::json::array();
    for (const auto& r : history_) hist.push_back(to_json_value(r));
    for (const auto& e : events_) evs.push_back(to_json_value(e));
    a.meta = {{"kind", "train-state"},   {"epoch", epoch_},       {"spec", to_json_value(student_.spec())},
              {"masks", to_json_value(masks_)}, {"rng", rng_state.str()}, {"history", hist},
              {"events", evs},           {"velocity_count", v.size()},
              {"distiller_velocity_count", opt_.distill.uses_teacher() ? distill_opt_.velocity().size() : 0}};
    nlohmann::json bests = nlohmann::json::array();
    for (const auto& [s, b] : best_) bests.push_back({{"sparsity", s}, {"metric", b.metric}, {"path", b.path}});
    a.meta["best"] = bests;
    save_archive(path, a);
  }

  void load_state(const std::filesystem::path& path) {
    const auto a = load_archive<T>(path);
    const nlohmann::json& meta = a.meta;
    if (meta.value("kind", "") != "train-state") throw ingestion_error(path.string() + ": not a training state");
    if (model_spec_from_json(meta.at("spec")) != student_.spec()) {
      throw structural_error(path.string() + ": state was saved for a different student");
    }
    get_model(a, "student/", student_);
    init_ = get_snapshot(a, "init/", snapshot_tag::init);
    previous_ = get_snapshot(a, "previous/", snapshot_tag::previous_round);
    std::vector<tensor<T>> v;
    for (std::size_t i = 0; i < meta.at("velocity_count").get<std::size_t>(); ++i) {
      v.push_back(a.get("velocity/" + std::to_string(i)));
    }
    student_opt_.set_velocity(std::move(v));
    if (opt_.distill.uses_teacher()) {
      auto dp = distiller_.parameters();
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i]->value = a.get("distiller/" + std::to_string(i));
      std::vector<tensor<T>> dv;
      for (std::size_t i = 0; i < meta.at("distiller_velocity_count").get<std::size_t>(); ++i) {
        dv.push_back(a.get("distiller_velocity/" + std::to_string(i)));
      }
      distill_opt_.set_velocity(std::move(dv));
    }
    std::istringstream rng_state(meta.at("rng").get<std::string>());
    rng_state >> data_rng_;
    masks_ = mask_set_from_json(meta.at("masks"));
    masks_.require_matches(student_.prunable_layers());
    epoch_ = meta.at("epoch").get<std::size_t>();
    history_.clear();
    for (const auto& r : meta.at("history")) history_.push_back(epoch_record_from_json(r));
    events_.clear();
    for (const auto& e : meta.at("events")) events_.push_back(prune_event_from_json(e));
    best_.clear();
    for (const auto& b : meta.at("best")) {
      const nlohmann::json& j = b;
      best_[j.at("sparsity").get<double>()] = {j.at("metric").get<double>(), j.at("path").get<std::string>()};
    }
  }

 private:
  struct plateau_best {
    double metric = 0;
    std::string path;
  };

  bool higher_is_better() const { return train_.task == task_kind::classification; }

  void phase(const char* name) {
    if (hooks_.on_phase) hooks_.on_phase(name);
  }

  distill_step<T> plain_classification(const forward_result<T>& out, const std::vector<int>& labels) {
    auto ce = cross_entropy(out.outputs, labels);
    distill_step<T> s;
    s.class_loss = s.total = ce.value;
    s.grad_outputs = std::move(ce.grad);
    return s;
  }

  distill_step<T> plain_regression(const forward_result<T>& out, const std::vector<T>& targets) {
    auto l = mse_loss(out.outputs, targets);
    distill_step<T> s;
    s.class_loss = s.total = l.value;
    s.grad_outputs = std::move(l.grad);
    return s;
  }

  std::string best_path(double sparsity) const {
    auto it = best_.find(sparsity);
    return it == best_.end() ? std::string() : it->second.path;
  }

  void track_best(const epoch_record& rec) {
    auto it = best_.find(rec.cumulative_sparsity);
    const bool improved = it == best_.end() ||
                          (higher_is_better() ? rec.metric > it->second.metric : rec.metric < it->second.metric);
    if (!improved) return;
    std::string path;
    if (!opt_.checkpoint_dir.empty()) {
      const auto p = opt_.checkpoint_dir / ("best_round_" + std::to_string(rec.round) + ".ckpt");
      save_model_checkpoint(p, student_, masks_, {{"epoch", rec.epoch}, {"seed", opt_.seed}, {"metric", rec.metric}});
      path = p.string();
    }
    best_[rec.cumulative_sparsity] = {rec.metric, path};
  }

  void abort_run(std::size_t epoch, std::size_t batch, const distill_step<T>& s, double lr) {
    aborted_ = true;
    auto num = [](T v) {
      const double d = static_cast<double>(v);
      return std::isfinite(d) ? nlohmann::json(d) : nlohmann::json(std::to_string(d));
    };
    diagnostic_ = {{"reason", "non-finite loss"},     {"epoch", epoch},
                   {"batch", batch},                  {"learning_rate", lr},
                   {"total_loss", num(s.total)},      {"class_loss", num(s.class_loss)},
                   {"attention_loss", num(s.attention_loss)}, {"kd_loss", num(s.kd_loss)},
                   {"completed_epochs", epoch_},      {"cumulative_sparsity", masks_.cumulative_sparsity}};
  }

  train_options opt_;
  model<T>& student_;
  model<T>* teacher_;
  const dataset& train_;
  const dataset& val_;
  train_hooks hooks_;
  sgd<T> student_opt_;
  sgd<T> distill_opt_;
  distiller<T> distiller_;
  rng_t data_rng_;
  mask_set masks_;
  weight_snapshot<T> init_;
  weight_snapshot<T> previous_;
  std::vector<epoch_record> history_;
  std::vector<prune_event> events_;
  std::map<double, plateau_best> best_;
  std::size_t epoch_ = 0;
  bool aborted_ = false;
  nlohmann::json diagnostic_;
};

struct presparsify_result {
  mask_set masks;
  std::vector<epoch_record> history;
  std::size_t rounds = 0;
  bool saturated = false;  // stopped before reaching the target
  std::string warning;
};

/// SS-SAD stage one: iterative train / prune / rewind-to-init with plain class loss until the
/// cumulative sparsity reaches `target`. The student is left rewound and masked.
template <typename T>
presparsify_result presparsify_lth(model<T>& student, const dataset& train, const dataset& val, train_options opt,
                                   double target, train_hooks hooks = {}) {
  if (!(target > 0.0 && target < 1.0)) throw config_error("target sparsity must lie in (0, 1)");
  if (!opt.prune) throw config_error("pre-sparsification needs a prune configuration");
  opt.prune->strat = strategy::lth_sad;
  opt.distill = {};
  opt.epochs = std::numeric_limits<std::size_t>::max();
  opt.checkpoint_dir.clear();
  trainer<T> t(opt, student, nullptr, train, val, std::move(hooks));
  presparsify_result r;
  while (t.masks().cumulative_sparsity < target) {
    const std::size_t before = t.events().size();
    if (!t.step_epoch()) throw numeric_error("pre-sparsification diverged: " + t.diagnostic().dump());
    if (t.events().size() == before) continue;
    const auto& ev = t.events().back();
    ++r.rounds;
    if (ev.skipped) {
      r.saturated = true;
      r.warning = "pruning saturated at sparsity " + std::to_string(ev.sparsity_after) + " before reaching " +
                  std::to_string(target);
      break;
    }
  }
  r.masks = t.masks();
  r.history = t.history();
  return r;
}

}  // namespace sadprune
