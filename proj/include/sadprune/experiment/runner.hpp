#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadprune/data/images.hpp"
#include "sadprune/data/movies.hpp"
#include "sadprune/data/synthetic.hpp"
#include "sadprune/experiment/config.hpp"
#include "sadprune/experiment/report.hpp"
#include "sadprune/io/checkpoint.hpp"
#include "sadprune/metrics/metrics.hpp"
#include "sadprune/metrics/telemetry.hpp"
#include "sadprune/model_zoo/zoo.hpp"
#include "sadprune/train/trainer.hpp"

namespace sadprune {

// ---- dry-run schedule ---------------------------------------------------------------------

struct lr_segment {
  std::size_t first_epoch = 0;  // 1-based, inclusive
  std::size_t last_epoch = 0;
  double lr = 0;
};

struct schedule_plan {
  std::size_t epochs = 0;
  std::vector<lr_segment> lr_segments;
  std::vector<std::size_t> lr_drops;          // the LR changes after these epochs
  std::vector<std::size_t> prune_epochs;      // pruning follows these epochs
  std::vector<double> nominal_sparsity;       // per-layer arithmetic after each event
  std::size_t presparsify_rounds = 0;         // SS-SAD stage one
  std::size_t presparsify_epochs = 0;
  double presparsify_target = 0;
};

/// Cumulative per-layer sparsity after `rounds` rounds, ignoring floor effects.
inline double nominal_sparsity_after(double rate, std::size_t rounds) {
  return std::min(1.0, rate * static_cast<double>(rounds));
}

inline schedule_plan plan_schedule(const experiment_config& c) {
  schedule_plan p;
  p.epochs = c.epochs;
  const auto sched = c.schedule();
  std::size_t start = 1;
  for (std::size_t e = 1; e <= c.epochs; ++e) {
    if (e == c.epochs || sched(e) != sched(e - 1)) {
      p.lr_segments.push_back({start, e, sched(e - 1)});
      if (e < c.epochs) p.lr_drops.push_back(e);
      start = e + 1;
    }
  }
  if (c.strat == strategy::ss_sad) {
    const double rate = *c.prune_rate;
    while (nominal_sparsity_after(rate, p.presparsify_rounds) + 1e-12 < c.target_sparsity) ++p.presparsify_rounds;
    p.presparsify_epochs = p.presparsify_rounds * *c.prune_every;
    p.presparsify_target = c.target_sparsity;
  } else if (c.prunes()) {
    for (std::size_t e = *c.prune_every; e <= c.epochs; e += *c.prune_every) {
      p.prune_epochs.push_back(e);
      p.nominal_sparsity.push_back(nominal_sparsity_after(*c.prune_rate, p.prune_epochs.size()));
    }
  }
  return p;
}

inline void print_plan(std::ostream& os, const experiment_config& c, const schedule_plan& p) {
  auto short_num = [](double v) {
    std::ostringstream ss;
    ss << std::setprecision(6) << v;
    return ss.str();
  };
  auto join = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s.empty() ? std::string("none") : s;
  };
  os << "experiment " << c.name << ": " << to_string(c.strat) << " on " << to_string(c.dataset);
  if (c.group) os << " (" << to_string(*c.group) << " features)";
  os << "\nepochs: " << p.epochs << "\n";
  for (const auto& s : p.lr_segments) {
    os << "lr " << short_num(s.lr) << " for epochs " << s.first_epoch << "-" << s.last_epoch << "\n";
  }
  os << "lr drops after epochs: " << join(p.lr_drops) << "\n";
  if (p.presparsify_rounds) {
    os << "pre-sparsify: " << p.presparsify_rounds << " LTH rounds of " << *c.prune_every << " epochs to reach "
       << short_num(p.presparsify_target) << " sparsity (" << p.presparsify_epochs << " epochs)\n";
  }
  os << "pruning events: " << p.prune_epochs.size() << " at epochs " << join(p.prune_epochs) << "\n";
  for (std::size_t i = 0; i < p.prune_epochs.size(); ++i) {
    os << "  round " << i + 1 << " after epoch " << p.prune_epochs[i] << ": nominal sparsity "
       << short_num(p.nominal_sparsity[i]) << "\n";
  }
  os << "seeds: ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? "," : "") << c.seeds[i];
  os << "\n";
}

// ---- data and teacher -------------------------------------------------------------------------

struct prepared_data {
  dataset train;
  dataset val;
  nlohmann::json info = nlohmann::json::object();
  double mean_predictor_mae = std::numeric_limits<double>::quiet_NaN();
  double mean_predictor_mse = std::numeric_limits<double>::quiet_NaN();
};

inline bool has_cifar_archive(const std::filesystem::path& root) {
  try {
    detect_cifar_layout(root);
    return true;
  } catch (const ingestion_error&) {
    return false;
  }
}

inline prepared_data prepare_data(const experiment_config& c, std::ostream& log) {
  prepared_data d;
  if (c.dataset == dataset_kind::cifar_like) {
    if (!has_cifar_archive(c.data_root) && c.synthesize) {
      synthetic_image_options o;
      o.train_size = c.synthetic_train_size;
      o.val_size = c.synthetic_val_size;
      log << "generating synthetic CIFAR-layout archive in " << c.data_root.string() << "\n";
      write_synthetic_cifar(c.data_root, o);
    }
    auto corpus = load_image_corpus(c.data_root, c.subset_fraction, c.data_seed);
    d.train = std::move(corpus.train);
    d.val = std::move(corpus.val);
    d.info = {{"train_rows", d.train.size()},
              {"val_rows", d.val.size()},
              {"full_train_rows", corpus.full_train_size},
              {"full_val_rows", corpus.full_val_size},
              {"classes", d.train.num_classes}};
  } else {
    if (!std::filesystem::exists(c.movies_csv) && c.synthesize) {
      synthetic_movie_options o;
      o.rows = c.synthetic_rows;
      log << "generating synthetic movie table at " << c.movies_csv.string() << "\n";
      if (c.movies_csv.has_parent_path()) std::filesystem::create_directories(c.movies_csv.parent_path());
      write_synthetic_movies(c.movies_csv, o);
    }
    movie_options mo;
    if (!c.manifest.empty()) mo.manifest = load_manifest(c.manifest);
    movie_load_report rep;
    const auto table = load_movies(c.movies_csv, mo, &rep);
    const auto split = split_by_year(table, c.train_first_year, c.train_last_year);
    if (split.train.rows() == 0 || split.test.rows() == 0) {
      throw ingestion_error("movie split is empty (train " + std::to_string(split.train.rows()) + ", test " +
                            std::to_string(split.test.rows()) + " rows)");
    }
    const auto enc = encode_group(split.train, split.test, *c.group);
    d.train = to_regression_dataset(enc.train, split.train.target);
    d.val = to_regression_dataset(enc.test, split.test.target);
    double mean = 0;
    for (double y : split.train.target) mean += y;
    mean /= static_cast<double>(split.train.rows());
    const std::vector<double> constant(split.test.rows(), mean);
    d.mean_predictor_mae = mae(split.test.target, constant);
    d.mean_predictor_mse = mse(split.test.target, constant);
    std::vector<std::string> warnings = rep.warnings;
    warnings.insert(warnings.end(), split.warnings.begin(), split.warnings.end());
    d.info = {{"rows_read", rep.rows_read},
              {"train_rows", d.train.size()},
              {"test_rows", d.val.size()},
              {"dropped_before_window", split.dropped_before},
              {"dropped_missing_target", rep.dropped_missing_target},
              {"features", enc.train.columns.size()},
              {"warnings", warnings}};
  }
  return d;
}

/// Fills the data-dependent parts of a model spec (output count, task, input width).
inline model_spec bind_spec(model_spec s, const dataset& d) {
  s.task = d.task;
  if (d.task == task_kind::classification) {
    s.num_outputs = d.num_classes;
  } else {
    s.num_outputs = 1;
    s.input_features = d.sample_size();
    if (s.hidden_widths.empty()) {
      // Default tabular widths: 64 * width_factor halving per layer, at least 8.
      std::size_t w = 64 * s.width_factor;
      for (std::size_t i = 0; i < s.depth; ++i, w = std::max<std::size_t>(8, w / 2)) s.hidden_widths.push_back(w);
    }
  }
  s.validate();
  return s;
}

struct teacher_result {
  std::unique_ptr<model<float>> net;
  double metric = std::numeric_limits<double>::quiet_NaN();
  std::filesystem::path checkpoint;
  bool trained = false;
};

inline teacher_result prepare_teacher(const experiment_config& c, const prepared_data& d,
                                      const std::filesystem::path& out_dir, std::ostream& log, bool verbose = true) {
  teacher_result t;
  const auto spec = bind_spec(c.teacher.spec, d.train);
  t.net = build_model<float>(spec, derive_seed(c.teacher.seed, 1));
  t.checkpoint = c.teacher.checkpoint.empty() ? out_dir / "teacher.ckpt" : std::filesystem::path(c.teacher.checkpoint);
  if (std::filesystem::exists(t.checkpoint)) {
    log << "loading teacher from " << t.checkpoint.string() << "\n";
    load_model_checkpoint(t.checkpoint, *t.net);
  } else {
    if (c.teacher.epochs == 0) throw config_error("teacher checkpoint " + t.checkpoint.string() + " does not exist");
    log << "training teacher " << to_string(spec.family) << "-" << spec.depth << "-" << spec.width_factor << " for "
        << c.teacher.epochs << " epochs\n";
    train_options o;
    o.epochs = c.teacher.epochs;
    o.batch_size = c.teacher.batch_size;
    o.eval_batch_size = c.eval_batch_size;
    o.lr = lr_schedule(c.teacher.lr, c.teacher.lr_gamma, c.teacher.lr_milestones);
    o.momentum = c.momentum;
    o.weight_decay = c.teacher.weight_decay;
    o.seed = c.teacher.seed;
    train_hooks hooks;
    hooks.on_epoch = [&](const epoch_record& r) {
      if (!verbose) return;
      log << "  teacher epoch " << r.epoch << " loss " << format_double(r.total_loss) << " metric "
          << format_double(r.metric) << "\n";
    };
    trainer<float> tr(o, *t.net, nullptr, d.train, d.val, hooks);
    const auto res = tr.run();
    if (res.aborted) throw numeric_error("teacher training diverged: " + res.diagnostic.dump());
    std::filesystem::create_directories(out_dir);
    save_metrics_csv(out_dir / "teacher_metrics.csv", res.history);
    save_model_checkpoint(t.checkpoint, *t.net, mask_set::all_ones(t.net->prunable_layers()),
                          {{"epoch", o.epochs}, {"seed", o.seed}, {"role", "teacher"}});
    t.trained = true;
  }
  t.metric = evaluate(*t.net, d.val, c.eval_batch_size).metric;
  log << "teacher validation " << (d.train.task == task_kind::classification ? "accuracy " : "mse ")
      << format_double(t.metric) << "\n";
  return t;
}

// ---- one seed -----------------------------------------------------------------------------

struct run_options {
  bool resume = false;
  bool verbose = true;
};

inline std::string run_label(const experiment_config& c, std::uint64_t seed) {
  std::string s = to_string(c.strat);
  if (c.group) s += "/" + to_string(*c.group);
  return s + "/seed" + std::to_string(seed);
}

inline run_report run_seed(const experiment_config& c, const prepared_data& d, model<float>* teacher,
                           double teacher_metric, std::uint64_t seed, const std::filesystem::path& dir,
                           const run_options& ro, std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto ckpt_dir = dir / "checkpoints";
  auto student = build_model<float>(bind_spec(c.student, d.train), derive_seed(seed, 1));

  std::string warning;
  auto reader = probe_power_reader(c.power_device, warning);
  power_sampler sampler(std::move(reader), std::chrono::milliseconds(c.power_interval_ms), "train", warning);
  sampler.start();
  train_hooks hooks;
  hooks.on_phase = [&](const std::string& phase) { sampler.set_phase(phase); };
  if (sampler.has_device()) hooks.energy_j = [&] { return energy_joules(sampler.snapshot()); };
  hooks.on_epoch = [&](const epoch_record& r) {
    if (!ro.verbose) return;
    log << "  [" << run_label(c, seed) << "] epoch " << r.epoch << " loss " << format_double(r.total_loss)
        << " metric " << format_double(r.metric) << " sparsity " << format_double(r.cumulative_sparsity)
        << (r.event.empty() ? "" : " " + r.event) << "\n";
  };

  auto opt = train_options_for(c, seed);
  opt.checkpoint_dir = ckpt_dir;
  const bool resuming = ro.resume && fs::exists(ckpt_dir / "last.ckpt");
  run_report rep;
  rep.warnings = sampler.snapshot().warnings;

  std::optional<mask_set> presparse;
  if (c.strat == strategy::ss_sad && !resuming) {
    log << "pre-sparsifying to " << format_double(c.target_sparsity) << "\n";
    auto pre = presparsify_lth(*student, d.train, d.val, opt, c.target_sparsity, hooks);
    save_metrics_csv(dir / "presparsify_metrics.csv", pre.history);
    if (pre.saturated) rep.warnings.push_back(pre.warning);
    presparse = pre.masks;
  }
  if (c.strat == strategy::ss_sad) opt.prune.reset();  // masks stay fixed while distilling

  trainer<float> tr(opt, *student, teacher, d.train, d.val, hooks);
  if (presparse) tr.set_masks(*presparse);
  if (resuming) {
    log << "resuming from " << (ckpt_dir / "last.ckpt").string() << "\n";
    tr.load_state(ckpt_dir / "last.ckpt");
  }
  auto result = tr.run();

  // Inference pass on the winning ticket, tagged separately in the power log.
  auto ticket_model = build_model<float>(student->spec(), 0);
  mask_set ticket_masks = result.masks;
  if (result.ticket && !result.ticket->checkpoint.empty()) {
    ticket_masks = load_model_checkpoint(result.ticket->checkpoint, *ticket_model);
    sampler.set_phase("inference");
    const double e0 = sampler.has_device() ? energy_joules(sampler.snapshot()) : 0.0;
    evaluate(*ticket_model, d.val, c.eval_batch_size);
    if (sampler.has_device()) rep.inference_energy_j = energy_joules(sampler.snapshot()) - e0;
  }
  sampler.stop();
  const auto plog = sampler.snapshot();
  save_power_csv(plog, dir / "power.csv");
  save_metrics_csv(dir / "metrics.csv", result.history);

  rep.label = run_label(c, seed);
  rep.strategy = to_string(c.strat);
  rep.dataset = to_string(c.dataset);
  rep.feature_group = c.group ? to_string(*c.group) : "";
  rep.metric_name = c.regression() ? "mse" : "accuracy";
  rep.seed = seed;
  rep.epochs_completed = tr.completed_epochs();
  rep.aborted = result.aborted;
  rep.diagnostic = result.diagnostic;
  if (result.aborted) {
    rep.warnings.push_back("run aborted; resume from " + (ckpt_dir / "last.ckpt").string());
  }
  if (result.ticket) {
    rep.ticket = *result.ticket;
    for (const auto& h : result.history) {
      if (h.epoch == rep.ticket.epoch) rep.ticket_mae = h.mae;
    }
  }
  rep.final_sparsity = result.masks.cumulative_sparsity;
  const auto size = effective_size(*ticket_model, ticket_masks);
  rep.total_params = size.total_params;
  rep.surviving_params = size.surviving_params;
  rep.size_reduction = size.reduction_fraction;
  if (sampler.has_device()) {
    rep.power_device = plog.source;
    double train_j = 0;
    for (const auto& h : result.history) train_j += std::isfinite(h.energy_j) ? h.energy_j : 0.0;
    rep.train_energy_j = train_j;
    rep.total_energy_j = train_j + (std::isfinite(rep.inference_energy_j) ? rep.inference_energy_j : 0.0);
  }
  for (const auto& w : plog.warnings) {
    if (std::find(rep.warnings.begin(), rep.warnings.end(), w) == rep.warnings.end()) rep.warnings.push_back(w);
  }
  rep.teacher_metric = teacher_metric;
  rep.mean_predictor_mae = d.mean_predictor_mae;
  rep.mean_predictor_mse = d.mean_predictor_mse;
  rep.events = result.events;
  rep.metrics_csv = "metrics.csv";
  rep.power_csv = "power.csv";
  save_run_report(dir / "summary.json", rep);
  if (result.ticket) save_mask_file(dir / "winning_ticket_masks.json", ticket_masks);
  return rep;
}

// ---- whole experiment ---------------------------------------------------------------------

struct experiment_result {
  std::vector<run_report> runs;
  double median_metric = std::numeric_limits<double>::quiet_NaN();
  double teacher_metric = std::numeric_limits<double>::quiet_NaN();
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Runs every seed. Validation has already happened when the config was built; this writes
/// the resolved config first so an interrupted run still documents itself.
inline experiment_result run_experiment(const experiment_config& c, const run_options& ro, std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(c.output_dir);
  {
    std::ofstream os(c.output_dir / "resolved.cfg");
    os << to_config_text(c);
  }
  const auto data = prepare_data(c, log);
  log << "data: " << data.info.dump() << "\n";
  teacher_result teacher;
  if (c.distill.uses_teacher()) teacher = prepare_teacher(c, data, c.output_dir, log, ro.verbose);

  experiment_result out;
  out.teacher_metric = teacher.metric;
  std::vector<double> metrics;
  for (auto seed : c.seeds) {
    auto rep = run_seed(c, data, teacher.net.get(), teacher.metric, seed, c.output_dir / ("seed_" + std::to_string(seed)),
                        ro, log);
    log << rep.label << ": ticket " << rep.metric_name << " " << format_double(rep.ticket.metric) << " at sparsity "
        << format_double(rep.ticket.sparsity) << " (epoch " << rep.ticket.epoch << ")\n";
    if (!rep.aborted) metrics.push_back(rep.ticket.metric);
    out.runs.push_back(std::move(rep));
  }
  out.median_metric = median_of(metrics);
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : out.runs) {
    runs.push_back({{"label", r.label}, {"summary", "seed_" + std::to_string(r.seed) + "/summary.json"},
                    {"metric", r.ticket.metric}, {"sparsity", r.ticket.sparsity}, {"aborted", r.aborted}});
  }
  std::ofstream os(c.output_dir / "experiment.json");
  os << nlohmann::json{{"name", c.name},
                       {"strategy", to_string(c.strat)},
                       {"data", data.info},
                       {"teacher_metric", detail::nullable(teacher.metric)},
                       {"median_metric", detail::nullable(out.median_metric)},
                       {"runs", runs}}
            .dump(2)
     << '\n';
  return out;
}

}  // namespace sadprune
