#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "sadprune/train/trainer.hpp"
#include "support.hpp"

using namespace sadprune;
namespace fs = std::filesystem;

namespace {

dataset tabular(task_kind task, std::size_t n, std::uint64_t seed, std::size_t features = 8, std::size_t classes = 3) {
  rng_t rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> w(features * classes);
  rng_t wrng(99);  // same concept for every split
  for (auto& v : w) v = std::normal_distribution<double>(0, 1)(wrng);
  dataset d;
  d.task = task;
  d.sample_shape = {features};
  d.num_classes = task == task_kind::classification ? classes : 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(features);
    for (auto& v : x) {
      v = g(rng);
      d.x.push_back(static_cast<float>(v));
    }
    if (task == task_kind::classification) {
      int best = 0;
      double best_s = -1e300;
      for (std::size_t c = 0; c < classes; ++c) {
        double s = 0;
        for (std::size_t f = 0; f < features; ++f) s += w[c * features + f] * x[f];
        if (s > best_s) best_s = s, best = static_cast<int>(c);
      }
      d.labels.push_back(best);
    } else {
      double s = 0;
      for (std::size_t f = 0; f < features; ++f) s += w[f] * x[f];
      d.targets.push_back(static_cast<float>(5.0 + s + 0.1 * g(rng)));
    }
  }
  return d;
}

model_spec mlp(task_kind task, std::vector<std::size_t> widths, std::size_t features = 8, std::size_t classes = 3) {
  model_spec s;
  s.family = model_family::tabular_mlp;
  s.depth = widths.size();
  s.hidden_widths = std::move(widths);
  s.input_features = features;
  s.task = task;
  s.num_outputs = task == task_kind::classification ? classes : 1;
  return s;
}

train_options base_options(std::size_t epochs) {
  train_options o;
  o.epochs = epochs;
  o.batch_size = 32;
  o.lr = lr_schedule(0.05, 0.1, {});
  o.seed = 5;
  return o;
}

// Wall time varies run to run; NaN cells would defeat ==.
std::vector<epoch_record> without_time(std::vector<epoch_record> h) {
  for (auto& r : h) {
    r.wall_time_s = 0;
    if (std::isnan(r.mae)) r.mae = -1;
    if (std::isnan(r.energy_j)) r.energy_j = -1;
  }
  return h;
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("sadprune_train_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(LrSchedule, Examples) {
  lr_schedule lth(0.05, 0.1, {170, 340, 510});
  EXPECT_EQ(lth(0), 0.05);
  EXPECT_EQ(lth(169), 0.05);
  lr_schedule s(0.1, 0.1, {2, 4});
  EXPECT_NEAR(s(5), 0.001, 1e-15);
  EXPECT_EQ(s(1), 0.1);
  EXPECT_THROW(lr_schedule(0.1, 0.1, {4, 2}), config_error);
  EXPECT_THROW(lr_schedule(0.1, 0.1, {3, 3}), config_error);
}

TEST(WinningTicket, PicksBestPlateauAndBreaksTiesTowardSparsity) {
  auto rec = [](std::size_t e, double s, double m) {
    epoch_record r;
    r.epoch = e;
    r.cumulative_sparsity = s;
    r.metric = m;
    r.round = static_cast<std::size_t>(s * 10);
    return r;
  };
  EXPECT_EQ(select_winning_ticket({rec(1, 0.6, 0.7303), rec(2, 0.7, 0.71)}, true).sparsity, 0.6);
  EXPECT_EQ(select_winning_ticket({rec(1, 0.6, 0.7303)}, true).epoch, 1u);
  EXPECT_EQ(select_winning_ticket({rec(1, 0.5, 0.8), rec(2, 0.6, 0.8)}, true).sparsity, 0.6);
  // Best within a plateau, not the last epoch of it.
  const auto t = select_winning_ticket({rec(1, 0.0, 0.5), rec(2, 0.0, 0.9), rec(3, 0.0, 0.6), rec(4, 0.1, 0.7)}, true);
  EXPECT_EQ(t.epoch, 2u);
  EXPECT_EQ(t.metric, 0.9);
  // Lower is better for MSE.
  EXPECT_EQ(select_winning_ticket({rec(1, 0.0, 2.0), rec(2, 0.3, 1.5), rec(3, 0.6, 1.7)}, false).sparsity, 0.3);
  EXPECT_THROW(select_winning_ticket({}, true), input_error);
}

TEST(Trainer, PruningScheduleAndMonotoneSparsity) {
  const auto train = tabular(task_kind::classification, 200, 1), val = tabular(task_kind::classification, 100, 2);
  auto student = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto opt = base_options(6);
  opt.prune = prune_config{0.25, 2, strategy::lth_sad, prune_scope::per_layer};
  trainer<double> t(opt, *student, nullptr, train, val);
  const auto r = t.run();
  ASSERT_EQ(r.history.size(), 6u);
  ASSERT_EQ(r.events.size(), 3u);
  EXPECT_EQ(r.events[0].epoch, 2u);
  EXPECT_EQ(r.events[2].epoch, 6u);
  for (std::size_t i = 1; i < r.history.size(); ++i) {
    EXPECT_GE(r.history[i].cumulative_sparsity, r.history[i - 1].cumulative_sparsity);
  }
  EXPECT_EQ(r.history[1].event, "prune");
  EXPECT_EQ(r.history[2].cumulative_sparsity, 0.25);
  EXPECT_NEAR(r.masks.cumulative_sparsity, 0.75, 1e-12);
  EXPECT_TRUE(r.ticket.has_value());
}

TEST(Trainer, PruneEveryBeyondEpochsMeansNoPruning) {
  const auto train = tabular(task_kind::classification, 100, 1), val = tabular(task_kind::classification, 50, 2);
  auto student = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto opt = base_options(3);
  opt.prune = prune_config{0.1, 10, strategy::sp_sad, prune_scope::per_layer};
  const auto r = trainer<double>(opt, *student, nullptr, train, val).run();
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.masks.cumulative_sparsity, 0.0);
}

TEST(Trainer, ZeroFloorRoundsKeepAllChannels) {
  const auto train = tabular(task_kind::classification, 64, 1), val = tabular(task_kind::classification, 32, 2);
  auto student = build_model<double>(mlp(task_kind::classification, {4, 6}), 3);
  auto opt = base_options(2);
  opt.prune = prune_config{0.1, 1, strategy::sp_sad, prune_scope::per_layer};  // floor(0.4) = floor(0.6) = 0
  const auto r = trainer<double>(opt, *student, nullptr, train, val).run();
  ASSERT_EQ(r.events.size(), 2u);
  for (const auto& e : r.events) EXPECT_TRUE(e.skipped);
  for (const auto& l : r.masks.layers) EXPECT_EQ(l.surviving(), l.keep.size());
  for (const auto& h : r.history) EXPECT_EQ(h.event, "prune-skipped");
}

TEST(Trainer, TeacherIsNeverModified) {
  const auto train = tabular(task_kind::classification, 96, 1), val = tabular(task_kind::classification, 32, 2);
  auto teacher = build_model<double>(mlp(task_kind::classification, {64, 32, 16}), 1);
  auto student = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto opt = base_options(3);
  opt.distill.beta = 50;
  opt.distill.alpha_kd = 0.8;
  opt.distill.d = 16;
  opt.prune = prune_config{0.1, 1, strategy::lth_sad, prune_scope::per_layer};
  const auto before = parameter_hash(*teacher);
  const auto r = trainer<double>(opt, *student, teacher.get(), train, val).run();
  EXPECT_EQ(parameter_hash(*teacher), before);
  EXPECT_GT(r.history[0].attention_loss, 0.0);
  EXPECT_GT(r.history[0].kd_loss, 0.0);
}

TEST(Trainer, IdenticalSeedsGiveIdenticalHistories) {
  const auto train = tabular(task_kind::regression, 128, 1), val = tabular(task_kind::regression, 64, 2);
  auto run = [&] {
    auto teacher = build_model<double>(mlp(task_kind::regression, {32, 16}), 1);
    auto student = build_model<double>(mlp(task_kind::regression, {20, 10}), 3);
    auto opt = base_options(4);
    opt.lr = lr_schedule(0.01, 0.1, {2});
    opt.distill.beta = 10;
    opt.distill.d = 8;
    opt.prune = prune_config{0.2, 2, strategy::sp_sad, prune_scope::per_layer};
    return trainer<double>(opt, *student, teacher.get(), train, val).run();
  };
  EXPECT_EQ(without_time(run().history), without_time(run().history));
}

TEST(Trainer, WithoutDistillationTermsTheTeacherIsIrrelevant) {
  const auto train = tabular(task_kind::regression, 128, 1), val = tabular(task_kind::regression, 64, 2);
  auto teacher = build_model<double>(mlp(task_kind::regression, {32, 16}), 1);
  auto s1 = build_model<double>(mlp(task_kind::regression, {20, 10}), 3);
  auto s2 = build_model<double>(mlp(task_kind::regression, {20, 10}), 3);
  auto opt = base_options(3);
  opt.lr = lr_schedule(0.01, 0.1, {});
  const auto a = trainer<double>(opt, *s1, teacher.get(), train, val).run();
  const auto b = trainer<double>(opt, *s2, nullptr, train, val).run();
  EXPECT_EQ(without_time(a.history), without_time(b.history));
  EXPECT_LT(a.history.back().metric, a.history.front().metric);
  EXPECT_FALSE(std::isnan(a.history.back().mae));
}

TEST(Trainer, LthRewindRestoresInitOnSurvivors) {
  const auto train = tabular(task_kind::classification, 128, 1), val = tabular(task_kind::classification, 32, 2);
  auto student = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto opt = base_options(2);
  opt.prune = prune_config{0.3, 2, strategy::lth_sad, prune_scope::per_layer};
  trainer<double> t(opt, *student, nullptr, train, val);
  t.step_epoch();
  t.step_epoch();
  ASSERT_EQ(t.events().size(), 1u);
  const auto pm = student->parameter_masks(t.masks());
  const auto params = student->parameters();
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& init = t.init_snapshot().at(params[i]->name);
    for (std::size_t j = 0; j < params[i]->value.size(); ++j) {
      if (pm[i][j] != 0) {
        ++survivors;
        EXPECT_EQ(params[i]->value[j], init[j]);
      } else {
        EXPECT_EQ(params[i]->value[j], 0.0);
      }
    }
  }
  EXPECT_GT(survivors, 0u);
}

TEST(Trainer, SpCarriesTrainedWeightsForward) {
  const auto train = tabular(task_kind::classification, 128, 1), val = tabular(task_kind::classification, 32, 2);
  auto pruned = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto dense = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto opt = base_options(2);
  trainer<double> twin(opt, *dense, nullptr, train, val);
  opt.prune = prune_config{0.3, 2, strategy::sp_sad, prune_scope::per_layer};
  trainer<double> t(opt, *pruned, nullptr, train, val);
  for (int e = 0; e < 2; ++e) {
    t.step_epoch();
    twin.step_epoch();
  }
  const auto pm = pruned->parameter_masks(t.masks());
  const auto pp = pruned->parameters();
  const auto dp = dense->parameters();
  for (std::size_t i = 0; i < pp.size(); ++i) {
    for (std::size_t j = 0; j < pp[i]->value.size(); ++j) EXPECT_EQ(pp[i]->value[j], dp[i]->value[j] * pm[i][j]);
  }
}

TEST(Trainer, NonFiniteLossAbortsWithDiagnostic) {
  auto train = tabular(task_kind::regression, 64, 1);
  const auto val = tabular(task_kind::regression, 32, 2);
  train.targets[40] = std::numeric_limits<float>::infinity();
  auto student = build_model<double>(mlp(task_kind::regression, {20, 10}), 3);
  const auto r = trainer<double>(base_options(5), *student, nullptr, train, val).run();
  EXPECT_TRUE(r.aborted);
  EXPECT_EQ(r.diagnostic.at("reason"), "non-finite loss");
  EXPECT_TRUE(r.history.empty());
}

TEST(Trainer, ResumeFromStateMatchesUninterruptedRun) {
  const auto train = tabular(task_kind::classification, 128, 1), val = tabular(task_kind::classification, 32, 2);
  auto opt = base_options(4);
  opt.distill.beta = 20;
  opt.distill.alpha_kd = 0.5;
  opt.distill.d = 8;
  opt.prune = prune_config{0.2, 2, strategy::sp_sad, prune_scope::per_layer};
  auto teacher = build_model<double>(mlp(task_kind::classification, {32, 16}), 1);

  auto s_full = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  const auto full = trainer<double>(opt, *s_full, teacher.get(), train, val).run();

  const auto dir = scratch("resume");
  auto s_a = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto opt_a = opt;
  opt_a.checkpoint_dir = dir;
  {
    trainer<double> a(opt_a, *s_a, teacher.get(), train, val);
    a.step_epoch();
    a.step_epoch();
  }
  ASSERT_TRUE(fs::exists(dir / "last.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "round_0.ckpt"));
  auto s_b = build_model<double>(mlp(task_kind::classification, {20, 40}), 77);  // different init, overwritten
  trainer<double> b(opt_a, *s_b, teacher.get(), train, val);
  b.load_state(dir / "last.ckpt");
  const auto resumed = b.run();
  EXPECT_EQ(without_time(resumed.history), without_time(full.history));
  const auto p1 = s_full->parameters(), p2 = s_b->parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i]->value.storage(), p2[i]->value.storage());
  ASSERT_TRUE(resumed.ticket.has_value());
  EXPECT_TRUE(fs::exists(resumed.ticket->checkpoint));
  auto check = build_model<double>(mlp(task_kind::classification, {20, 40}), 1);
  const auto masks = load_model_checkpoint(resumed.ticket->checkpoint, *check);
  EXPECT_EQ(masks.cumulative_sparsity, resumed.ticket->sparsity);
}

TEST(Presparsify, SingleRoundWhenTargetEqualsRate) {
  const auto train = tabular(task_kind::classification, 64, 1), val = tabular(task_kind::classification, 32, 2);
  auto student = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto opt = base_options(1);
  opt.prune = prune_config{0.05, 1, strategy::ss_sad, prune_scope::per_layer};
  const auto r = presparsify_lth(*student, train, val, opt, 0.05);
  EXPECT_EQ(r.rounds, 1u);
  EXPECT_NEAR(r.masks.cumulative_sparsity, 0.05, 1e-12);
}

TEST(Presparsify, MatchesRepeatedMaskExtractionOracle) {
  const auto train = tabular(task_kind::classification, 64, 1), val = tabular(task_kind::classification, 32, 2);
  auto student = build_model<double>(mlp(task_kind::classification, {10, 20}), 3);
  auto opt = base_options(1);
  opt.prune = prune_config{0.10, 2, strategy::ss_sad, prune_scope::per_layer};
  const auto r = presparsify_lth(*student, train, val, opt, 0.35);
  EXPECT_EQ(r.rounds, 4u);
  // Oracle: four rounds remove floor(0.1 * 10) = 1 and floor(0.1 * 20) = 2 channels each.
  auto oracle = mask_set::all_ones(student->prunable_layers());
  for (int round = 0; round < 4; ++round) {
    channel_scores scores;
    for (const auto& l : oracle.layers) {
      std::vector<double> s(l.keep.size());
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = l.keep[i] ? static_cast<double>(i) : -1e300;
      scores[l.id] = s;
    }
    oracle = extract_mask(scores, oracle, *opt.prune);
  }
  EXPECT_NEAR(r.masks.cumulative_sparsity, oracle.cumulative_sparsity, 1e-12);
  EXPECT_NEAR(r.masks.cumulative_sparsity, 12.0 / 30.0, 1e-12);
  EXPECT_EQ(r.history.size(), 8u);
}

TEST(Presparsify, ReachesSeventyPercent) {
  const auto train = tabular(task_kind::classification, 64, 1), val = tabular(task_kind::classification, 32, 2);
  auto student = build_model<double>(mlp(task_kind::classification, {20, 40}), 3);
  auto opt = base_options(1);
  opt.prune = prune_config{0.05, 1, strategy::ss_sad, prune_scope::per_layer};
  const auto r = presparsify_lth(*student, train, val, opt, 0.70);
  EXPECT_GE(r.masks.cumulative_sparsity, 0.70);
  EXPECT_FALSE(r.saturated);
  EXPECT_THROW(presparsify_lth(*student, train, val, opt, 1.0), config_error);
}

TEST(Records, MetricsCsvRoundTrip) {
  epoch_record a;
  a.epoch = 1;
  a.total_loss = 1.0 / 3.0;
  a.metric = 0.1 + 0.2;
  a.learning_rate = 0.05;
  a.event = "prune";
  epoch_record b = a;
  b.epoch = 2;
  b.mae = 0.7;
  b.energy_j = 12.5;
  b.event = "";
  std::stringstream ss;
  write_metrics_csv(ss, {a, b});
  const auto back = read_metrics_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].total_loss, a.total_loss);
  EXPECT_EQ(back[0].metric, a.metric);
  EXPECT_TRUE(std::isnan(back[0].mae));
  EXPECT_EQ(back[1].energy_j, 12.5);
  EXPECT_EQ(back[0].event, "prune");
}

TEST(Checkpoint, ArchiveRoundTripAndCorruptionDetection) {
  const auto dir = scratch("ckpt");
  auto m = build_model<float>(mlp(task_kind::classification, {20, 40}), 3);
  auto masks = mask_set::all_ones(m->prunable_layers());
  masks.layers[0].keep[3] = false;
  masks.cumulative_sparsity = masks.recompute_sparsity();
  save_model_checkpoint(dir / "a.ckpt", *m, masks);
  auto other = build_model<float>(mlp(task_kind::classification, {20, 40}), 9);
  const auto back = load_model_checkpoint(dir / "a.ckpt", *other);
  EXPECT_EQ(back.layers[0].keep, masks.layers[0].keep);
  const auto p1 = m->parameters(), p2 = other->parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i]->value.storage(), p2[i]->value.storage());
  EXPECT_THROW(load_archive<double>(dir / "a.ckpt"), ingestion_error);
  auto wrong = build_model<float>(mlp(task_kind::classification, {20, 30}), 3);
  EXPECT_THROW(load_model_checkpoint(dir / "a.ckpt", *wrong), structural_error);
  {
    std::fstream f(dir / "a.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-5, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_THROW(load_model_checkpoint(dir / "a.ckpt", *other), ingestion_error);
}
