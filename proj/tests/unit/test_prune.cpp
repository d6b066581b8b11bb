#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "sadprune/prune/ranking.hpp"
#include "sadprune/prune/reinit.hpp"
#include "support.hpp"

using namespace sadprune;
using sadprune::testing::random_index;
using sadprune::testing::random_tensor;

namespace {

mask_set single_layer(std::size_t channels) {
  return mask_set::all_ones({{"layer", channels}});
}

prune_config rate(double r, prune_scope scope = prune_scope::per_layer) {
  prune_config c;
  c.rate = r;
  c.scope = scope;
  return c;
}

model_spec mlp(std::vector<std::size_t> widths, std::size_t inputs = 6) {
  model_spec s;
  s.family = model_family::tabular_mlp;
  s.depth = widths.size();
  s.num_outputs = 1;
  s.task = task_kind::regression;
  s.input_features = inputs;
  s.hidden_widths = std::move(widths);
  return s;
}

model_spec wrn10() {
  model_spec s;
  s.depth = 10;
  s.width_factor = 1;
  s.num_outputs = 10;
  return s;
}

void train_steps(model<float>& m, const mask_set& masks, sgd<float>& opt, int steps, std::uint64_t seed) {
  rng_t rng(seed);
  const auto pm = m.parameter_masks(masks);
  const bool image = m.spec().family == model_family::wide_resnet;
  for (int i = 0; i < steps; ++i) {
    m.zero_grad();
    auto x = image ? random_tensor<float>({4, 3, 8, 8}, rng) : random_tensor<float>({4, m.spec().input_features}, rng);
    auto r = m.forward(x, true);
    m.backward(random_tensor<float>(r.outputs.shape(), rng), {});
    opt.step(m.parameters(), pm, 0.05);
  }
}

}  // namespace

TEST(RankChannels, UnitWeightsScoreFilterSize) {
  auto m = build_model<float>(mlp({4, 3}), 1);
  for (auto* p : m->parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = i % 2 ? 1.0f : -1.0f;
  }
  const auto scores = rank_channels(*m, mask_set::all_ones(m->prunable_layers()));
  for (double s : scores.at("fc1")) EXPECT_EQ(s, 6.0);
  for (double s : scores.at("fc2")) EXPECT_EQ(s, 4.0);
}

TEST(RankChannels, PrunedChannelScoresMinusInfinity) {
  auto m = build_model<float>(wrn10(), 1);
  auto masks = mask_set::all_ones(m->prunable_layers());
  masks.layers[2].keep[5] = false;
  const auto scores = rank_channels(*m, masks);
  EXPECT_EQ(scores.at(masks.layers[2].id)[5], -std::numeric_limits<double>::infinity());
  EXPECT_GT(scores.at(masks.layers[2].id)[4], 0.0);
}

TEST(RankChannels, ThreeChannelHandOrdering) {
  auto m = build_model<double>(mlp({3}, 2), 1);
  auto& w = m->parameters()[0]->value;  // fc1.weight (3, 2)
  const double vals[6] = {0.5, -0.25, -2.0, 1.0, 0.1, 0.1};
  std::copy(vals, vals + 6, w.data());
  const auto s = rank_channels(*m, mask_set::all_ones(m->prunable_layers())).at("fc1");
  EXPECT_DOUBLE_EQ(s[0], 0.75);
  EXPECT_DOUBLE_EQ(s[1], 3.0);
  EXPECT_DOUBLE_EQ(s[2], 0.2);
  // Ascending order by hand: channel 2, channel 0, channel 1.
  EXPECT_LT(s[2], s[0]);
  EXPECT_LT(s[0], s[1]);
}

TEST(ExtractMask, SixtyFourChannelsAtThirtyPercentLeaveFortyFive) {
  std::vector<double> s(64);
  for (std::size_t c = 0; c < 64; ++c) s[c] = static_cast<double>((c * 37) % 64);
  prune_report rep;
  const auto next = extract_mask({{"layer", s}}, single_layer(64), rate(0.30), &rep);
  EXPECT_EQ(next.layers[0].surviving(), 45u);
  EXPECT_EQ(rep.removed, 19u);
  EXPECT_EQ(next.round, 1u);
}

TEST(ExtractMask, FloorZeroIsNoOp) {
  const auto masks = single_layer(8);
  const auto next = extract_mask({{"layer", std::vector<double>(8, 1.0)}}, masks, rate(0.1));
  EXPECT_EQ(next.layers[0].keep, masks.layers[0].keep);
  EXPECT_EQ(next.cumulative_sparsity, 0.0);
}

TEST(ExtractMask, EightChannelSortAndTake) {
  const std::vector<double> s{5, 1, 7, 2, 9, 3, 8, 4};
  const auto next = extract_mask({{"layer", s}}, single_layer(8), rate(0.25));
  const std::vector<bool> expect{true, false, true, false, true, true, true, true};
  EXPECT_EQ(next.layers[0].keep, expect);
  EXPECT_DOUBLE_EQ(next.cumulative_sparsity, 0.25);
}

TEST(ExtractMask, TiesPruneLowerIndexFirst) {
  const auto next = extract_mask({{"layer", std::vector<double>(4, 2.0)}}, single_layer(4), rate(0.5));
  EXPECT_EQ(next.layers[0].keep, (std::vector<bool>{false, false, true, true}));
}

TEST(ExtractMask, SaturationKeepsOneChannelAndFlags) {
  auto masks = single_layer(4);
  prune_report rep;
  for (int r = 0; r < 5; ++r) {
    std::vector<double> s(4, 1.0);
    for (std::size_t c = 0; c < 4; ++c) {
      if (!masks.layers[0].keep[c]) s[c] = -std::numeric_limits<double>::infinity();
    }
    masks = extract_mask({{"layer", s}}, masks, rate(0.5), &rep);
    EXPECT_GE(masks.layers[0].surviving(), 1u);
  }
  EXPECT_EQ(masks.layers[0].surviving(), 1u);
  EXPECT_TRUE(rep.saturated);
  EXPECT_EQ(rep.removed, 0u);
}

TEST(ExtractMask, MissingLayerScoresAreStructuralError) {
  EXPECT_THROW(extract_mask({}, single_layer(4), rate(0.5)), structural_error);
}

TEST(ExtractMask, RejectsRateOutsideUnitInterval) {
  EXPECT_THROW(extract_mask({{"layer", std::vector<double>(4, 1.0)}}, single_layer(4), rate(1.0)), config_error);
  EXPECT_THROW(extract_mask({{"layer", std::vector<double>(4, 1.0)}}, single_layer(4), rate(0.0)), config_error);
}

TEST(ExtractMask, RandomRoundsAreMonotoneAndAccountedExactly) {
  rng_t rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<prunable_layer> layers;
    for (std::size_t i = random_index(rng, 1, 5); i > 0; --i) {
      layers.push_back({"l" + std::to_string(i), random_index(rng, 1, 70)});
    }
    auto masks = mask_set::all_ones(layers);
    const auto cfg = rate(std::uniform_real_distribution<double>(0.01, 0.6)(rng),
                          trial % 3 == 0 ? prune_scope::global : prune_scope::per_layer);
    for (int round = 0; round < 8; ++round) {
      channel_scores scores;
      for (const auto& l : masks.layers) {
        std::vector<double> s(l.keep.size());
        for (std::size_t c = 0; c < s.size(); ++c) {
          s[c] = l.keep[c] ? std::uniform_real_distribution<double>(0, 1)(rng)
                           : -std::numeric_limits<double>::infinity();
        }
        scores[l.id] = s;
      }
      prune_report rep;
      auto next = extract_mask(scores, masks, cfg, &rep);
      EXPECT_TRUE(next.is_subset_of(masks));
      EXPECT_NEAR(next.cumulative_sparsity, next.recompute_sparsity(), 1e-12);
      EXPECT_GE(next.cumulative_sparsity, masks.cumulative_sparsity);
      for (const auto& l : next.layers) EXPECT_GE(l.surviving(), 1u);
      EXPECT_EQ(masks.surviving_channels() - next.surviving_channels(), rep.removed);
      if (cfg.scope == prune_scope::per_layer) {
        // Per-layer removal replays independently as min(floor(rate * n), alive - 1).
        for (std::size_t i = 0; i < next.layers.size(); ++i) {
          const std::size_t n = masks.layers[i].keep.size(), alive = masks.layers[i].surviving();
          const auto want = static_cast<std::size_t>(cfg.rate * static_cast<double>(n) + 1e-9);
          EXPECT_EQ(alive - next.layers[i].surviving(), std::min(want, alive - 1));
        }
      }
      masks = next;
    }
  }
}

TEST(ExtractMask, GlobalScopeRemovesLowestScoresAcrossLayers) {
  mask_set masks = mask_set::all_ones({{"a", 4}, {"b", 4}});
  channel_scores s{{"a", {0.1, 0.2, 5, 6}}, {"b", {0.05, 7, 8, 9}}};
  const auto next = extract_mask(s, masks, rate(0.375, prune_scope::global));  // floor(3) channels
  EXPECT_EQ(next.layers[0].keep, (std::vector<bool>{false, false, true, true}));
  EXPECT_EQ(next.layers[1].keep, (std::vector<bool>{false, true, true, true}));
}

TEST(ExtractMask, SparsityGrowsByRatePerRound) {
  auto masks = single_layer(40);
  for (int r = 1; r <= 4; ++r) {
    std::vector<double> s(40);
    for (std::size_t c = 0; c < 40; ++c) s[c] = masks.layers[0].keep[c] ? double(c) : -1e300;
    masks = extract_mask({{"layer", s}}, masks, rate(0.10));
    EXPECT_NEAR(masks.cumulative_sparsity, 0.1 * r, 1e-12);
  }
}

TEST(Reinit, LthRoundOneWithFullMaskRestoresInitialization) {
  auto m = build_model<float>(wrn10(), 3);
  const auto init = snapshot(*m, snapshot_tag::init);
  sgd<float> opt(0.9, 0.0);
  const auto full = mask_set::all_ones(m->prunable_layers());
  train_steps(*m, full, opt, 3, 1);
  reinit_lth(*m, init, full, &opt);
  for (auto* p : m->parameters()) EXPECT_TRUE(p->value == init.at(p->name)) << p->name;
  EXPECT_FALSE(opt.has_state());
}

TEST(Reinit, LthRewindIsExactAcrossRounds) {
  auto m = build_model<float>(wrn10(), 3);
  const auto init = snapshot(*m, snapshot_tag::init);
  sgd<float> opt(0.9, 5e-4);
  auto masks = mask_set::all_ones(m->prunable_layers());
  for (int round = 1; round <= 3; ++round) {
    train_steps(*m, masks, opt, 2, static_cast<std::uint64_t>(round));
    masks = next_masks(*m, masks, rate(0.2));
    reinit_lth(*m, init, masks, &opt);
    const auto pm = m->parameter_masks(masks);
    auto ps = m->parameters();
    std::size_t surviving = 0, equal = 0, masked = 0, zero = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto& ref = init.at(ps[i]->name);
      for (std::size_t j = 0; j < pm[i].size(); ++j) {
        if (pm[i][j] != 0.0f) {
          ++surviving;
          equal += ps[i]->value[j] == ref[j] ? 1 : 0;
        } else {
          ++masked;
          zero += ps[i]->value[j] == 0.0f ? 1 : 0;
        }
      }
    }
    EXPECT_EQ(equal, surviving);
    EXPECT_EQ(zero, masked);
    EXPECT_GT(masked, 0u);
  }
}

TEST(Reinit, SpWithoutTrainingOnlyZeroesNewlyMaskedChannels) {
  auto m = build_model<float>(mlp({8, 8}), 3);
  auto masks = mask_set::all_ones(m->prunable_layers());
  sgd<float> opt(0.9, 0.0);
  train_steps(*m, masks, opt, 3, 9);
  const auto prev = snapshot(*m, snapshot_tag::previous_round);
  auto next = next_masks(*m, masks, rate(0.25));
  reinit_sp(*m, prev, next, &opt);
  const auto pm = m->parameter_masks(next);
  auto ps = m->parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& ref = prev.at(ps[i]->name);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      EXPECT_EQ(ps[i]->value[j], pm[i][j] != 0.0f ? ref[j] : 0.0f);
    }
  }
}

TEST(Reinit, WrongSnapshotTagIsRejected) {
  auto m = build_model<float>(mlp({4}), 3);
  const auto masks = mask_set::all_ones(m->prunable_layers());
  EXPECT_THROW(reinit_sp(*m, snapshot(*m, snapshot_tag::init), masks), structural_error);
  EXPECT_THROW(reinit_lth(*m, snapshot(*m, snapshot_tag::previous_round), masks), structural_error);
}

TEST(Reinit, SnapshotShapeMismatchIsStructuralError) {
  auto a = build_model<float>(mlp({4}), 3);
  auto b = build_model<float>(mlp({5}), 3);
  EXPECT_THROW(reinit_lth(*a, snapshot(*b, snapshot_tag::init), mask_set::all_ones(a->prunable_layers())),
               structural_error);
}

TEST(Reinit, StrategiesAgreeWhenSnapshotsMatch) {
  auto base = build_model<float>(wrn10(), 3);
  const auto init = snapshot(*base, snapshot_tag::init);
  const auto prev = snapshot(*base, snapshot_tag::previous_round);
  auto masks = next_masks(*base, mask_set::all_ones(base->prunable_layers()), rate(0.3));
  auto a = base->clone();
  auto b = base->clone();
  sgd<float> oa(0.9, 0.0), ob(0.9, 0.0);
  train_steps(*a, mask_set::all_ones(a->prunable_layers()), oa, 2, 5);
  train_steps(*b, mask_set::all_ones(b->prunable_layers()), ob, 2, 6);
  reinit_sp(*a, prev, masks);
  reinit_lth(*b, init, masks);
  auto pa = a->parameters(), pb = b->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(pa[i]->value == pb[i]->value) << pa[i]->name;
  auto ba = a->buffers(), bb = b->buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) EXPECT_TRUE(ba[i]->value == bb[i]->value);
}

TEST(MaskFile, JsonRoundTrip) {
  auto masks = mask_set::all_ones({{"a", 5}, {"b", 3}});
  masks.layers[0].keep[1] = masks.layers[1].keep[2] = false;
  masks.round = 2;
  masks.cumulative_sparsity = masks.recompute_sparsity();
  const auto j = to_json_value(masks);
  EXPECT_EQ(j.at("layers")[0].at("bitmap"), "10111");
  const auto back = mask_set_from_json(j);
  EXPECT_EQ(back.round, 2u);
  EXPECT_EQ(back.cumulative_sparsity, masks.cumulative_sparsity);
  EXPECT_EQ(back.layers[1].keep, masks.layers[1].keep);
  auto bad = j;
  bad["layers"][0]["bitmap"] = "10x11";
  EXPECT_THROW(mask_set_from_json(bad), structural_error);
}
