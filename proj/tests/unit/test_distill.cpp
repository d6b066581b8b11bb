#include <gtest/gtest.h>

#include <cmath>

#include "sadprune/distill/distiller.hpp"
#include "support.hpp"

using namespace sadprune;
using sadprune::testing::central_difference;
using sadprune::testing::random_index;
using sadprune::testing::random_tensor;
using sadprune::testing::relative_error;

namespace {

feature_set<double> features(std::vector<tensor<double>> maps, const std::string& prefix) {
  feature_set<double> fs;
  for (std::size_t i = 0; i < maps.size(); ++i) fs.push_back({prefix + std::to_string(i), std::move(maps[i])});
  return fs;
}

std::vector<tap_geometry> geometry(const feature_set<double>& fs) {
  std::vector<tap_geometry> g;
  for (const auto& f : fs) g.push_back(tap_geometry::of(f.values));
  return g;
}

std::vector<std::size_t> channels(const feature_set<double>& fs) {
  std::vector<std::size_t> c;
  for (const auto& f : fs) c.push_back(f.channels());
  return c;
}

attention_matrix<double> fixed_alpha(std::size_t n, std::size_t m, rng_t& rng) {
  return softmax_rows(random_tensor({n, m}, rng, -2, 2));
}

// Random taps with mixed ranks: spatial sizes from {1,2,4} or a 2-axis map.
tensor<double> random_tap(rng_t& rng, std::size_t batch) {
  const std::size_t c = random_index(rng, 1, 5);
  if (rng() % 4 == 0) return random_tensor({batch, c}, rng);
  const std::size_t side = std::size_t{1} << random_index(rng, 0, 2);
  return random_tensor({batch, c, side, side}, rng);
}

}  // namespace

TEST(GapHw, ConstantMapGivesConstantVector) {
  tensor<double> f({2, 3, 4, 5}, 2.5);
  auto v = gap_hw(f);
  EXPECT_EQ(v.shape(), (shape_t{2, 3}));
  for (double x : v.values()) EXPECT_DOUBLE_EQ(x, 2.5);
}

TEST(GapHw, SinglePixelIsIdentity) {
  rng_t rng(1);
  auto f = random_tensor({3, 4, 1, 1}, rng);
  auto v = gap_hw(f);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(v[i], f[i]);
}

TEST(GapHw, MatchesNestedLoopOracle) {
  rng_t rng(2);
  auto f = random_tensor({2, 3, 2, 2}, rng);
  auto v = gap_hw(f);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0;
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t w = 0; w < 2; ++w) s += f.at(n, c, h, w);
      EXPECT_NEAR(v.at(n, c), s / 4.0, 1e-12);
    }
}

TEST(ChannelPoolNorm, UnitNormPerSample) {
  rng_t rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto f = random_tensor({3, random_index(rng, 1, 6), random_index(rng, 1, 4), random_index(rng, 1, 4)}, rng);
    auto u = channel_pool_norm(f);
    const std::size_t p = u.dim(1);
    for (std::size_t s = 0; s < 3; ++s) {
      double sq = 0;
      for (std::size_t j = 0; j < p; ++j) sq += u[s * p + j] * u[s * p + j];
      EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
    }
  }
}

TEST(ChannelPoolNorm, ZeroMapStaysZero) {
  auto u = channel_pool_norm(tensor<double>({2, 3, 2, 2}));
  for (double x : u.values()) EXPECT_EQ(x, 0.0);
}

TEST(ChannelPoolNorm, MatchesHandOracle) {
  rng_t rng(4);
  auto f = random_tensor({1, 4, 2, 2}, rng);
  double mean[4] = {0, 0, 0, 0};
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t p = 0; p < 4; ++p) mean[p] += f[c * 4 + p] / 4.0;
  const double norm = std::sqrt(mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2] + mean[3] * mean[3]);
  auto u = channel_pool_norm(f);
  ASSERT_EQ(u.shape(), (shape_t{1, 4}));
  for (std::size_t p = 0; p < 4; ++p) EXPECT_NEAR(u[p], mean[p] / norm, 1e-12);
}

TEST(Attention, EqualLogitsGiveUniformRows) {
  rng_t rng(5);
  auto t = features({random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 5, 2, 2}, rng)}, "t");
  auto s = features({random_tensor({2, 2, 4, 4}, rng), random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 4}, rng)},
                    "s");
  auto head = attention_head<double>::create(channels(t), channels(s), 8, rng);
  for (auto& w : head.w_qk) w.value.zero();
  for (auto& p : head.pos_t) p.value.zero();
  auto a = attention_weights(t, s, head);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a(i, j), 1.0 / 3.0, 1e-15);
}

TEST(Attention, SingleStudentTapGivesOnes) {
  rng_t rng(6);
  auto t = features({random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 5}, rng)}, "t");
  auto s = features({random_tensor({2, 2, 4, 4}, rng)}, "s");
  auto head = attention_head<double>::create(channels(t), channels(s), 4, rng);
  auto a = attention_weights(t, s, head);
  EXPECT_EQ(a(0, 0), 1.0);
  EXPECT_EQ(a(1, 0), 1.0);
}

TEST(Attention, HandSetLogitsMatchScalarSoftmax) {
  // d = 1, unit query and keys, W_QK[s] = s+1, no positional term: logits 1, 2, 3.
  rng_t rng(7);
  auto t = features({tensor<double>({1, 1, 2, 2}, 1.0)}, "t");
  auto s = features({tensor<double>({1, 1, 2, 2}, 1.0), tensor<double>({1, 1, 2, 2}, 1.0),
                     tensor<double>({1, 1, 2, 2}, 1.0)},
                    "s");
  auto head = attention_head<double>::create({1}, {1, 1, 1}, 1, rng);
  head.w_q[0].value[0] = 1.0;
  for (std::size_t j = 0; j < 3; ++j) {
    head.w_k[j].value[0] = 1.0;
    head.w_qk[j].value[0] = static_cast<double>(j + 1);
    head.pos_s[j].value[0] = 0.0;
  }
  head.pos_t[0].value[0] = 0.0;
  auto a = attention_weights(t, s, head);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(a(0, 0), std::exp(1.0) / z, 1e-9);
  EXPECT_NEAR(a(0, 1), std::exp(2.0) / z, 1e-9);
  EXPECT_NEAR(a(0, 2), std::exp(3.0) / z, 1e-9);
}

TEST(Attention, RowsAreStochasticForRandomHeads) {
  rng_t rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t batch = random_index(rng, 1, 3);
    std::vector<tensor<double>> tm, sm;
    for (std::size_t i = random_index(rng, 1, 4); i > 0; --i) tm.push_back(random_tap(rng, batch));
    for (std::size_t i = random_index(rng, 1, 4); i > 0; --i) sm.push_back(random_tap(rng, batch));
    auto t = features(tm, "t"), s = features(sm, "s");
    const auto act = trial % 2 ? activation::relu : activation::identity;
    auto head = attention_head<double>::create(channels(t), channels(s), random_index(rng, 1, 16), rng, act, act);
    auto a = attention_weights(t, s, head);
    for (std::size_t i = 0; i < t.size(); ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < s.size(); ++j) {
        EXPECT_GE(a(i, j), 0.0);
        EXPECT_LE(a(i, j), 1.0);
        sum += a(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(Attention, SoftmaxIsShiftInvariant) {
  rng_t rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = random_tensor({3, 4}, rng, -5, 5);
    auto shifted = logits;
    const double c = std::uniform_real_distribution<double>(-50, 50)(rng);
    for (std::size_t j = 0; j < 4; ++j) shifted[4 + j] += c;
    auto a = softmax_rows(logits), b = softmax_rows(shifted);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(a.alpha[i], b.alpha[i], 1e-9);
  }
}

TEST(Attention, MismatchedTapCountIsStructuralError) {
  rng_t rng(10);
  auto t = features({random_tensor({1, 3, 2, 2}, rng)}, "t");
  auto s = features({random_tensor({1, 2, 2, 2}, rng)}, "s");
  auto head = attention_head<double>::create({3}, {2, 2}, 4, rng);
  EXPECT_THROW(attention_weights(t, s, head), structural_error);
  auto wrong = features({random_tensor({1, 5, 2, 2}, rng), random_tensor({1, 2, 2, 2}, rng)}, "s");
  EXPECT_THROW(attention_weights(t, wrong, head), structural_error);
}

TEST(Projection, MatchesTeacherGeometry) {
  rng_t rng(11);
  auto t = features({random_tensor({2, 6, 8, 8}, rng), random_tensor({2, 4, 2, 2}, rng), random_tensor({2, 7}, rng)},
                    "t");
  auto s = features({random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 5}, rng)}, "s");
  auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) EXPECT_EQ(bank.project(i, j, s[j].values).shape(), t[i].values.shape());
}

TEST(Projection, PooledDescriptorEqualsChannelMeanOfProjection) {
  rng_t rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t batch = random_index(rng, 1, 3);
    auto t = features({random_tap(rng, batch)}, "t");
    auto s = features({random_tap(rng, batch)}, "s");
    auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
    auto fast = bank.pooled_descriptor(0, 0, s[0].values);
    auto full = channel_mean(bank.project(0, 0, s[0].values));
    ASSERT_EQ(fast.shape(), full.shape());
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], full[i], 1e-12);
  }
}

TEST(AttentionLoss, IdenticalProjectedMapsGiveZero) {
  rng_t rng(13);
  auto h = random_tensor({2, 2, 3, 3}, rng);
  auto t = features({h}, "t"), s = features({h}, "s");
  auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
  auto& w = bank.weight(0, 0).value;
  w.zero();
  w[0] = w[3] = 1.0;
  auto alpha = softmax_rows(tensor<double>({1, 1}));
  EXPECT_NEAR(attention_loss(t, s, alpha, bank), 0.0, 1e-15);
}

TEST(AttentionLoss, ZeroAlphaGivesZero) {
  rng_t rng(14);
  auto t = features({random_tensor({2, 3, 4, 4}, rng)}, "t");
  auto s = features({random_tensor({2, 2, 2, 2}, rng), random_tensor({2, 5}, rng)}, "s");
  auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
  attention_matrix<double> zero{tensor<double>({1, 2})};
  EXPECT_EQ(attention_loss(t, s, zero, bank), 0.0);
}

TEST(AttentionLoss, HandComputedSingleChannelPair) {
  // Teacher (1,2,3,4), student (4,3,2,1) scaled by 2: both normalize by sqrt(30),
  // difference (-3,-1,1,3)/sqrt(30), distance sqrt(20/30).
  rng_t rng(15);
  auto t = features({tensor<double>({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4})}, "t");
  auto s = features({tensor<double>({1, 1, 2, 2}, std::vector<double>{4, 3, 2, 1})}, "s");
  auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
  bank.weight(0, 0).value[0] = 2.0;
  auto alpha = softmax_rows(tensor<double>({1, 1}));
  EXPECT_NEAR(attention_loss(t, s, alpha, bank), std::sqrt(2.0 / 3.0), 1e-9);
}

TEST(AttentionLoss, HandComputedUpsampledVector) {
  // A 2-axis student tap projects to a constant 2x2 map whose normalized form is 0.5 everywhere.
  rng_t rng(16);
  auto t = features({tensor<double>({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4})}, "t");
  auto s = features({tensor<double>({1, 2}, std::vector<double>{0.5, 1.5})}, "s");
  auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
  bank.weight(0, 0).value[0] = 1.0;
  bank.weight(0, 0).value[1] = 0.25;
  const double r30 = std::sqrt(30.0);
  double sq = 0;
  for (double v : {1.0, 2.0, 3.0, 4.0}) sq += (v / r30 - 0.5) * (v / r30 - 0.5);
  auto alpha = softmax_rows(tensor<double>({1, 1}));
  EXPECT_NEAR(attention_loss(t, s, alpha, bank), std::sqrt(sq), 1e-9);
}

TEST(AttentionLoss, AveragesOverBatchAndWeightsByAlpha) {
  rng_t rng(17);
  auto t = features({random_tensor({3, 2, 2, 2}, rng)}, "t");
  auto s = features({random_tensor({3, 2, 2, 2}, rng), random_tensor({3, 4, 1, 1}, rng)}, "s");
  auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
  auto alpha = softmax_rows(tensor<double>({1, 2}, std::vector<double>{0.3, -0.4}));
  double expect = 0;
  const auto ut = channel_pool_norm(t[0].values);
  for (std::size_t j = 0; j < 2; ++j) {
    const auto us = channel_pool_norm(bank.project(0, j, s[j].values));
    double mean = 0;
    for (std::size_t b = 0; b < 3; ++b) {
      double sq = 0;
      for (std::size_t p = 0; p < 4; ++p) sq += std::pow(ut[b * 4 + p] - us[b * 4 + p], 2);
      mean += std::sqrt(sq) / 3.0;
    }
    expect += alpha(0, j) * mean;
  }
  EXPECT_NEAR(attention_loss(t, s, alpha, bank), expect, 1e-12);
}

TEST(AttentionLoss, NonNegativeOnRandomInputs) {
  rng_t rng(18);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t batch = random_index(rng, 1, 3);
    auto t = features({random_tap(rng, batch), random_tap(rng, batch)}, "t");
    auto s = features({random_tap(rng, batch)}, "s");
    auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
    const double v = attention_loss(t, s, fixed_alpha(2, 1, rng), bank);
    EXPECT_GE(v, 0.0);
    EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(AttentionLoss, NonFiniteFeaturesAreNumericError) {
  rng_t rng(19);
  auto t = features({random_tensor({1, 2, 2, 2}, rng)}, "t");
  auto s = features({random_tensor({1, 2, 2, 2}, rng)}, "s");
  auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
  s[0].values[3] = std::nan("");
  EXPECT_THROW(attention_loss(t, s, softmax_rows(tensor<double>({1, 1})), bank), numeric_error);
}

TEST(AttentionLoss, StudentGradientMatchesFiniteDifferences) {
  // Shapes (1,4,2,2) teacher x (1,3,2,2) student, step 1e-4, relative tolerance 1e-3.
  rng_t rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    auto t = features({random_tensor({1, 4, 2, 2}, rng)}, "t");
    auto s = features({random_tensor({1, 3, 2, 2}, rng)}, "s");
    auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
    auto alpha = softmax_rows(tensor<double>({1, 1}));
    auto scratch = bank;
    auto r = attention_loss_with_grad(t, s, alpha, scratch);
    for (std::size_t i = 0; i < s[0].values.size(); ++i) {
      const double fd = central_difference<double>([&] { return attention_loss(t, s, alpha, bank); },
                                                   s[0].values[i], 1e-4);
      EXPECT_LT(relative_error(r.student_grads[0][i], fd, 1e-8), 1e-3) << "entry " << i;
    }
  }
}

TEST(AttentionLoss, ProjectorAndMixedRankGradientsMatchFiniteDifferences) {
  rng_t rng(21);
  auto t = features({random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 4}, rng)}, "t");
  auto s = features({random_tensor({2, 2, 2, 2}, rng), random_tensor({2, 3}, rng)}, "s");
  auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
  auto alpha = fixed_alpha(2, 2, rng);
  for (auto* p : bank.parameters()) p->grad.zero();
  auto r = attention_loss_with_grad(t, s, alpha, bank);
  auto loss = [&] { return attention_loss(t, s, alpha, bank); };
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < s[j].values.size(); ++i) {
      const double fd = central_difference<double>(loss, s[j].values[i], 1e-5);
      EXPECT_LT(relative_error(r.student_grads[j][i], fd, 1e-8), 1e-5);
    }
  for (auto* p : bank.parameters())
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double fd = central_difference<double>(loss, p->value[i], 1e-5);
      // A constant upsampled map normalizes to a sign pattern, so some projector gradients vanish.
      EXPECT_LT(relative_error(p->grad[i], fd, 1e-4), 1e-5) << p->name;
    }
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const double fd = central_difference<double>(loss, alpha.alpha[i * 2 + j], 1e-5);
      EXPECT_NEAR(r.d_alpha[i * 2 + j], fd, 1e-8);
    }
}

TEST(AttentionPass, GradientsThroughAlphaMatchFiniteDifferences) {
  rng_t rng(22);
  for (auto act : {activation::identity, activation::relu}) {
    auto t = features({random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 2, 2, 2}, rng)}, "t");
    auto s = features({random_tensor({2, 2, 4, 4}, rng), random_tensor({2, 4, 2, 2}, rng), random_tensor({2, 3}, rng)},
                      "s");
    auto head = attention_head<double>::create(channels(t), channels(s), 5, rng, act, act);
    for (auto& w : head.w_qk) fill_uniform(w.value.values(), rng, -3, 3);
    auto bank = projection_bank<double>::create(geometry(t), geometry(s), rng);
    auto objective = [&] {
      auto a = attention_weights(t, s, head);
      return attention_loss(t, s, a, bank);
    };
    for (auto* p : head.parameters()) p->grad.zero();
    for (auto* p : bank.parameters()) p->grad.zero();
    attention_pass<double> pass(head, t, s);
    auto r = attention_loss_with_grad(t, s, pass.alpha(), bank);
    pass.backward(r.d_alpha, r.student_grads);
    for (std::size_t j = 0; j < s.size(); ++j)
      for (std::size_t i = 0; i < s[j].values.size(); i += 3) {
        const double fd = central_difference<double>(objective, s[j].values[i], 1e-5);
        EXPECT_LT(relative_error(r.student_grads[j][i], fd, 1e-7), 1e-4) << "tap " << j << " entry " << i;
      }
    for (auto* p : head.parameters())
      for (std::size_t i = 0; i < p->value.size(); i += 2) {
        const double fd = central_difference<double>(objective, p->value[i], 1e-5);
        EXPECT_LT(relative_error(p->grad[i], fd, 1e-7), 1e-4) << p->name << "[" << i << "]";
      }
  }
}

TEST(StudentLoss, DegenerateWeightsReturnClassLoss) {
  EXPECT_EQ(student_loss(1.2345678901234, 7.0, 3.0, 0.0, 0.0), 1.2345678901234);
}

TEST(StudentLoss, DirectArithmetic) { EXPECT_NEAR(student_loss(1.0, 0.5, 2.0, 2.0, 0.5), 2.5, 1e-15); }

TEST(StudentLoss, BetaHundredContributesHundredTimesAttention) {
  const double att = 0.0137;
  EXPECT_NEAR(student_loss(0.8, att, 0.0, 100.0, 0.0) - student_loss(0.8, 0.0, 0.0, 100.0, 0.0), 100.0 * att, 1e-9);
}

TEST(StudentLoss, LinearInEachTerm) {
  rng_t rng(23);
  std::uniform_real_distribution<double> u(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const double c = u(rng), a = u(rng), k = u(rng), beta = u(rng) * 40, akd = u(rng) / 5, dx = u(rng);
    const double base = student_loss(c, a, k, beta, akd);
    EXPECT_NEAR(student_loss(c + dx, a, k, beta, akd) - base, (1 - akd) * dx, 1e-9);
    EXPECT_NEAR(student_loss(c, a + dx, k, beta, akd) - base, beta * dx, 1e-9);
    EXPECT_NEAR(student_loss(c, a, k + dx, beta, akd) - base, akd * dx, 1e-9);
  }
}

TEST(StudentLoss, RejectsBadWeightsAndNonFiniteInputs) {
  EXPECT_THROW(student_loss(1.0, 1.0, 1.0, -1.0, 0.0), config_error);
  EXPECT_THROW(student_loss(1.0, 1.0, 1.0, 1.0, 1.5), config_error);
  EXPECT_THROW(student_loss(std::nan(""), 1.0, 1.0, 1.0, 0.5), numeric_error);
}

TEST(SoftTargetLoss, IdenticalLogitsGiveZero) {
  rng_t rng(24);
  auto z = random_tensor({4, 5}, rng, -3, 3);
  EXPECT_NEAR(soft_target_loss(z, z, 4.0).value, 0.0, 1e-14);
}

TEST(SoftTargetLoss, TwoClassScalarOracle) {
  // T = 1: KL(p_t || p_s) with p = sigmoid of the logit gap.
  tensor<double> zt({1, 2}, std::vector<double>{0.3, 1.1}), zs({1, 2}, std::vector<double>{-0.4, 0.2});
  const double pt = 1 / (1 + std::exp(1.1 - 0.3)), ps = 1 / (1 + std::exp(0.2 + 0.4));
  const double kl = pt * std::log(pt / ps) + (1 - pt) * std::log((1 - pt) / (1 - ps));
  EXPECT_NEAR(soft_target_loss(zt, zs, 1.0).value, kl, 1e-9);
}

TEST(SoftTargetLoss, TemperatureScalingAndGradient) {
  rng_t rng(25);
  auto zt = random_tensor({3, 4}, rng, -2, 2), zs = random_tensor({3, 4}, rng, -2, 2);
  auto r = soft_target_loss(zt, zs, 4.0);
  EXPECT_GE(r.value, 0.0);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const double fd = central_difference<double>([&] { return soft_target_loss(zt, zs, 4.0).value; }, zs[i], 1e-5);
    EXPECT_LT(relative_error(r.grad[i], fd, 1e-9), 1e-6);
  }
  EXPECT_THROW(soft_target_loss(zt, zs, 0.0), config_error);
}

TEST(ClassLosses, CrossEntropyAndMseGradients) {
  rng_t rng(26);
  auto z = random_tensor({5, 3}, rng, -2, 2);
  const std::vector<int> y{0, 2, 1, 1, 0};
  auto ce = cross_entropy(z, y);
  double ref = 0;
  for (std::size_t b = 0; b < 5; ++b) {
    double s = 0;
    for (std::size_t k = 0; k < 3; ++k) s += std::exp(z.at(b, k));
    ref += std::log(s) - z.at(b, static_cast<std::size_t>(y[b]));
  }
  EXPECT_NEAR(ce.value, ref / 5, 1e-12);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double fd = central_difference<double>([&] { return cross_entropy(z, y).value; }, z[i], 1e-6);
    EXPECT_LT(relative_error(ce.grad[i], fd, 1e-9), 1e-6);
  }
  auto p = random_tensor({4, 1}, rng);
  const std::vector<double> target{0.5, -1.0, 2.0, 0.0};
  auto mse = mse_loss(p, target);
  for (std::size_t i = 0; i < 4; ++i) {
    const double fd = central_difference<double>([&] { return mse_loss(p, target).value; }, p[i], 1e-6);
    EXPECT_LT(relative_error(mse.grad[i], fd, 1e-9), 1e-6);
  }
  EXPECT_THROW(cross_entropy(z, std::vector<int>{0, 1}), input_error);
}

TEST(Distiller, TotalGradientMatchesFiniteDifferences) {
  rng_t rng(27);
  forward_result<double> teacher{random_tensor({3, 4}, rng),
                                 features({random_tensor({3, 3, 4, 4}, rng), random_tensor({3, 5}, rng)}, "t")};
  forward_result<double> student{random_tensor({3, 4}, rng),
                                 features({random_tensor({3, 2, 2, 2}, rng), random_tensor({3, 3}, rng)}, "s")};
  distill_settings cfg;
  cfg.beta = 7.0;
  cfg.alpha_kd = 0.6;
  cfg.temperature = 3.0;
  cfg.d = 6;
  distiller<double> dist(cfg, teacher.features, student.features, rng);
  const std::vector<int> labels{1, 3, 0};
  auto objective = [&] {
    distiller<double> copy = dist;
    return copy.classification(&teacher, student, labels).total;
  };
  for (auto* p : dist.parameters()) p->grad.zero();
  auto step = dist.classification(&teacher, student, labels);
  EXPECT_NEAR(step.total, (1 - 0.6) * step.class_loss + 0.6 * step.kd_loss + 7.0 * step.attention_loss, 1e-12);
  for (std::size_t i = 0; i < student.outputs.size(); ++i) {
    const double fd = central_difference<double>(objective, student.outputs[i], 1e-6);
    EXPECT_LT(relative_error(step.grad_outputs[i], fd, 1e-8), 1e-5);
  }
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < student.features[j].values.size(); i += 2) {
      const double fd = central_difference<double>(objective, student.features[j].values[i], 1e-6);
      EXPECT_LT(relative_error(step.tap_grads[j][i], fd, 1e-8), 1e-4);
    }
  auto params = dist.parameters();
  for (auto* p : params)
    for (std::size_t i = 0; i < p->value.size(); i += 5) {
      const double fd = central_difference<double>(objective, p->value[i], 1e-6);
      EXPECT_LT(relative_error(p->grad[i], fd, 1e-8), 1e-4) << p->name;
    }
}

TEST(Distiller, RegressionWithoutAttentionIsPlainMse) {
  rng_t rng(28);
  forward_result<double> student{random_tensor({4, 1}, rng), features({random_tensor({4, 3}, rng)}, "s")};
  distill_settings cfg;  // beta = 0, alpha_kd = 0
  distiller<double> dist(cfg, student.features, student.features, rng);
  const std::vector<double> y{0.1, 0.2, 0.3, 0.4};
  auto step = dist.regression(nullptr, student, y);
  EXPECT_EQ(step.total, mse_loss(student.outputs, y).value);
  EXPECT_TRUE(step.tap_grads.empty());
  EXPECT_FALSE(cfg.uses_teacher());
}
