#include <gtest/gtest.h>

#include <cmath>

#include "controlloc/losses.hpp"
#include "controlloc/random.hpp"
#include "support.hpp"

using namespace controlloc;
using testsupport::proposal;

namespace {
const std::size_t kE[1] = {0};
const std::size_t kF[1] = {1};
}  // namespace

TEST(ScoreLoss, WorkedValues) {
  const std::vector<Proposal> ps{proposal(BBox{0, 0, 10, 10}, 0.6), proposal(BBox{5, 0, 15, 10}, 0.7)};
  const ScoreLoss s = score_loss(ps, kE, kF, LossHyper{});
  EXPECT_NEAR(s.erase, 0.36, 1e-12);
  EXPECT_NEAR(s.fabricate, 0.09, 1e-12);
  EXPECT_NEAR(s.total, 0.45, 1e-12);
}

TEST(ScoreLoss, VanishesWhenGoalsMet) {
  const std::vector<Proposal> ps{proposal(BBox{0, 0, 10, 10}, 0.2), proposal(BBox{5, 0, 15, 10}, 1.0)};
  EXPECT_DOUBLE_EQ(score_loss(ps, kE, kF, LossHyper{}).total, 0.0);
}

TEST(ScoreLoss, ThresholdIsStrict) {
  const std::vector<Proposal> ps{proposal(BBox{0, 0, 10, 10}, 0.25), proposal(BBox{5, 0, 15, 10}, 0.5)};
  const ScoreLoss s = score_loss(ps, kE, kF, LossHyper{});
  EXPECT_DOUBLE_EQ(s.erase, 0.0);
  EXPECT_EQ(s.grads.size(), 1u);
}

TEST(ScoreLoss, EmptyFabricationRejected) {
  const std::vector<Proposal> ps{proposal(BBox{0, 0, 10, 10}, 0.5)};
  EXPECT_THROW(score_loss(ps, kE, {}, LossHyper{}), std::invalid_argument);
  EXPECT_THROW(regression_loss(ps, {}, BBox{0, 0, 1, 1}, LossHyper{}), std::invalid_argument);
}

TEST(RegressionLoss, PerfectMatchIsZero) {
  const std::vector<Proposal> ps{proposal(BBox{3, 4, 20, 30}, 0.5)};
  const RegressionLoss r = regression_loss(ps, kE, BBox{3, 4, 20, 30}, LossHyper{});
  EXPECT_NEAR(r.total, 0.0, 1e-15);
}

TEST(RegressionLoss, WorkedValues) {
  const std::vector<Proposal> ps{proposal(BBox{0, 0, 10, 10}, 0.5)};
  const RegressionLoss r = regression_loss(ps, kE, BBox{5, 0, 15, 10}, LossHyper{});
  EXPECT_NEAR(r.iou_term, std::log(3.0), 1e-12);
  EXPECT_NEAR(r.center_term, 25.0, 1e-12);
  EXPECT_NEAR(r.total, std::log(3.0) + 0.25, 1e-12);
  EXPECT_NEAR(r.total, 1.3486, 1e-4);
}

TEST(RegressionLoss, DisjointIsClamped) {
  const std::vector<Proposal> ps{proposal(BBox{0, 0, 10, 10}, 0.5)};
  const RegressionLoss r = regression_loss(ps, kE, BBox{50, 50, 60, 60}, LossHyper{});
  EXPECT_NEAR(r.iou_term, 13.8155, 1e-4);
}

TEST(RegressionLoss, GradientMatchesFiniteDifference) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    BBox b{rng.uniform(0, 10), rng.uniform(0, 10), 0, 0};
    b.x2 = b.x1 + rng.uniform(5, 20);
    b.y2 = b.y1 + rng.uniform(5, 20);
    const BBox t{b.x1 + rng.uniform(-4, 4), b.y1 + rng.uniform(-4, 4), b.x2 + rng.uniform(-4, 4), b.y2 + rng.uniform(-4, 4)};
    std::vector<Proposal> ps{proposal(b, 0.5)};
    const RegressionLoss r = regression_loss(ps, kE, t, LossHyper{});
    for (int k = 0; k < 4; ++k) {
      auto at = [&](double d) {
        std::vector<Proposal> q = ps;
        double* c[4] = {&q[0].box.x1, &q[0].box.y1, &q[0].box.x2, &q[0].box.y2};
        *c[k] += d;
        return regression_loss(q, kE, t, LossHyper{}).total;
      };
      const double fd = (at(1e-6) - at(-1e-6)) / 2e-6;
      EXPECT_NEAR(r.grads[0].d_box[static_cast<std::size_t>(k)], fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Tv, ConstantPatchNearZero) {
  const Image p(5, 4, 0.3);
  EXPECT_LE(tv_loss(p).value, kTvSmoothing * 4 * 3 * 3 + 1e-15);
}

TEST(Tv, TwoByTwoExample) {
  Image p(2, 2, 0.0);
  p.at(0, 1, 0) = 1;
  p.at(1, 1, 0) = 1;
  const TvLoss t = tv_loss(p);
  // channel 0 contributes sqrt(0 + 1); the other two are flat
  EXPECT_NEAR(t.value, 1.0 + 2 * kTvSmoothing, 1e-12);
}

TEST(Tv, InvariantToConstantShift) {
  Image p(6, 6);
  Rng rng(1);
  for (double& v : p.data) v = rng.uniform(0, 0.5);
  Image q = p;
  for (double& v : q.data) v += 0.4;
  EXPECT_NEAR(tv_loss(p).value, tv_loss(q).value, 1e-9);
}

TEST(Tv, RejectsTinyPatch) { EXPECT_THROW(tv_loss(Image(1, 5)), std::invalid_argument); }

TEST(Erase, Examples) {
  const std::vector<Proposal> ps{proposal(BBox{0, 0, 1, 1}, 0.6), proposal(BBox{0, 0, 1, 1}, 0.8), proposal(BBox{0, 0, 1, 1}, 0.0)};
  EXPECT_DOUBLE_EQ(erase_loss(ps, {}).value, 0.0);
  const std::size_t both[2] = {0, 1};
  EXPECT_NEAR(erase_loss(ps, both).value, 0.5, 1e-12);
  const std::size_t zero[1] = {2};
  EXPECT_DOUBLE_EQ(erase_loss(ps, zero).value, 0.0);
}

namespace {
DetectionOutput two_box_output(std::vector<std::size_t> kept) {
  DetectionOutput d;
  d.proposals = {proposal(BBox{0, 0, 10, 10}, 0.6), proposal(BBox{20, 0, 30, 10}, 0.7)};
  d.kept = std::move(kept);
  return d;
}
FilterResult fr() { return FilterResult{1, {0}}; }
}  // namespace

TEST(Branch, FabricationAloneGivesRegression) {
  const ConditionalLoss c = conditional_adv_loss(two_box_output({1}), fr(), BBox{22, 0, 32, 10}, LossHyper{});
  EXPECT_EQ(c.breakdown.branch, Branch::regression);
  EXPECT_DOUBLE_EQ(c.breakdown.adv, c.breakdown.regression);
}

TEST(Branch, MissingFabricationGivesScore) {
  const ConditionalLoss c = conditional_adv_loss(two_box_output({0}), fr(), BBox{22, 0, 32, 10}, LossHyper{});
  EXPECT_EQ(c.breakdown.branch, Branch::score);
  EXPECT_DOUBLE_EQ(c.breakdown.adv, c.breakdown.score);
}

TEST(Branch, SurvivingErasureGivesScore) {
  const ConditionalLoss c = conditional_adv_loss(two_box_output({0, 1}), fr(), BBox{22, 0, 32, 10}, LossHyper{});
  EXPECT_EQ(c.breakdown.branch, Branch::score);
  EXPECT_NEAR(c.breakdown.score, 0.45, 1e-12);
}

TEST(Branch, RepeatableOnSameOutput) {
  const DetectionOutput d = two_box_output({1});
  EXPECT_EQ(conditional_adv_loss(d, fr(), BBox{22, 0, 32, 10}, LossHyper{}).breakdown.branch,
            conditional_adv_loss(d, fr(), BBox{22, 0, 32, 10}, LossHyper{}).breakdown.branch);
}

TEST(Slrm, WeightsScoreByEta) {
  const DetectionOutput d = two_box_output({0, 1});
  const ConditionalLoss c = slrm_adv_loss(d, fr(), BBox{22, 0, 32, 10}, LossHyper{}, 10.0);
  EXPECT_NEAR(c.breakdown.adv, c.breakdown.regression + 10.0 * c.breakdown.score, 1e-12);
}

TEST(Fuzz, LossesNonNegativeAndFinite) {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Proposal> ps;
    for (int i = 0; i < 6; ++i) {
      const double x = rng.uniform(0, 100), y = rng.uniform(0, 100);
      ps.push_back(proposal(BBox{x, y, x + rng.uniform(1, 30), y + rng.uniform(1, 30)}, rng.uniform(0, 1)));
    }
    const std::size_t e[3] = {0, 1, 2}, f[1] = {3};
    const BBox t{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(60, 120), rng.uniform(60, 120)};
    const ScoreLoss s = score_loss(ps, e, f, LossHyper{});
    const RegressionLoss r = regression_loss(ps, f, t, LossHyper{});
    const double e2 = erase_loss(ps, e).value;
    for (double v : {s.total, s.erase, s.fabricate, r.total, r.iou_term, r.center_term, e2}) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
    }
  }
}
