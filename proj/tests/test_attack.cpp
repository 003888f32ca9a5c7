#include <gtest/gtest.h>

#include <cmath>

#include "controlloc/attack.hpp"
#include "controlloc/scene.hpp"

using namespace controlloc;

TEST(Adam, FirstStepMovesByLr) {
  AdamState s(1);
  std::vector<double> x{0.5};
  adam_step(s, x, {1.0}, AdamParams{});
  EXPECT_NEAR(x[0], 0.49, 1e-9);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientLeavesPatch) {
  AdamState s(4);
  std::vector<double> x{0.1, 0.5, 0.9, 0.3};
  const std::vector<double> before = x;
  for (int i = 0; i < 5; ++i) adam_step(s, x, std::vector<double>(4, 0.0), AdamParams{});
  EXPECT_EQ(x, before);
}

TEST(Adam, ProjectsOntoUnitInterval) {
  AdamState s(2);
  std::vector<double> x{0.05, 0.95};
  AdamParams p;
  p.lr = 0.1;
  for (int i = 0; i < 50; ++i) adam_step(s, x, {10.0, -10.0}, p);
  EXPECT_EQ(x[0], 0.0);
  EXPECT_EQ(x[1], 1.0);
}

TEST(Adam, RejectsNonFiniteGradient) {
  AdamState s(1);
  std::vector<double> x{0.5};
  EXPECT_THROW(adam_step(s, x, {NAN}, AdamParams{}), std::runtime_error);
  EXPECT_THROW(adam_step(s, x, {1.0, 2.0}, AdamParams{}), std::invalid_argument);
}

namespace {
struct Rig {
  Detector det;
  AttackFrames fs;
  AttackDirection dir;
  AttackConfig cfg;
};

Rig small_setup(int iterations) {
  const DetectorConfig dc;
  Rig s{Detector(dc, DetectorWeights::random(dc, 6)), {}, {}, {}};
  const Scenario sc = gen_scene(SceneSpec{}, 31);
  for (int f = sc.attack_start; f < sc.attack_start + 2; ++f) {
    s.fs.frames.push_back(sc.frames[static_cast<std::size_t>(f)]);
    s.fs.boxes.push_back(sc.target[static_cast<std::size_t>(f)]);
  }
  s.dir = AttackDirection{sc.direction, sc.goal};
  s.cfg.iterations = iterations;
  s.cfg.patch_h = sc.patch_h;
  s.cfg.patch_w = sc.patch_w;
  s.cfg.offset_top = sc.region[8].top - static_cast<int>(std::floor(sc.target[8].y1));
  s.cfg.offset_left = sc.region[8].left - static_cast<int>(std::floor(sc.target[8].x1));
  s.cfg.seed = 5;
  s.cfg.eot.seed = 5;
  return s;
}
}  // namespace

TEST(Generate, SingleIterationLogsOnce) {
  Rig s = small_setup(1);
  const AttackResult r = generate_patch(s.det, s.fs, s.dir, s.cfg);
  EXPECT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.iterations, 1);
}

TEST(Generate, DeterministicAndInRange) {
  Rig s = small_setup(15);
  const AttackResult a = generate_patch(s.det, s.fs, s.dir, s.cfg);
  const AttackResult b = generate_patch(s.det, s.fs, s.dir, s.cfg);
  EXPECT_EQ(a.patch.pixels.data, b.patch.pixels.data);
  EXPECT_EQ(a.log.size(), 15u);
  for (double v : a.patch.pixels.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(a.patch.top, s.cfg.offset_top);
  EXPECT_EQ(a.patch.pixels.height, s.cfg.patch_h);
}

TEST(Generate, PatchChanges) {
  Rig s = small_setup(10);
  const AttackResult a = generate_patch(s.det, s.fs, s.dir, s.cfg);
  double moved = 0;
  for (double v : a.patch.pixels.data) moved = std::max(moved, std::abs(v - 0.5));
  EXPECT_GT(moved, 0.0);
}

TEST(Generate, BranchMatchesAdv) {
  Rig s = small_setup(10);
  for (const LossBreakdown& b : generate_patch(s.det, s.fs, s.dir, s.cfg).log)
    EXPECT_DOUBLE_EQ(b.adv, b.branch == Branch::regression ? b.regression : b.score);
}

TEST(Slrm, DeterministicAndLogsWeightedSum) {
  Rig s = small_setup(8);
  const AttackResult a = slrm_generate(s.det, s.fs, s.dir, s.cfg, 0.1);
  const AttackResult b = slrm_generate(s.det, s.fs, s.dir, s.cfg, 0.1);
  EXPECT_EQ(a.patch.pixels.data, b.patch.pixels.data);
  for (const LossBreakdown& l : a.log) EXPECT_NEAR(l.adv, l.regression + 0.1 * l.score, 1e-12);
}

TEST(Dual, FirstPatchMatchesSingleMode) {
  Rig s = small_setup(8);
  s.cfg.dual = true;
  const AttackResult d = dual_generate(s.det, s.fs, s.dir, s.cfg);
  s.cfg.dual = false;
  const AttackResult one = generate_patch(s.det, s.fs, s.dir, s.cfg);
  EXPECT_EQ(d.patch.pixels.data, one.patch.pixels.data);
  ASSERT_TRUE(d.disappearance.has_value());
  EXPECT_EQ(d.disappearance_log.size(), 8u);
}

TEST(Dual, EmptySetIsVacuous) {
  // no target in the frame: nothing to erase, and a flat patch has no TV gradient either
  Rig s = small_setup(5);
  s.fs.frames = {Image(128, 128, 0.2)};
  s.fs.boxes = {s.fs.boxes[0]};
  s.cfg.dual = true;
  s.cfg.eot = EotParams::identity();
  const AttackResult d = dual_generate(s.det, s.fs, s.dir, s.cfg);
  for (const LossBreakdown& b : d.disappearance_log) EXPECT_DOUBLE_EQ(b.adv, 0.0);
  for (double v : d.disappearance->pixels.data) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Dual, RequiresFlag) {
  Rig s = small_setup(1);
  EXPECT_THROW(dual_generate(s.det, s.fs, s.dir, s.cfg), std::invalid_argument);
}

TEST(Config, Validation) {
  Rig s = small_setup(0);
  EXPECT_THROW(generate_patch(s.det, s.fs, s.dir, s.cfg), std::invalid_argument);
  s.cfg.iterations = 1;
  s.cfg.adam.lr = 0;
  EXPECT_THROW(generate_patch(s.det, s.fs, s.dir, s.cfg), std::invalid_argument);
  s.cfg.adam.lr = 0.01;
  EXPECT_THROW(slrm_generate(s.det, s.fs, s.dir, s.cfg, -1), std::invalid_argument);
  s.dir.v = Vec2{0, 0};
  EXPECT_THROW(generate_patch(s.det, s.fs, s.dir, s.cfg), std::invalid_argument);
}
