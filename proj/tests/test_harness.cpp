#include <gtest/gtest.h>

#include <algorithm>

#include "controlloc/harness.hpp"
#include "support.hpp"

using namespace controlloc;

TEST(Scene, Deterministic) {
  const Scenario a = gen_scene(SceneSpec{}, 42), b = gen_scene(SceneSpec{}, 42);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t f = 0; f < a.frames.size(); ++f) EXPECT_EQ(a.frames[f].data, b.frames[f].data);
  EXPECT_EQ(a.target, b.target);
}

TEST(Scene, PatchRegionWithinAreaBound) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scenario sc = gen_scene(SceneSpec{}, seed);
    for (int f = sc.attack_start; f <= sc.attack_end; ++f) {
      const BBox& t = sc.target[static_cast<std::size_t>(f)];
      EXPECT_LE(sc.patch_h * sc.patch_w, 0.12 * t.area() + 1e-9);
      const PixelRect& r = sc.region[static_cast<std::size_t>(f)];
      EXPECT_GE(r.height, sc.patch_h);
      EXPECT_GE(r.width, sc.patch_w);
      EXPECT_GE(r.top, t.y1 - 1e-9);
      EXPECT_LE(r.bottom(), t.y2 + 1e-9);
    }
    EXPECT_NO_THROW(sc.validate());
  }
}

TEST(Scene, GoalAndDirectionOverride) {
  const AttackGoal in = AttackGoal::move_in, out = AttackGoal::move_out;
  const int right = 1, left = -1;
  const Scenario a = gen_scene(SceneSpec{}, 9, &in, &right);
  const Scenario b = gen_scene(SceneSpec{}, 9, &out, &left);
  EXPECT_EQ(a.goal, in);
  EXPECT_EQ(b.goal, out);
  EXPECT_GT(a.direction.dx, 0);
  EXPECT_LT(b.direction.dx, 0);
  const int bad = 0;
  EXPECT_THROW(gen_scene(SceneSpec{}, 9, &in, &bad), std::invalid_argument);
}

TEST(Scene, BenchmarkSplitsGoals) {
  const auto bench = make_benchmark(SceneSpec{}, 20, 7);
  ASSERT_EQ(bench.size(), 20u);
  const auto ins = std::count_if(bench.begin(), bench.end(), [](const Scenario& s) { return s.goal == AttackGoal::move_in; });
  EXPECT_EQ(ins, 10);
}

TEST(MaxCapability, FourFramesSucceedOnDefaults) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario sc = gen_scene(SceneSpec{}, seed);
    const Outcome o = max_capability(sc, MotConfig{}, 4);
    EXPECT_TRUE(o.success) << seed;
    ASSERT_TRUE(o.frames_to_success.has_value());
    EXPECT_LE(*o.frames_to_success, 4);
  }
}

TEST(MaxCapability, BenchmarkCeiling) {
  std::vector<Outcome> outs;
  for (const Scenario& sc : make_benchmark(SceneSpec{}, 20, 1)) outs.push_back(max_capability(sc, MotConfig{}));
  EXPECT_DOUBLE_EQ(aggregate(outs).asr, 1.0);
}

TEST(MaxCapability, NoManipulationNoSuccess) {
  const Scenario sc = gen_scene(SceneSpec{}, 3);
  const Outcome o = max_capability(sc, MotConfig{}, 0);
  EXPECT_FALSE(o.success);
  EXPECT_FALSE(o.frames_to_success.has_value());
}

TEST(MaxCapability, SuccessMeansGateMiss) {
  const Scenario sc = gen_scene(SceneSpec{}, 5);
  const MotConfig mot;
  const Outcome o = max_capability(sc, mot, 4);
  ASSERT_TRUE(o.success);
  const std::size_t after = static_cast<std::size_t>(o.attack_end + 1);
  const BBox& truth = o.detections[after].detections[static_cast<std::size_t>(o.detections[after].target)].box;
  for (const TrackSnapshot& s : o.track_log[after].tracks)
    if (s.id == o.pre_attack_track) {
      EXPECT_LE(iou(s.predicted, truth), mot.t_iou);
    }
  EXPECT_EQ(o.success, hijack_success(o.track_log, o.detections, o.attack_end));
}

TEST(Predicate, DecidableFromLog) {
  // a hand-built stream: the target jumps away right after t_end
  std::vector<FrameDetections> d;
  for (int f = 0; f < 6; ++f) d.push_back({{Detection{BBox{10.0 + f, 10, 30.0 + f, 26}, 0.9}}, 0});
  d.push_back({{Detection{BBox{80, 80, 100, 96}, 0.9}}, 0});
  const auto log = track_stream(d, MotConfig{});
  EXPECT_TRUE(hijack_success(log, d, 5));
  EXPECT_FALSE(hijack_success(log, d, 4));
  EXPECT_FALSE(hijack_success(log, d, 6));  // nothing after the last frame
}

TEST(Aggregate, AllSuccess) {
  std::vector<Outcome> outs(3);
  for (int i = 0; i < 3; ++i) {
    outs[static_cast<std::size_t>(i)].success = true;
    outs[static_cast<std::size_t>(i)].frames_to_success = i + 1;
  }
  const Aggregate a = aggregate(outs);
  EXPECT_DOUBLE_EQ(a.asr, 1.0);
  EXPECT_DOUBLE_EQ(*a.mean_frames, 2.0);
}

TEST(Aggregate, NoSuccessLeavesFramesEmpty) {
  const Aggregate a = aggregate(std::vector<Outcome>(4));
  EXPECT_EQ(a.successes, 0);
  EXPECT_DOUBLE_EQ(a.asr, 0.0);
  EXPECT_FALSE(a.mean_frames.has_value());
}

TEST(Aggregate, OrderInvariant) {
  std::vector<Outcome> outs(5);
  outs[1].success = true;
  outs[1].frames_to_success = 3;
  outs[4].success = true;
  outs[4].frames_to_success = 2;
  const Aggregate a = aggregate(outs);
  std::reverse(outs.begin(), outs.end());
  const Aggregate b = aggregate(outs);
  EXPECT_EQ(a.successes, b.successes);
  EXPECT_EQ(a.mean_frames, b.mean_frames);
}

TEST(ParallelMap, IndependentOfJobs) {
  const std::function<int(std::size_t)> sq = [](std::size_t i) { return static_cast<int>(i * i); };
  EXPECT_EQ(parallel_map<int>(17, 1, sq), parallel_map<int>(17, 4, sq));
}

TEST(Benign, TracksTargetWithoutHijack) {
  const Detector& det = testsupport::trained_detector();
  int stable = 0;
  for (const Scenario& sc : make_benchmark(SceneSpec{}, 10, 3)) {
    const Outcome o = run_benign(sc, det, MotConfig{});
    EXPECT_FALSE(o.success);
    stable += stable_single_track(o, MotConfig{}.hits_to_confirm);
  }
  EXPECT_GE(stable, 8);  // small fixture; the full detector is held to all scenes
}

// A gray patch can occlude a weak target long enough for its track to die; the
// respawn then counts under the predicate. It must never pull a live track off.
TEST(Attack, GrayPatchNeverHijacks) {
  const Detector& det = testsupport::trained_detector();
  int successes = 0;
  for (const Scenario& sc : make_benchmark(SceneSpec{}, 20, 1)) {
    const std::size_t s = static_cast<std::size_t>(sc.attack_start);
    const BBox& b = sc.target[s];
    const PatchSpec gray{Image(sc.patch_h, sc.patch_w, 0.5), sc.region[s].top - static_cast<int>(b.y1), sc.region[s].left - static_cast<int>(b.x1)};
    const Outcome o = run_attack(sc, gray, sc.direction, det, MotConfig{});
    EXPECT_EQ(o.success, hijack_success(o.track_log, o.detections, o.attack_end));
    if (!o.success) continue;
    ++successes;
    bool dropped = o.pre_attack_track < 0;
    for (int f = o.attack_start; f <= o.attack_end; ++f)
      for (int id : o.track_log[static_cast<std::size_t>(f)].deleted_ids) dropped = dropped || id == o.pre_attack_track;
    EXPECT_TRUE(dropped) << "scene " << sc.seed;
  }
  EXPECT_LE(successes, 2);
}

TEST(Attack, DirectionMismatchRejected) {
  const Detector& det = testsupport::trained_detector();
  const Scenario sc = gen_scene(SceneSpec{}, 2);
  const PatchSpec p{Image(sc.patch_h, sc.patch_w, 0.5), 0, 0};
  EXPECT_THROW(run_attack(sc, p, Vec2{-sc.direction.dx, sc.direction.dy}, det, MotConfig{}), std::invalid_argument);
}

TEST(Attack, ScenarioPipelineRespectsRegion) {
  const Detector& det = testsupport::trained_detector();
  const Scenario sc = gen_scene(SceneSpec{}, 8);
  GeneratorSpec g;
  g.budget = 8;
  g.stage1.iterations = 3;
  for (LocationPolicy p : {LocationPolicy::stage1, LocationPolicy::random, LocationPolicy::center}) {
    g.location = p;
    const ScenarioAttack a = attack_scenario(det, sc, g);
    EXPECT_TRUE(sc.region[static_cast<std::size_t>(sc.attack_start)].contains(a.window));
    EXPECT_EQ(a.result.iterations, p == LocationPolicy::stage1 ? 5 : 8);
  }
}

TEST(Defense, IdentityAndUtility) {
  const Detector& det = testsupport::trained_detector();
  const auto bench = make_benchmark(SceneSpec{}, 10, 5);
  std::vector<PatchSpec> patches;
  for (const Scenario& sc : bench) patches.push_back(PatchSpec{Image(sc.patch_h, sc.patch_w, 0.5), 0, 0});
  const auto rows = defense_eval(det, bench, patches,
                                 {make_defense("none", 0), make_defense("bitdepth", 8), make_defense("median", 9)}, MotConfig{});
  ASSERT_EQ(rows.size(), 3u);
  const double base = defended_ap(det, utility_corpus(bench), nullptr);
  EXPECT_DOUBLE_EQ(rows[0].ap, base);
  EXPECT_NEAR(rows[1].ap, base, 0.01);
  EXPECT_NEAR(rows[1].agg.asr, rows[0].agg.asr, 0.01);
  EXPECT_LT(rows[2].ap, base);
  EXPECT_THROW(make_defense("jpeg", 1), std::invalid_argument);
}
