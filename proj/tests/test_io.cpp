#include <gtest/gtest.h>

#include <filesystem>

#include "controlloc/io.hpp"

using namespace controlloc;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("controlloc_io_" + name);
  fs::remove_all(p);
  return p;
}
}  // namespace

TEST(Hash, KnownFnvValues) {
  EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
  EXPECT_EQ(config_hash(Json{{"a", 1}}), config_hash(Json::parse(R"({"a":1})")));
  EXPECT_NE(config_hash(Json{{"a", 1}}), config_hash(Json{{"a", 2}}));
}

TEST(Config, RoundTrip) {
  RunConfig c;
  c.mot.cov = 10;
  c.mot.hits_to_confirm = 4;
  c.attack.hyper.mu2 = 0.05;
  c.attack.eot.samples = 2;
  c.stage1.iterations = 7;
  c.location = LocationPolicy::random;
  c.budget = 123;
  const Json j = to_json(c);
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.mot.cov, 10);
  EXPECT_EQ(back.location, LocationPolicy::random);
}

TEST(Config, PartialFileKeepsDefaults) {
  const RunConfig c = run_config_from_json(Json::parse(R"({"mot":{"cov":0.1}})"));
  EXPECT_EQ(c.mot.cov, 0.1);
  EXPECT_EQ(c.mot.hits_to_confirm, 3);
  EXPECT_EQ(c.attack.iterations, 1000);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"mots":{}})")), std::invalid_argument);
  EXPECT_ANY_THROW(run_config_from_json(Json::parse(R"({"mot":{"covv":1}})")));
  EXPECT_THROW(run_config_from_json(Json::parse("[1,2]")), std::invalid_argument);
}

TEST(Scenario, RoundTrip) {
  const Scenario sc = gen_scene(SceneSpec{}, 77);
  const fs::path dir = scratch("scene");
  save_scenario(sc, dir.string());
  const Scenario back = load_scenario((dir / "scenario.json").string());
  ASSERT_EQ(back.frames.size(), sc.frames.size());
  EXPECT_EQ(back.target, sc.target);
  EXPECT_EQ(back.region, sc.region);
  EXPECT_EQ(back.attack_start, sc.attack_start);
  EXPECT_EQ(back.attack_end, sc.attack_end);
  EXPECT_EQ(back.goal, sc.goal);
  EXPECT_EQ(back.direction.dx, sc.direction.dx);
  EXPECT_EQ(back.patch_h, sc.patch_h);
  EXPECT_EQ(back.seed, sc.seed);
  for (std::size_t f = 0; f < sc.frames.size(); ++f)
    for (std::size_t i = 0; i < sc.frames[f].data.size(); ++i) ASSERT_NEAR(back.frames[f].data[i], sc.frames[f].data[i], 0.5 / 255 + 1e-12);
  fs::remove_all(dir);
}

TEST(Scenario, BenchmarkRoundTrip) {
  const auto bench = make_benchmark(SceneSpec{}, 3, 2);
  const fs::path dir = scratch("bench");
  save_benchmark(bench, dir.string());
  const auto back = load_scenarios((dir / "benchmark.json").string());
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i].seed, bench[i].seed);
  EXPECT_EQ(load_scenarios((dir / "scenario_001" / "scenario.json").string()).size(), 1u);
  fs::remove_all(dir);
}

TEST(Scenario, MissingFileIsError) { EXPECT_ANY_THROW(load_scenario("/nonexistent/scenario.json")); }

TEST(Patch, SidecarRoundTrip) {
  Image px(3, 4);
  for (std::size_t i = 0; i < px.data.size(); ++i) px.data[i] = static_cast<double>(i) / static_cast<double>(px.data.size());
  PatchMeta m;
  m.offset_top = 9;
  m.offset_left = -2;
  m.height = 3;
  m.width = 4;
  m.window = PixelRect{40, 30, 3, 4};
  m.seed = 1ULL << 60;
  m.optimizer = "conditional";
  m.direction = "r2l";
  m.goal = "move-out";
  m.terminal = true;
  m.iterations = 980;
  std::vector<LossBreakdown> log(2);
  log[1].branch = Branch::regression;
  const fs::path dir = scratch("patch");
  save_patch(dir.string(), PatchSpec{px, 9, -2}, m, log);
  const LoadedPatch lp = load_patch(dir.string());
  EXPECT_EQ(lp.patch.top, 9);
  EXPECT_EQ(lp.patch.left, -2);
  EXPECT_EQ(to_json(lp.meta), to_json(m));
  for (std::size_t i = 0; i < px.data.size(); ++i) EXPECT_NEAR(lp.patch.pixels.data[i], px.data[i], 1e-7);
  const std::string csv = read_text((dir / "patch_loss.csv").string());
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,branch,L_adv,L_s,L_e,L_f,L_r,L_IOU,L_center,L_TV");
  EXPECT_NE(csv.find("\n1,regression,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "patch.ppm"));
  fs::remove_all(dir);
}

TEST(Patch, BadSidecarIsFormatError) {
  const fs::path dir = scratch("badpatch");
  fs::create_directories(dir);
  write_text((dir / "patch.json").string(), "{\"seed\": 1}\n");
  EXPECT_THROW(load_patch(dir.string()), FormatError);
  fs::remove_all(dir);
}

TEST(Report, EmptyMeanFramesIsNull) {
  const Json j = to_json(Aggregate{4, 0, 0.0, std::nullopt});
  EXPECT_TRUE(j.at("mean_frames").is_null());
  EvalRow r{"x", MotConfig{}, Aggregate{4, 0, 0.0, std::nullopt}};
  const std::string row = eval_row_csv(r);
  EXPECT_EQ(row.back(), '\n');
  EXPECT_EQ(row[row.size() - 2], ',');
}

TEST(Report, FormatIgnoresLocale) { EXPECT_EQ(fmt(0.25), "0.25"); }

TEST(TrackLog, HeaderAndRows) {
  MultiTracker mt(MotConfig{});
  std::vector<MotFrameResult> log{mt.step({Detection{BBox{0, 0, 10, 10}, 1}}), mt.step({})};
  const fs::path p = scratch("tracks.csv");
  write_track_log(p.string(), log);
  const std::string s = read_text(p.string());
  EXPECT_EQ(s.substr(0, s.find('\n')), "frame,track_id,status,cx,cy,w,h,v_cx,v_cy,matched_detection");
  EXPECT_NE(s.find("\n0,1,tentative,5,5,10,10,0,0,0\n"), std::string::npos);
  EXPECT_NE(s.find("\n1,1,tentative,"), std::string::npos);
  fs::remove(p);
}

TEST(Manifest, CarriesHashAndVersion) {
  Manifest m{"stage1", Json{{"k", 1}}, 7, Json::object(), Json::array({"out/a.csv"})};
  const Json j = to_json(m);
  EXPECT_EQ(j.at("config_hash"), config_hash(Json{{"k", 1}}));
  EXPECT_EQ(j.at("tool_version"), kToolVersion);
  EXPECT_FALSE(j.contains("timestamp"));
}
