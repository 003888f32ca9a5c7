#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "controlloc/io.hpp"

#ifndef CONTROLLOC_CLI
#error "CONTROLLOC_CLI must point at the controlloc executable"
#endif

using namespace controlloc;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "controlloc_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(CONTROLLOC_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string p(const std::string& rel) { return (kRoot / rel).string(); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    write_json(p("tiny.json"), Json::parse(R"({
      "train": {"epochs": 1}, "corpus_scenes": 3, "corpus_frames": 1,
      "stage1": {"iterations": 2}, "attack": {"eot": {"samples": 1}}})"));
    ASSERT_EQ(run("detector-train --config " + p("tiny.json") + " --seed 3 --out " + p("train")), 0);
    ASSERT_EQ(run("scene-gen --seed 5 --count 2 --out " + p("bench")), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, ParseErrorsAreValidationErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("scene-gen --bogus 1 --out " + p("x")), 2);
  EXPECT_EQ(run("attack-gen --optimizer adam --out " + p("x")), 2);
  EXPECT_EQ(run("scene-gen --direction up --out " + p("x")), 2);
  EXPECT_EQ(run("defense-eval --defense jpeg --out " + p("x")), 2);
}

TEST_F(Cli, MissingOrBadInputsAreValidationErrors) {
  EXPECT_EQ(run("attack-gen --weights " + p("nope.cldw") + " --scenario " + p("bench/benchmark.json") + " --out " + p("x")), 2);
  write_text(p("bad.cldw"), "not weights");
  EXPECT_EQ(run("attack-gen --weights " + p("bad.cldw") + " --scenario " + p("bench/benchmark.json") + " --out " + p("x")), 2);
  write_json(p("badcfg.json"), Json{{"mot", Json{{"covv", 1}}}});
  EXPECT_EQ(run("scene-gen --config " + p("badcfg.json") + " --out " + p("x")), 2);
  EXPECT_EQ(run("scene-gen --mot-h 0 --out " + p("x")), 2);
}

TEST_F(Cli, SceneGenIsDeterministic) {
  ASSERT_EQ(run("scene-gen --seed 5 --count 2 --out " + p("bench2")), 0);
  EXPECT_EQ(file_hash(p("bench/benchmark.json")), file_hash(p("bench2/benchmark.json")));
  EXPECT_EQ(file_hash(p("bench/scenario_001/frames/010.ppm")), file_hash(p("bench2/scenario_001/frames/010.ppm")));
  EXPECT_EQ(file_hash(p("bench/manifest.json")), file_hash(p("bench2/manifest.json")));
}

TEST_F(Cli, SceneGenHonoursGoalAndDirection) {
  ASSERT_EQ(run("scene-gen --seed 9 --goal move-out --direction r2l --out " + p("one")), 0);
  const Scenario sc = load_scenario(p("one/scenario.json"));
  EXPECT_EQ(sc.goal, AttackGoal::move_out);
  EXPECT_LT(sc.direction.dx, 0);
}

TEST_F(Cli, AttackGenTwiceGivesIdenticalPatches) {
  const std::string common = "attack-gen --config " + p("tiny.json") + " --weights " + p("train/weights.cldw") + " --scenario " +
                             p("bench/benchmark.json") + " --iters 4 --seed 7 --out ";
  ASSERT_EQ(run(common + p("gen1")), 0);
  ASSERT_EQ(run(common + p("gen2") + " --jobs 2"), 0);
  for (const char* f : {"scenario_000/patch.clim", "scenario_001/patch.clim", "scenario_000/patch.json", "scenario_001/patch_loss.csv"})
    EXPECT_EQ(file_hash(p(std::string("gen1/") + f)), file_hash(p(std::string("gen2/") + f))) << f;
  const LoadedPatch lp = load_patch(p("gen1/scenario_000"));
  EXPECT_EQ(lp.meta.iterations, 2);  // two of the four go to Stage I
  EXPECT_EQ(lp.meta.stage1_iterations, 2);
}

TEST_F(Cli, EvalReplaysPatchesAndChecksWeights) {
  const std::string base = " --config " + p("tiny.json") + " --scenario " + p("bench/benchmark.json") + " --seed 7";
  ASSERT_EQ(run("attack-gen" + base + " --weights " + p("train/weights.cldw") + " --iters 4 --out " + p("gen3")), 0);
  ASSERT_EQ(run("attack-eval" + base + " --weights " + p("train/weights.cldw") + " --patches " + p("gen3") + " --out " + p("eval")), 0);
  const Json s = read_json(p("eval/summary.json"));
  ASSERT_EQ(s.at("rows").size(), 2u);
  EXPECT_EQ(s.at("rows")[0].at("label"), "benign");
  EXPECT_EQ(s.at("rows")[0].at("successes"), 0);
  EXPECT_EQ(s.at("config_hash"), read_json(p("eval/manifest.json")).at("config_hash"));
  // different weights: the stored hash no longer matches
  ASSERT_EQ(run("detector-train --config " + p("tiny.json") + " --seed 4 --out " + p("train4")), 0);
  EXPECT_EQ(run("attack-eval" + base + " --weights " + p("train4/weights.cldw") + " --patches " + p("gen3") + " --out " + p("eval4")), 2);
}

TEST_F(Cli, MaxcapAndReport) {
  ASSERT_EQ(run("baseline-maxcap --scenario " + p("bench/benchmark.json") + " --out " + p("maxcap")), 0);
  const Json s = read_json(p("maxcap/summary.json"));
  EXPECT_EQ(s.at("rows")[0].at("asr"), 1.0);
  ASSERT_EQ(run("report " + p("maxcap") + " --out " + p("report")), 0);
  const std::string csv = read_text(p("report/report.csv"));
  EXPECT_NE(csv.find("maxcap,baseline-maxcap,maxcap,2,2,1,"), std::string::npos);
  // tampered summary
  Json bad = s;
  bad["config_hash"] = "0000000000000000";
  write_json(p("maxcap/summary.json"), bad);
  EXPECT_EQ(run("report " + p("maxcap") + " --out " + p("report2")), 2);
}

TEST_F(Cli, DetectorCheckWritesReport) {
  EXPECT_EQ(run("detector-check --weights " + p("train/weights.cldw") + " --seed 2 --out " + p("check")), 0);
  EXPECT_TRUE(fs::exists(p("check/grad_check.csv")));
}

TEST_F(Cli, UnwritableOutputIsRuntimeFailure) {
  write_text(p("plainfile"), "x");
  EXPECT_EQ(run("scene-gen --out " + p("plainfile/sub")), 3);
}
