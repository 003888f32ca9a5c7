// controlloc: command-line driver for detector training, scene generation,
// patch generation and the evaluation baselines.
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "controlloc/gradient.hpp"
#include "controlloc/io.hpp"
#include "controlloc/metrics.hpp"

namespace fs = std::filesystem;
using namespace controlloc;

namespace {

constexpr int kExitOk = 0, kExitValidation = 2, kExitRuntime = 3;

// Bad input detected before any real work starts.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Flags {
  std::string config, out = "out", weights, scenario, patches;
  std::uint64_t seed = 1;
  std::optional<int> iters, mot_h, mot_r, count;
  std::optional<double> eta, mot_cov, t_iou, strength;
  std::optional<std::string> optimizer, direction, goal, defense;
  int jobs = 1;
  std::vector<std::string> inputs;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string("missing required --") + what);
  if (!fs::is_regular_file(path)) throw ValidationError(std::string(what) + " file not found: " + path);
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    require_file(f.config, "config");
    c = run_config_from_json(read_json(f.config));
  }
  if (f.iters) {
    c.budget = *f.iters;
    c.attack.iterations = *f.iters;
  }
  if (f.optimizer) c.attack.optimizer = optimizer_from_string(*f.optimizer);
  if (f.eta) c.attack.eta = *f.eta;
  if (f.mot_cov) c.mot.cov = *f.mot_cov;
  if (f.mot_h) c.mot.hits_to_confirm = *f.mot_h;
  if (f.mot_r) c.mot.max_misses = *f.mot_r;
  if (f.t_iou) {
    c.mot.t_iou = *f.t_iou;
    c.attack.t_iou = *f.t_iou;
  }
  c.attack.seed = f.seed;
  c.train.seed = f.seed;
  c.validate();
  return c;
}

// Output bookkeeping shared by every command.
class Run {
 public:
  Run(std::string command, const Flags& f, RunConfig cfg) : flags_(f), cfg_(std::move(cfg)) {
    manifest_.command = std::move(command);
    manifest_.seed = f.seed;
    manifest_.config = to_json(cfg_);
    fs::create_directories(f.out);
  }
  const RunConfig& config() const { return cfg_; }
  std::string hash() const { return config_hash(manifest_.config); }
  void extra(const std::string& key, const Json& v) { manifest_.config[key] = v; }
  void input(const std::string& role, const std::string& path) {
    manifest_.inputs[role] = Json{{"path", path}, {"hash", file_hash(path)}};
  }
  std::string path(const std::string& rel) {
    const fs::path p = fs::path(flags_.out) / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    manifest_.outputs.push_back(rel);
    return p.string();
  }
  void finish() {
    manifest_.outputs.push_back("manifest.json");
    write_json((fs::path(flags_.out) / "manifest.json").string(), to_json(manifest_));
  }

 private:
  const Flags& flags_;
  RunConfig cfg_;
  Manifest manifest_;
};

Detector load_detector(const Flags& f, Run& run) {
  require_file(f.weights, "weights");
  run.input("weights", f.weights);
  const LoadedDetector ld = load_weights(f.weights);
  return Detector(ld.config, ld.weights);
}

std::vector<Scenario> load_input_scenarios(const Flags& f, Run& run) {
  require_file(f.scenario, "scenario");
  run.input("scenario", f.scenario);
  return load_scenarios(f.scenario);
}

std::string scenario_dir(std::size_t i) {
  std::ostringstream os;
  os << "scenario_" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

GeneratorSpec generator(const RunConfig& c, LocationPolicy location) {
  GeneratorSpec g;
  g.attack = c.attack;
  g.stage1 = c.stage1;
  g.location = location;
  g.budget = c.budget;
  return g;
}

PatchMeta patch_meta(const ScenarioAttack& a, const Scenario& sc, const RunConfig& c, const std::string& cfg_hash,
                     const std::string& weights_hash) {
  PatchMeta m;
  m.offset_top = a.result.patch.top;
  m.offset_left = a.result.patch.left;
  m.height = a.result.patch.pixels.height;
  m.width = a.result.patch.pixels.width;
  m.window = a.window;
  m.seed = derive_seed(c.attack.seed, sc.seed);
  m.scenario_seed = sc.seed;
  m.config_hash = cfg_hash;
  m.weights_hash = weights_hash;
  m.optimizer = to_string(c.attack.optimizer);
  m.eta = c.attack.eta;
  m.direction = direction_name(sc.direction);
  m.goal = to_string(sc.goal);
  m.terminal = a.result.terminal;
  m.iterations = a.result.iterations;
  m.stage1_iterations = a.stage1_iterations;
  return m;
}

// Generates one patch per scenario and writes the patch artifacts under `prefix`.
std::vector<ScenarioAttack> generate_all(const Detector& det, const std::vector<Scenario>& bench, const GeneratorSpec& g,
                                         const RunConfig& c, Run& run, const std::string& weights_hash, const std::string& prefix,
                                         int jobs) {
  const std::vector<ScenarioAttack> att =
      parallel_map<ScenarioAttack>(bench.size(), jobs, [&](std::size_t i) { return attack_scenario(det, bench[i], g); });
  RunConfig rc = c;
  rc.attack = g.attack;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const std::string dir = prefix + scenario_dir(i) + "/";
    const PatchMeta meta = patch_meta(att[i], bench[i], rc, run.hash(), weights_hash);
    save_patch(fs::path(run.path(dir + "patch.json")).parent_path().string(), att[i].result.patch, meta, att[i].result.log);
    for (const char* n : {"patch.clim", "patch.ppm", "patch_loss.csv"}) run.path(dir + n);
    if (att[i].result.disappearance) {
      save_patch(fs::path(run.path(dir + "disappearance.json")).parent_path().string(), *att[i].result.disappearance, meta,
                 att[i].result.disappearance_log, "disappearance");
      for (const char* n : {"disappearance.clim", "disappearance.ppm", "disappearance_loss.csv"}) run.path(dir + n);
    }
  }
  return att;
}

// Patches from an earlier attack-gen run; weights and scenario must match.
std::vector<PatchSpec> load_patches(const std::string& dir, const std::vector<Scenario>& bench, const std::string& weights_hash,
                                    Run& run) {
  if (!fs::is_directory(dir)) throw ValidationError("patch directory not found: " + dir);
  std::vector<PatchSpec> out;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const std::string sub = (fs::path(dir) / scenario_dir(i)).string();
    require_file((fs::path(sub) / "patch.json").string(), "patches");
    const LoadedPatch lp = load_patch(sub);
    if (lp.meta.weights_hash != weights_hash)
      throw ValidationError(sub + ": patch was generated under different detector weights (config hash " + lp.meta.config_hash + ")");
    if (lp.meta.scenario_seed != bench[i].seed) throw ValidationError(sub + ": patch belongs to a different scenario");
    if (lp.meta.direction != direction_name(bench[i].direction)) throw ValidationError(sub + ": patch direction mismatch");
    run.input("patch_" + std::to_string(i), (fs::path(sub) / "patch.clim").string());
    out.push_back(lp.patch);
  }
  return out;
}

struct EvalOutput {
  std::vector<EvalRow> rows;
  std::vector<OutcomeRow> outcomes;
};

void write_eval(Run& run, const EvalOutput& e, const Json& extra = Json::object()) {
  std::string csv = kEvalHeader;
  Json rows = Json::array();
  for (const EvalRow& r : e.rows) {
    csv += eval_row_csv(r);
    Json j = to_json(r.agg);
    j["label"] = r.label;
    j["mot"] = to_json(r.mot);
    rows.push_back(j);
  }
  write_text(run.path("eval.csv"), csv);
  std::string oc = kOutcomeHeader;
  for (const OutcomeRow& r : e.outcomes) oc += outcome_row_csv(r);
  write_text(run.path("outcomes.csv"), oc);
  Json summary{{"config_hash", run.hash()}, {"rows", rows}};
  for (const auto& [k, v] : extra.items()) summary[k] = v;
  write_json(run.path("summary.json"), summary);
}

OutcomeRow outcome_row(const std::string& label, std::size_t i, const Scenario& sc, const Outcome& o,
                       std::optional<bool> terminal = std::nullopt) {
  return OutcomeRow{label, static_cast<int>(i), sc.seed, to_string(sc.goal), direction_name(sc.direction), o, terminal};
}

// Replays patches over the benchmark; appends one row per label.
void replay(const std::string& label, const std::vector<Scenario>& bench, const std::vector<PatchSpec>& patches,
            const std::vector<std::optional<bool>>& terminal, const Detector& det, const RunConfig& c, Run& run, EvalOutput& e,
            int jobs, bool write_tracks) {
  RunOptions opt;
  opt.horizon = c.horizon;
  const std::vector<Outcome> outs = parallel_map<Outcome>(
      bench.size(), jobs, [&](std::size_t i) { return run_attack(bench[i], patches[i], bench[i].direction, det, c.mot, opt); });
  for (std::size_t i = 0; i < bench.size(); ++i) {
    e.outcomes.push_back(outcome_row(label, i, bench[i], outs[i], terminal[i]));
    if (write_tracks) write_track_log(run.path("tracks/" + label + "_" + scenario_dir(i) + ".csv"), outs[i].track_log);
  }
  e.rows.push_back({label, c.mot, aggregate(outs)});
}

void benign_rows(const std::vector<Scenario>& bench, const Detector& det, const RunConfig& c, Run& run, EvalOutput& e, int jobs) {
  RunOptions opt;
  opt.horizon = c.horizon;
  const std::vector<Outcome> outs =
      parallel_map<Outcome>(bench.size(), jobs, [&](std::size_t i) { return run_benign(bench[i], det, c.mot, opt); });
  for (std::size_t i = 0; i < bench.size(); ++i) {
    e.outcomes.push_back(outcome_row("benign", i, bench[i], outs[i]));
    write_track_log(run.path("tracks/benign_" + scenario_dir(i) + ".csv"), outs[i].track_log);
  }
  e.rows.push_back({"benign", c.mot, aggregate(outs)});
}

std::vector<PatchSpec> patches_of(const std::vector<ScenarioAttack>& att) {
  std::vector<PatchSpec> out;
  for (const ScenarioAttack& a : att) out.push_back(a.result.patch);
  return out;
}
std::vector<std::optional<bool>> terminals_of(const std::vector<ScenarioAttack>& att) {
  std::vector<std::optional<bool>> out;
  for (const ScenarioAttack& a : att) out.push_back(a.result.terminal);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_detector_train(const Flags& f) {
  Run run("detector-train", f, resolve(f));
  const RunConfig& c = run.config();
  const std::vector<LabeledImage> corpus = make_corpus(c.scene, c.corpus_scenes, c.corpus_frames, f.seed);
  const DetectorConfig dc;
  TrainReport rep;
  const DetectorWeights w = train(corpus, dc, c.train, &rep);
  const std::string wpath = run.path("weights.cldw");
  save_weights(wpath, dc, w);
  std::string log = "epoch,loss\n";
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) log += std::to_string(e) + "," + fmt(rep.epoch_loss[e], 9) + "\n";
  write_text(run.path("train_log.csv"), log);
  const Detector det(dc, w);
  const double ap = detector_ap(det, corpus);
  write_json(run.path("train.json"), Json{{"ap50_train", ap}, {"images", corpus.size()}, {"weights_hash", file_hash(wpath)},
                                          {"config_hash", run.hash()}});
  run.finish();
  std::cout << "AP@0.5 (training corpus) " << fmt(ap, 4) << "\n";
  return kExitOk;
}

int cmd_detector_check(const Flags& f) {
  Run run("detector-check", f, resolve(f));
  const RunConfig& c = run.config();
  const Detector det = load_detector(f, run);
  const Scenario sc = gen_scene(c.scene, f.seed);
  const std::size_t t = static_cast<std::size_t>(sc.attack_start);
  std::string csv = "loss,checked,skipped,flat,max_rel_error,pass\n";
  Json checks = Json::array();
  bool all = true;
  for (const NamedLoss& n : attack_losses(det, sc.frames[t], sc.target[t], sc.direction, c.attack.t_iou, c.attack.hyper)) {
    const GradCheckReport r = grad_check(det, sc.frames[t], n.spec, 64, 1e-3, 1e-3, f.seed);
    all = all && r.pass && r.checked >= 64;
    csv += n.name + "," + std::to_string(r.checked) + "," + std::to_string(r.skipped) + "," + (r.flat ? "1" : "0") + "," + fmt(r.max_rel_error) + "," +
           (r.pass ? "1" : "0") + "\n";
    checks.push_back(Json{{"loss", n.name}, {"checked", r.checked}, {"max_rel_error", r.max_rel_error}, {"pass", r.pass}});
  }
  const std::vector<LabeledImage> held_out = make_corpus(c.scene, 30, 4, derive_seed(f.seed, 0x7E57));
  const double ap = detector_ap(det, held_out);
  write_text(run.path("grad_check.csv"), csv);
  write_json(run.path("detector_check.json"), Json{{"grad_checks", checks}, {"ap50_held_out", ap}, {"pass", all}});
  run.finish();
  std::cout << "gradient checks " << (all ? "pass" : "FAIL") << ", AP@0.5 (held out) " << fmt(ap, 4) << "\n";
  if (!all) throw std::runtime_error("gradient check failed");
  return kExitOk;
}

int cmd_scene_gen(const Flags& f) {
  Run run("scene-gen", f, resolve(f));
  const RunConfig& c = run.config();
  const int count = f.count.value_or(1);
  if (count < 1) throw ValidationError("--count must be >= 1");
  std::optional<AttackGoal> goal;
  if (f.goal) goal = goal_from_string(*f.goal);
  std::optional<int> sign;
  if (f.direction) sign = *f.direction == "l2r" ? 1 : -1;
  run.extra("count", count);
  if (goal) run.extra("goal", to_string(*goal));
  if (f.direction) run.extra("direction", *f.direction);
  if (count == 1) {
    const Scenario sc = gen_scene(c.scene, f.seed, goal ? &*goal : nullptr, sign ? &*sign : nullptr);
    save_scenario(sc, f.out);
    run.path("scenario.json");
  } else {
    std::vector<Scenario> bench;
    for (int i = 0; i < count; ++i) {
      // same seeds as make_benchmark
      const std::uint64_t s = derive_seed(f.seed, 0xBE7C, static_cast<std::uint64_t>(i)) * 2 + static_cast<std::uint64_t>(i % 2);
      bench.push_back(gen_scene(c.scene, s, goal ? &*goal : nullptr, sign ? &*sign : nullptr));
    }
    save_benchmark(bench, f.out);
    run.path("benchmark.json");
    for (int i = 0; i < count; ++i) run.path(scenario_dir(static_cast<std::size_t>(i)) + "/scenario.json");
  }
  run.finish();
  return kExitOk;
}

int cmd_stage1(const Flags& f) {
  Run run("stage1", f, resolve(f));
  const RunConfig& c = run.config();
  const Detector det = load_detector(f, run);
  const std::vector<Scenario> bench = load_input_scenarios(f, run);
  GeneratorSpec g = generator(c, LocationPolicy::stage1);
  struct Pick {
    PixelRect window;
    Stage1Result diag;
  };
  const std::vector<Pick> picks = parallel_map<Pick>(bench.size(), f.jobs, [&](std::size_t i) {
    Pick p;
    p.window = choose_location(det, bench[i], g, derive_seed(c.attack.seed, bench[i].seed), &p.diag);
    return p;
  });
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const std::string d = scenario_dir(i) + "/";
    write_ppm(run.path(d + "M.ppm"), plane_to_image(picks[i].diag.M));
    write_ppm(run.path(d + "Mprime.ppm"), plane_to_image(picks[i].diag.Mprime));
    std::string log = "iteration,loss\n";
    for (std::size_t k = 0; k < picks[i].diag.loss_log.size(); ++k) log += std::to_string(k) + "," + fmt(picks[i].diag.loss_log[k], 9) + "\n";
    write_text(run.path(d + "stage1_loss.csv"), log);
    write_json(run.path(d + "stage1.json"), Json{{"window", to_json(picks[i].window)},
                                                 {"frame", bench[i].attack_start},
                                                 {"scenario_seed", bench[i].seed},
                                                 {"config_hash", run.hash()}});
  }
  run.finish();
  return kExitOk;
}

int cmd_attack_gen(const Flags& f) {
  Run run("attack-gen", f, resolve(f));
  const RunConfig& c = run.config();
  const Detector det = load_detector(f, run);
  const std::vector<Scenario> bench = load_input_scenarios(f, run);
  generate_all(det, bench, generator(c, c.location), c, run, file_hash(f.weights), "", f.jobs);
  run.finish();
  return kExitOk;
}

int cmd_attack_eval(const Flags& f) {
  Run run("attack-eval", f, resolve(f));
  const RunConfig& c = run.config();
  const Detector det = load_detector(f, run);
  const std::vector<Scenario> bench = load_input_scenarios(f, run);
  const std::string wh = file_hash(f.weights);
  EvalOutput e;
  benign_rows(bench, det, c, run, e, f.jobs);
  if (!f.patches.empty()) {
    const std::vector<PatchSpec> patches = load_patches(f.patches, bench, wh, run);
    replay("patch", bench, patches, std::vector<std::optional<bool>>(bench.size()), det, c, run, e, f.jobs, true);
  } else {
    const std::vector<ScenarioAttack> att = generate_all(det, bench, generator(c, c.location), c, run, wh, "patches/", f.jobs);
    replay(to_string(c.attack.optimizer), bench, patches_of(att), terminals_of(att), det, c, run, e, f.jobs, true);
  }
  write_eval(run, e);
  run.finish();
  for (const EvalRow& r : e.rows) std::cout << r.label << " ASR " << fmt(100 * r.agg.asr, 4) << "%\n";
  return kExitOk;
}

int cmd_baseline_slrm(const Flags& f) {
  Run run("baseline-slrm", f, resolve(f));
  const RunConfig& c = run.config();
  const Detector det = load_detector(f, run);
  const std::vector<Scenario> bench = load_input_scenarios(f, run);
  const std::string wh = file_hash(f.weights);
  const std::vector<double> etas = f.eta ? std::vector<double>{*f.eta} : std::vector<double>{0.1, 1.0, 10.0};
  run.extra("etas", etas);
  EvalOutput e;
  for (double eta : etas) {
    GeneratorSpec g = generator(c, c.location);
    g.attack.optimizer = Optimizer::slrm;
    g.attack.eta = eta;
    const std::string label = "slrm_eta_" + fmt(eta);
    const std::vector<ScenarioAttack> att = generate_all(det, bench, g, c, run, wh, label + "/", f.jobs);
    replay(label, bench, patches_of(att), terminals_of(att), det, c, run, e, f.jobs, false);
  }
  write_eval(run, e);
  run.finish();
  return kExitOk;
}

int cmd_baseline_maxcap(const Flags& f) {
  Run run("baseline-maxcap", f, resolve(f));
  const RunConfig& c = run.config();
  const std::vector<Scenario> bench = load_input_scenarios(f, run);
  const std::vector<Outcome> outs = parallel_map<Outcome>(
      bench.size(), f.jobs, [&](std::size_t i) { return max_capability(bench[i], c.mot, -1, c.horizon); });
  EvalOutput e;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    e.outcomes.push_back(outcome_row("maxcap", i, bench[i], outs[i]));
    write_track_log(run.path("tracks/maxcap_" + scenario_dir(i) + ".csv"), outs[i].track_log);
  }
  e.rows.push_back({"maxcap", c.mot, aggregate(outs)});
  write_eval(run, e);
  run.finish();
  return kExitOk;
}

int cmd_baseline_randloc(const Flags& f) {
  Run run("baseline-randloc", f, resolve(f));
  const RunConfig& c = run.config();
  const Detector det = load_detector(f, run);
  const std::vector<Scenario> bench = load_input_scenarios(f, run);
  const std::vector<ScenarioAttack> att =
      generate_all(det, bench, generator(c, LocationPolicy::random), c, run, file_hash(f.weights), "", f.jobs);
  EvalOutput e;
  replay("random_location", bench, patches_of(att), terminals_of(att), det, c, run, e, f.jobs, true);
  write_eval(run, e);
  run.finish();
  return kExitOk;
}

int cmd_defense_eval(const Flags& f) {
  Run run("defense-eval", f, resolve(f));
  const RunConfig& c = run.config();
  const Detector det = load_detector(f, run);
  const std::vector<Scenario> bench = load_input_scenarios(f, run);
  const std::string wh = file_hash(f.weights);
  std::vector<DefenseSetting> settings{make_defense("none", 0)};
  if (f.defense) {
    if (*f.defense != "none") {
      if (!f.strength) throw ValidationError("--defense needs --strength");
      settings.push_back(make_defense(*f.defense, *f.strength, f.seed));
    }
  } else {
    settings.push_back(make_defense("bitdepth", 8));
    settings.push_back(make_defense("bitdepth", 4));
    settings.push_back(make_defense("gauss", 0.02, f.seed));
    settings.push_back(make_defense("gauss", 0.05, f.seed));
    settings.push_back(make_defense("median", 3));
    settings.push_back(make_defense("median", 5));
    settings.push_back(make_defense("median", 9));
  }
  std::vector<PatchSpec> patches;
  if (!f.patches.empty()) patches = load_patches(f.patches, bench, wh, run);
  else patches = patches_of(generate_all(det, bench, generator(c, c.location), c, run, wh, "patches/", f.jobs));
  const std::vector<DefenseRow> rows = defense_eval(det, bench, patches, settings, c.mot);
  std::string csv = kDefenseHeader;
  Json js = Json::array();
  for (const DefenseRow& r : rows) {
    csv += defense_row_csv(r);
    Json j = to_json(r.agg);
    j["label"] = r.defense + "_" + fmt(r.strength);
    j["defense"] = r.defense;
    j["strength"] = r.strength;
    j["ap50"] = r.ap;
    js.push_back(j);
  }
  write_text(run.path("defense.csv"), csv);
  write_json(run.path("summary.json"), Json{{"config_hash", run.hash()}, {"rows", js}});
  run.finish();
  return kExitOk;
}

// Merges summary.json files from earlier runs into one table.
int cmd_report(const Flags& f) {
  if (f.inputs.empty()) throw ValidationError("report needs at least one run directory");
  Run run("report", f, resolve(f));
  std::string csv = "source,command,label,scenarios,successes,asr,mean_frames,ap50\n";
  Json all = Json::array();
  for (const std::string& dir : f.inputs) {
    const std::string sp = (fs::path(dir) / "summary.json").string();
    const std::string mp = (fs::path(dir) / "manifest.json").string();
    require_file(sp, "summary");
    require_file(mp, "manifest");
    run.input(dir, sp);
    const Json s = read_json(sp), m = read_json(mp);
    if (s.at("config_hash") != m.at("config_hash")) throw ValidationError(dir + ": summary and manifest config hashes differ");
    const std::string source = fs::path(dir).filename().string();
    for (const Json& r : s.at("rows")) {
      const auto num = [&](const char* k) { return r.contains(k) && !r.at(k).is_null() ? fmt(r.at(k).get<double>()) : std::string(); };
      csv += source + "," + m.at("command").get<std::string>() + "," + r.at("label").get<std::string>() + "," +
             std::to_string(r.at("scenarios").get<int>()) + "," + std::to_string(r.at("successes").get<int>()) + "," + num("asr") +
             "," + num("mean_frames") + "," + num("ap50") + "\n";
      Json row = r;
      row["source"] = source;
      row["command"] = m.at("command");
      all.push_back(row);
    }
  }
  write_text(run.path("report.csv"), csv);
  write_json(run.path("report.json"), Json{{"rows", all}});
  run.finish();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"controlloc: tracker-hijacking patch experiments on a toy detector"};
  app.require_subcommand(1);
  Flags f;

  auto add = [&](const std::string& name, const std::string& desc, std::initializer_list<std::string> opts) {
    CLI::App* s = app.add_subcommand(name, desc);
    s->add_option("--config", f.config, "JSON config file");
    s->add_option("--seed", f.seed, "seed for all randomness");
    s->add_option("--out", f.out, "output directory");
    s->add_option("--jobs", f.jobs, "parallel scenarios")->check(CLI::PositiveNumber);
    for (const std::string& o : opts) {
      if (o == "weights") s->add_option("--weights", f.weights, "detector weights (.cldw)");
      else if (o == "scenario") s->add_option("--scenario", f.scenario, "scenario or benchmark JSON");
      else if (o == "iters") s->add_option("--iters", f.iters, "iteration budget")->check(CLI::PositiveNumber);
      else if (o == "optimizer") s->add_option("--optimizer", f.optimizer)->check(CLI::IsMember({"conditional", "slrm"}));
      else if (o == "eta") s->add_option("--eta", f.eta, "SLRM weight")->check(CLI::NonNegativeNumber);
      else if (o == "direction") s->add_option("--direction", f.direction)->check(CLI::IsMember({"l2r", "r2l"}));
      else if (o == "goal") s->add_option("--goal", f.goal)->check(CLI::IsMember({"move-in", "move-out"}));
      else if (o == "mot") {
        s->add_option("--mot-cov", f.mot_cov, "measurement noise scale");
        s->add_option("--mot-h", f.mot_h, "hits to confirm");
        s->add_option("--mot-r", f.mot_r, "misses before deletion");
      } else if (o == "t-iou") s->add_option("--t-iou", f.t_iou, "association gate");
      else if (o == "defense") {
        s->add_option("--defense", f.defense)->check(CLI::IsMember({"none", "bitdepth", "gauss", "median"}));
        s->add_option("--strength", f.strength, "bits, noise std or kernel size");
      } else if (o == "patches") s->add_option("--patches", f.patches, "attack-gen output directory");
      else if (o == "count") s->add_option("--count", f.count, "number of scenarios");
      else if (o == "inputs") s->add_option("runs", f.inputs, "run directories")->required();
    }
    return s;
  };

  std::map<std::string, int (*)(const Flags&)> commands{
      {"detector-train", cmd_detector_train}, {"detector-check", cmd_detector_check}, {"scene-gen", cmd_scene_gen},
      {"stage1", cmd_stage1},                 {"attack-gen", cmd_attack_gen},         {"attack-eval", cmd_attack_eval},
      {"baseline-slrm", cmd_baseline_slrm},   {"baseline-maxcap", cmd_baseline_maxcap}, {"baseline-randloc", cmd_baseline_randloc},
      {"defense-eval", cmd_defense_eval},     {"report", cmd_report}};

  add("detector-train", "train the detector on the synthetic corpus", {});
  add("detector-check", "gradient checks and held-out AP", {"weights", "t-iou"});
  add("scene-gen", "generate a scenario or a benchmark", {"direction", "goal", "count"});
  add("stage1", "patch location preselection", {"weights", "scenario", "t-iou"});
  add("attack-gen", "generate hijacking patches", {"weights", "scenario", "iters", "optimizer", "eta", "t-iou"});
  add("attack-eval", "run the tracking pipeline with patches", {"weights", "scenario", "iters", "optimizer", "eta", "mot", "t-iou", "patches"});
  add("baseline-slrm", "fixed-weight loss baseline", {"weights", "scenario", "iters", "eta", "mot", "t-iou"});
  add("baseline-maxcap", "maximum attack capability", {"scenario", "mot", "t-iou"});
  add("baseline-randloc", "random patch location baseline", {"weights", "scenario", "iters", "optimizer", "eta", "mot", "t-iou"});
  add("defense-eval", "input-transformation defenses", {"weights", "scenario", "iters", "optimizer", "eta", "mot", "t-iou", "defense", "patches"});
  add("report", "merge run summaries", {"inputs"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }
  try {
    for (CLI::App* s : app.get_subcommands()) return commands.at(s->get_name())(f);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
