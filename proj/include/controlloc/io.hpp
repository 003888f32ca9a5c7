// io.hpp: JSON configs, scenario files, patch sidecars, report tables and run manifests
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "controlloc/attack.hpp"
#include "controlloc/harness.hpp"
#include "controlloc/mot.hpp"
#include "controlloc/scene.hpp"
#include "controlloc/stage1.hpp"
#include "controlloc/train.hpp"

namespace controlloc {

using Json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Keys are sorted by the json object type, so dump() is canonical.
inline std::string config_hash(const Json& j) { return hex64(fnv1a(j.dump())); }

inline std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a(read_text(path))); }

inline Json read_json(const std::string& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// Fixed-precision number formatting for reports (locale independent, stable across runs).
inline std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Geometry and config <-> JSON

inline Json to_json(const BBox& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }
inline BBox bbox_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [x1, y1, x2, y2]");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}
inline Json to_json(const PixelRect& r) { return Json{{"top", r.top}, {"left", r.left}, {"height", r.height}, {"width", r.width}}; }
inline PixelRect rect_from_json(const Json& j) {
  return PixelRect{j.at("top").get<int>(), j.at("left").get<int>(), j.at("height").get<int>(), j.at("width").get<int>()};
}

namespace detail {
// Overwrites `v` with j[key] when present.
template <typename T>
void take(const Json& j, const char* key, T& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}
}  // namespace detail

inline Json to_json(const SceneSpec& s) {
  return Json{{"frame_height", s.frame_height}, {"frame_width", s.frame_width}, {"frames", s.frames},
              {"attack_start", s.attack_start}, {"attack_length", s.attack_length}, {"target_min_w", s.target_min_w},
              {"target_max_w", s.target_max_w}, {"target_min_h", s.target_min_h}, {"target_max_h", s.target_max_h},
              {"max_speed", s.max_speed}, {"distractors", s.distractors}, {"patch_area_ratio", s.patch_area_ratio},
              {"step", s.step}};
}
inline void from_json_into(const Json& j, SceneSpec& s) {
  using detail::take;
  take(j, "frame_height", s.frame_height);
  take(j, "frame_width", s.frame_width);
  take(j, "frames", s.frames);
  take(j, "attack_start", s.attack_start);
  take(j, "attack_length", s.attack_length);
  take(j, "target_min_w", s.target_min_w);
  take(j, "target_max_w", s.target_max_w);
  take(j, "target_min_h", s.target_min_h);
  take(j, "target_max_h", s.target_max_h);
  take(j, "max_speed", s.max_speed);
  take(j, "distractors", s.distractors);
  take(j, "patch_area_ratio", s.patch_area_ratio);
  take(j, "step", s.step);
}

inline Json to_json(const MotConfig& m) {
  return Json{{"t_iou", m.t_iou}, {"hits_to_confirm", m.hits_to_confirm}, {"max_misses", m.max_misses}, {"cov", m.cov},
              {"association", m.association}};
}
inline void from_json_into(const Json& j, MotConfig& m) {
  using detail::take;
  take(j, "t_iou", m.t_iou);
  take(j, "hits_to_confirm", m.hits_to_confirm);
  take(j, "max_misses", m.max_misses);
  take(j, "cov", m.cov);
  take(j, "association", m.association);
}

inline Json to_json(const AdamParams& a) { return Json{{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}}; }
inline void from_json_into(const Json& j, AdamParams& a) {
  using detail::take;
  take(j, "lr", a.lr);
  take(j, "beta1", a.beta1);
  take(j, "beta2", a.beta2);
  take(j, "eps", a.eps);
}

inline Json to_json(const LossHyper& h) {
  return Json{{"mu1", h.mu1}, {"beta", h.beta}, {"mu2", h.mu2}, {"t_conf", h.t_conf}, {"iou_floor", h.iou_floor}};
}
inline void from_json_into(const Json& j, LossHyper& h) {
  using detail::take;
  take(j, "mu1", h.mu1);
  take(j, "beta", h.beta);
  take(j, "mu2", h.mu2);
  take(j, "t_conf", h.t_conf);
  take(j, "iou_floor", h.iou_floor);
}

inline Json to_json(const EotParams& e) {
  return Json{{"translate_px", e.translate_px}, {"rotate_deg", e.rotate_deg}, {"brightness", e.brightness},
              {"contrast_lo", e.contrast_lo}, {"contrast_hi", e.contrast_hi}, {"noise_std", e.noise_std},
              {"samples", e.samples}};
}
inline void from_json_into(const Json& j, EotParams& e) {
  using detail::take;
  take(j, "translate_px", e.translate_px);
  take(j, "rotate_deg", e.rotate_deg);
  take(j, "brightness", e.brightness);
  take(j, "contrast_lo", e.contrast_lo);
  take(j, "contrast_hi", e.contrast_hi);
  take(j, "noise_std", e.noise_std);
  take(j, "samples", e.samples);
}

inline const char* to_string(TargetMode m) { return m == TargetMode::literal ? "literal" : "last-above-threshold"; }
inline TargetMode target_mode_from_string(const std::string& s) {
  if (s == "literal") return TargetMode::literal;
  if (s == "last-above-threshold") return TargetMode::last_above_threshold;
  throw std::invalid_argument("unknown target mode: " + s);
}

// Seed, patch size and offsets are per-run and stay out of the config object.
inline Json to_json(const AttackConfig& a) {
  return Json{{"iterations", a.iterations}, {"optimizer", to_string(a.optimizer)}, {"eta", a.eta}, {"adam", to_json(a.adam)},
              {"hyper", to_json(a.hyper)}, {"eot", to_json(a.eot)}, {"dual", a.dual}, {"random_init", a.random_init},
              {"t_iou", a.t_iou}, {"target_mode", to_string(a.target_mode)}, {"k_s", a.k_s}};
}
inline void from_json_into(const Json& j, AttackConfig& a) {
  using detail::take;
  take(j, "iterations", a.iterations);
  if (j.contains("optimizer")) a.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  take(j, "eta", a.eta);
  if (j.contains("adam")) from_json_into(j.at("adam"), a.adam);
  if (j.contains("hyper")) from_json_into(j.at("hyper"), a.hyper);
  if (j.contains("eot")) from_json_into(j.at("eot"), a.eot);
  take(j, "dual", a.dual);
  take(j, "random_init", a.random_init);
  take(j, "t_iou", a.t_iou);
  if (j.contains("target_mode")) a.target_mode = target_mode_from_string(j.at("target_mode").get<std::string>());
  take(j, "k_s", a.k_s);
}

inline Json to_json(const Stage1Config& s) {
  return Json{{"alpha", s.alpha}, {"gamma", s.gamma}, {"s", s.s}, {"iterations", s.iterations},
              {"adam_p", to_json(s.adam_p)}, {"adam_m", to_json(s.adam_m)}, {"hyper", to_json(s.hyper)}};
}
inline void from_json_into(const Json& j, Stage1Config& s) {
  using detail::take;
  take(j, "alpha", s.alpha);
  take(j, "gamma", s.gamma);
  take(j, "s", s.s);
  take(j, "iterations", s.iterations);
  if (j.contains("adam_p")) from_json_into(j.at("adam_p"), s.adam_p);
  if (j.contains("adam_m")) from_json_into(j.at("adam_m"), s.adam_m);
  if (j.contains("hyper")) from_json_into(j.at("hyper"), s.hyper);
}

inline Json to_json(const TrainConfig& t) {
  return Json{{"epochs", t.epochs}, {"batch", t.batch}, {"lr", t.lr}, {"beta1", t.beta1}, {"beta2", t.beta2},
              {"eps", t.eps}, {"negative_weight", t.negative_weight}, {"box_weight", t.box_weight},
              {"label_smoothing", t.label_smoothing}};
}
inline void from_json_into(const Json& j, TrainConfig& t) {
  using detail::take;
  take(j, "epochs", t.epochs);
  take(j, "batch", t.batch);
  take(j, "lr", t.lr);
  take(j, "beta1", t.beta1);
  take(j, "beta2", t.beta2);
  take(j, "eps", t.eps);
  take(j, "negative_weight", t.negative_weight);
  take(j, "box_weight", t.box_weight);
  take(j, "label_smoothing", t.label_smoothing);
}

inline LocationPolicy location_from_string(const std::string& s) {
  if (s == "stage1") return LocationPolicy::stage1;
  if (s == "random") return LocationPolicy::random;
  if (s == "center") return LocationPolicy::center;
  throw std::invalid_argument("unknown location policy: " + s);
}

// Everything a command can be configured with. Flags override file values.
struct RunConfig {
  SceneSpec scene;
  MotConfig mot;
  AttackConfig attack;
  Stage1Config stage1;
  TrainConfig train;
  LocationPolicy location = LocationPolicy::stage1;
  int budget = 1000;
  int horizon = 1;
  int corpus_scenes = 100, corpus_frames = 3;
  int benchmark_size = 20;

  void validate() const {
    scene.validate();
    mot.validate();
    attack.validate();
    stage1.validate();
    if (budget < 1) throw std::invalid_argument("budget must be >= 1");
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (corpus_scenes < 1 || corpus_frames < 1) throw std::invalid_argument("corpus sizes must be >= 1");
    if (benchmark_size < 1) throw std::invalid_argument("benchmark size must be >= 1");
    if (train.epochs < 1 || train.batch < 1 || !(train.lr > 0)) throw std::invalid_argument("bad training config");
  }
};

inline Json to_json(const RunConfig& c) {
  return Json{{"scene", to_json(c.scene)},       {"mot", to_json(c.mot)},
              {"attack", to_json(c.attack)},     {"stage1", to_json(c.stage1)},
              {"train", to_json(c.train)},       {"location", to_string(c.location)},
              {"budget", c.budget},              {"horizon", c.horizon},
              {"corpus_scenes", c.corpus_scenes}, {"corpus_frames", c.corpus_frames},
              {"benchmark_size", c.benchmark_size}};
}

namespace detail {
// Every key in `j` must exist in `shape` (the serialized defaults), recursively.
inline void check_keys(const Json& j, const Json& shape, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument((where.empty() ? std::string("config") : where) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    const std::string path = where.empty() ? k : where + "." + k;
    if (!shape.contains(k)) throw std::invalid_argument("unknown config key: " + path);
    if (shape.at(k).is_object()) check_keys(v, shape.at(k), path);
  }
}
}  // namespace detail

inline RunConfig run_config_from_json(const Json& j) {
  detail::check_keys(j, to_json(RunConfig{}), "");
  RunConfig c;
  if (j.contains("scene")) from_json_into(j.at("scene"), c.scene);
  if (j.contains("mot")) from_json_into(j.at("mot"), c.mot);
  if (j.contains("attack")) from_json_into(j.at("attack"), c.attack);
  if (j.contains("stage1")) from_json_into(j.at("stage1"), c.stage1);
  if (j.contains("train")) from_json_into(j.at("train"), c.train);
  if (j.contains("location")) c.location = location_from_string(j.at("location").get<std::string>());
  detail::take(j, "budget", c.budget);
  detail::take(j, "horizon", c.horizon);
  detail::take(j, "corpus_scenes", c.corpus_scenes);
  detail::take(j, "corpus_frames", c.corpus_frames);
  detail::take(j, "benchmark_size", c.benchmark_size);
  return c;
}

// ---------------------------------------------------------------------------
// Scenario files: JSON beside one image per frame.

inline std::string direction_name(const Vec2& v) { return v.dx >= 0 ? "l2r" : "r2l"; }

inline void save_scenario(const Scenario& sc, const std::string& dir, const std::string& image_ext = ".ppm") {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");
  Json frames = Json::array(), boxes = Json::array(), regions = Json::array(), distractors = Json::array();
  for (int f = 0; f < sc.frame_count(); ++f) {
    std::ostringstream name;
    name << "frames/" << std::setw(3) << std::setfill('0') << f << image_ext;
    write_image((fs::path(dir) / name.str()).string(), sc.frames[static_cast<std::size_t>(f)]);
    frames.push_back(name.str());
    boxes.push_back(to_json(sc.target[static_cast<std::size_t>(f)]));
    regions.push_back(to_json(sc.region[static_cast<std::size_t>(f)]));
    Json ds = Json::array();
    for (const GroundTruth& g : sc.distractors[static_cast<std::size_t>(f)])
      ds.push_back(Json{{"box", to_json(g.box)}, {"class", g.class_id}});
    distractors.push_back(ds);
  }
  const Json j{{"frames", frames},
               {"ground_truth", boxes},
               {"region", regions},
               {"distractors", distractors},
               {"window", Json{{"start", sc.attack_start}, {"end", sc.attack_end}}},
               {"goal", to_string(sc.goal)},
               {"direction", Json{{"name", direction_name(sc.direction)}, {"v", Json::array({sc.direction.dx, sc.direction.dy})}}},
               {"patch", Json{{"height", sc.patch_h}, {"width", sc.patch_w}}},
               {"seed", sc.seed}};
  write_json((fs::path(dir) / "scenario.json").string(), j);
}

inline Scenario load_scenario(const std::string& path) {
  namespace fs = std::filesystem;
  const Json j = read_json(path);
  const fs::path base = fs::path(path).parent_path();
  Scenario sc;
  try {
    for (const Json& f : j.at("frames")) sc.frames.push_back(read_image((base / f.get<std::string>()).string()));
    for (const Json& b : j.at("ground_truth")) sc.target.push_back(bbox_from_json(b));
    for (const Json& r : j.at("region")) sc.region.push_back(rect_from_json(r));
    if (j.contains("distractors")) {
      for (const Json& ds : j.at("distractors")) {
        std::vector<GroundTruth> v;
        for (const Json& d : ds) v.push_back({bbox_from_json(d.at("box")), d.at("class").get<int>()});
        sc.distractors.push_back(std::move(v));
      }
    } else {
      sc.distractors.assign(sc.frames.size(), {});
    }
    sc.attack_start = j.at("window").at("start").get<int>();
    sc.attack_end = j.at("window").at("end").get<int>();
    sc.goal = goal_from_string(j.at("goal").get<std::string>());
    const Json& v = j.at("direction").at("v");
    sc.direction = Vec2{v.at(0).get<double>(), v.at(1).get<double>()};
    sc.patch_h = j.at("patch").at("height").get<int>();
    sc.patch_w = j.at("patch").at("width").get<int>();
    sc.seed = j.at("seed").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  sc.validate();
  return sc;
}

// A benchmark file lists scenario files relative to itself.
inline void save_benchmark(const std::vector<Scenario>& bench, const std::string& dir) {
  namespace fs = std::filesystem;
  Json list = Json::array();
  for (std::size_t i = 0; i < bench.size(); ++i) {
    std::ostringstream name;
    name << "scenario_" << std::setw(3) << std::setfill('0') << i;
    save_scenario(bench[i], (fs::path(dir) / name.str()).string());
    list.push_back(name.str() + "/scenario.json");
  }
  write_json((fs::path(dir) / "benchmark.json").string(), Json{{"scenarios", list}});
}

// Accepts a single scenario file or a benchmark listing.
inline std::vector<Scenario> load_scenarios(const std::string& path) {
  namespace fs = std::filesystem;
  const Json j = read_json(path);
  if (!j.contains("scenarios")) return {load_scenario(path)};
  std::vector<Scenario> out;
  for (const Json& s : j.at("scenarios")) out.push_back(load_scenario((fs::path(path).parent_path() / s.get<std::string>()).string()));
  if (out.empty()) throw std::invalid_argument(path + ": benchmark lists no scenarios");
  return out;
}

// ---------------------------------------------------------------------------
// Patch artifacts: lossless .clim pixels, a .ppm preview, JSON sidecar, loss log.

struct PatchMeta {
  int offset_top = 0, offset_left = 0, height = 0, width = 0;
  PixelRect window;
  std::uint64_t seed = 0, scenario_seed = 0;
  std::string config_hash, weights_hash;
  std::string optimizer, direction, goal;
  double eta = 0;
  bool terminal = false;
  int iterations = 0, stage1_iterations = 0;
};

inline Json to_json(const PatchMeta& m) {
  return Json{{"location", Json{{"offset_top", m.offset_top}, {"offset_left", m.offset_left}, {"window", to_json(m.window)}}},
              {"size", Json{{"height", m.height}, {"width", m.width}}},
              {"seed", m.seed},
              {"scenario_seed", m.scenario_seed},
              {"config_hash", m.config_hash},
              {"weights_hash", m.weights_hash},
              {"optimizer", m.optimizer},
              {"eta", m.eta},
              {"direction", m.direction},
              {"goal", m.goal},
              {"terminal", m.terminal},
              {"iterations", m.iterations},
              {"stage1_iterations", m.stage1_iterations}};
}

inline PatchMeta patch_meta_from_json(const Json& j) {
  PatchMeta m;
  try {
    m.offset_top = j.at("location").at("offset_top").get<int>();
    m.offset_left = j.at("location").at("offset_left").get<int>();
    m.window = rect_from_json(j.at("location").at("window"));
    m.height = j.at("size").at("height").get<int>();
    m.width = j.at("size").at("width").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.scenario_seed = j.at("scenario_seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.weights_hash = j.at("weights_hash").get<std::string>();
    m.optimizer = j.at("optimizer").get<std::string>();
    m.eta = j.at("eta").get<double>();
    m.direction = j.at("direction").get<std::string>();
    m.goal = j.at("goal").get<std::string>();
    m.terminal = j.at("terminal").get<bool>();
    m.iterations = j.at("iterations").get<int>();
    m.stage1_iterations = j.at("stage1_iterations").get<int>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("patch sidecar: ") + e.what());
  }
  return m;
}

inline void write_loss_log(const std::string& path, const std::vector<LossBreakdown>& log) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(9);
  write_loss_log_header(os);
  for (std::size_t i = 0; i < log.size(); ++i) write_loss_log_row(os, static_cast<int>(i), log[i]);
  write_text(path, os.str());
}

inline void save_patch(const std::string& dir, const PatchSpec& patch, const PatchMeta& meta, const std::vector<LossBreakdown>& log,
                       const std::string& stem = "patch") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_clim((fs::path(dir) / (stem + ".clim")).string(), patch.pixels);
  write_ppm((fs::path(dir) / (stem + ".ppm")).string(), patch.pixels);
  write_json((fs::path(dir) / (stem + ".json")).string(), to_json(meta));
  write_loss_log((fs::path(dir) / (stem + "_loss.csv")).string(), log);
}

struct LoadedPatch {
  PatchSpec patch;  // top/left are offsets relative to the target box
  PatchMeta meta;
};

inline LoadedPatch load_patch(const std::string& dir, const std::string& stem = "patch") {
  namespace fs = std::filesystem;
  LoadedPatch lp;
  lp.meta = patch_meta_from_json(read_json((fs::path(dir) / (stem + ".json")).string()));
  lp.patch.pixels = read_clim((fs::path(dir) / (stem + ".clim")).string());
  if (lp.patch.pixels.height != lp.meta.height || lp.patch.pixels.width != lp.meta.width)
    throw FormatError(dir + ": patch pixels do not match the sidecar size");
  lp.patch.top = lp.meta.offset_top;
  lp.patch.left = lp.meta.offset_left;
  return lp;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string opt_num(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline constexpr const char* kEvalHeader = "label,mot_h,mot_r,mot_cov,t_iou,scenarios,successes,asr,mean_frames\n";

inline std::string eval_row_csv(const EvalRow& r) {
  std::ostringstream os;
  os << r.label << ',' << r.mot.hits_to_confirm << ',' << r.mot.max_misses << ',' << fmt(r.mot.cov) << ',' << fmt(r.mot.t_iou) << ','
     << r.agg.scenarios << ',' << r.agg.successes << ',' << fmt(r.agg.asr) << ',' << opt_num(r.agg.mean_frames) << '\n';
  return os.str();
}

inline constexpr const char* kOutcomeHeader = "label,scenario,seed,goal,direction,success,frames_to_success,pre_attack_track,post_attack_track,terminal\n";

struct OutcomeRow {
  std::string label;
  int scenario = 0;
  std::uint64_t seed = 0;
  std::string goal, direction;
  Outcome outcome;
  std::optional<bool> terminal;
};

inline std::string outcome_row_csv(const OutcomeRow& r) {
  std::ostringstream os;
  os << r.label << ',' << r.scenario << ',' << r.seed << ',' << r.goal << ',' << r.direction << ',' << (r.outcome.success ? 1 : 0) << ','
     << (r.outcome.frames_to_success ? std::to_string(*r.outcome.frames_to_success) : std::string()) << ','
     << r.outcome.pre_attack_track << ',' << r.outcome.post_attack_track << ','
     << (r.terminal ? std::string(*r.terminal ? "1" : "0") : std::string()) << '\n';
  return os.str();
}

inline constexpr const char* kDefenseHeader = "defense,strength,scenarios,successes,asr,mean_frames,ap50\n";

inline std::string defense_row_csv(const DefenseRow& r) {
  std::ostringstream os;
  os << r.defense << ',' << fmt(r.strength) << ',' << r.agg.scenarios << ',' << r.agg.successes << ',' << fmt(r.agg.asr) << ','
     << opt_num(r.agg.mean_frames) << ',' << fmt(r.ap) << '\n';
  return os.str();
}

inline Json to_json(const Aggregate& a) {
  Json j{{"scenarios", a.scenarios}, {"successes", a.successes}, {"asr", a.asr}};
  j["mean_frames"] = a.mean_frames ? Json(*a.mean_frames) : Json(nullptr);
  return j;
}

inline void write_track_log(const std::string& path, const std::vector<MotFrameResult>& log) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(9);
  write_track_log_header(os);
  for (std::size_t f = 0; f < log.size(); ++f) write_track_log_rows(os, static_cast<int>(f), log[f]);
  write_text(path, os.str());
}

// ---------------------------------------------------------------------------
// Run manifest: one per command invocation, no timestamps.

struct Manifest {
  std::string command;
  Json config;
  std::uint64_t seed = 0;
  Json inputs = Json::object();
  Json outputs = Json::array();
};

inline Json to_json(const Manifest& m) {
  return Json{{"command", m.command}, {"config", m.config}, {"config_hash", config_hash(m.config)}, {"seed", m.seed},
              {"inputs", m.inputs}, {"outputs", m.outputs}, {"tool_version", kToolVersion}};
}

}  // namespace controlloc
