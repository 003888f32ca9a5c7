// harness.hpp: end-to-end runs of detector + tracker over scenarios, the hijack
// success predicate, baselines, and benchmark aggregation
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "controlloc/attack.hpp"
#include "controlloc/detector.hpp"
#include "controlloc/metrics.hpp"
#include "controlloc/mot.hpp"
#include "controlloc/scene.hpp"
#include "controlloc/stage1.hpp"
#include "controlloc/targeting.hpp"

namespace controlloc {

constexpr double kTargetMatchIou = 0.5;

struct FrameDetections {
  std::vector<Detection> detections;
  int target = -1;  // index of the target's detection, -1 if not detected
};

inline int find_target_detection(const std::vector<Detection>& dets, const BBox& truth) {
  int best = -1;
  double best_iou = kTargetMatchIou;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const double v = iou(dets[i].box, truth);
    if (v >= best_iou) {
      best_iou = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

inline FrameDetections detect_frame(const Detector& det, const Image& img, const BBox& truth, const DefenseKind* defense = nullptr) {
  const DetectionOutput out = defense ? det.forward(defense_transform(img, *defense)) : det.forward(img);
  FrameDetections fd;
  for (std::size_t i : out.kept) fd.detections.push_back({out.proposals[i].box, out.proposals[i].confidence});
  fd.target = find_target_detection(fd.detections, truth);
  return fd;
}

struct Outcome {
  std::vector<MotFrameResult> track_log;
  std::vector<FrameDetections> detections;
  int attack_start = 0, attack_end = -1;  // attacked frames; end < start means none
  bool success = false;
  std::optional<int> frames_to_success;
  int pre_attack_track = -1;   // tracker holding the target just before the window
  int post_attack_track = -1;  // existing tracker the target associated with after the window, -1 if none
};

// The target's detection at t_end+1 (and through the horizon) is not associated
// with any tracker that existed at t_end.
inline bool hijack_success(const std::vector<MotFrameResult>& log, const std::vector<FrameDetections>& dets, int t_end, int horizon = 1) {
  if (horizon < 1) throw std::invalid_argument("hijack_success: horizon must be >= 1");
  const int n = static_cast<int>(log.size());
  if (t_end + 1 >= n) return false;
  int max_old_id = 0;
  for (int f = 0; f <= t_end; ++f)
    for (const TrackSnapshot& s : log[static_cast<std::size_t>(f)].tracks) max_old_id = std::max(max_old_id, s.id);
  for (int f = t_end + 1; f <= std::min(n - 1, t_end + horizon); ++f) {
    const int d = dets[static_cast<std::size_t>(f)].target;
    if (d < 0) return false;
    const int tr = log[static_cast<std::size_t>(f)].tracker_for_detection(d);
    if (tr >= 1 && tr <= max_old_id) return false;
  }
  return true;
}

inline std::vector<MotFrameResult> track_stream(const std::vector<FrameDetections>& dets, const MotConfig& mot) {
  MultiTracker mt(mot);
  std::vector<MotFrameResult> log;
  log.reserve(dets.size());
  for (const FrameDetections& fd : dets) log.push_back(mt.step(fd.detections));
  return log;
}

namespace detail {

inline void fill_outcome(Outcome& o, int horizon) {
  const int s = o.attack_start;
  if (s >= 1) {
    const int d = o.detections[static_cast<std::size_t>(s - 1)].target;
    if (d >= 0) o.pre_attack_track = o.track_log[static_cast<std::size_t>(s - 1)].tracker_for_detection(d);
  }
  const int after = o.attack_end + 1;
  if (after < static_cast<int>(o.track_log.size())) {
    const int d = o.detections[static_cast<std::size_t>(after)].target;
    if (d >= 0) {
      const int tr = o.track_log[static_cast<std::size_t>(after)].tracker_for_detection(d);
      if (tr >= 0) o.post_attack_track = tr;
    }
  }
  o.success = o.attack_end >= o.attack_start && hijack_success(o.track_log, o.detections, o.attack_end, horizon);
}

}  // namespace detail

struct RunOptions {
  const DefenseKind* defense = nullptr;
  int horizon = 1;
};

inline std::vector<FrameDetections> clean_detections(const Scenario& sc, const Detector& det, const RunOptions& opt = {}) {
  std::vector<FrameDetections> out;
  for (int f = 0; f < sc.frame_count(); ++f)
    out.push_back(detect_frame(det, sc.frames[static_cast<std::size_t>(f)], sc.target[static_cast<std::size_t>(f)], opt.defense));
  return out;
}

inline Outcome run_benign(const Scenario& sc, const Detector& det, const MotConfig& mot, const RunOptions& opt = {}) {
  sc.validate();
  Outcome o;
  o.detections = clean_detections(sc, det, opt);
  o.track_log = track_stream(o.detections, mot);
  o.attack_start = sc.attack_start;
  o.attack_end = sc.attack_end;
  detail::fill_outcome(o, opt.horizon);
  o.success = false;  // nothing was attacked
  return o;
}

// Track id holding the target detection on each frame (-1 where undetected or unmatched).
inline std::vector<int> target_track_ids(const Outcome& o) {
  std::vector<int> ids;
  for (std::size_t f = 0; f < o.track_log.size(); ++f) {
    const int d = o.detections[f].target;
    int id = -1;
    if (d >= 0)
      for (const TrackSnapshot& s : o.track_log[f].tracks)
        if (s.matched_detection == d) id = s.id;
    ids.push_back(id);
  }
  return ids;
}

// Benign tracking property: one id for the whole sequence, confirmed from frame H-1 on.
inline bool stable_single_track(const Outcome& o, int hits_to_confirm) {
  const std::vector<int> ids = target_track_ids(o);
  if (ids.empty() || ids[0] < 0) return false;
  for (int id : ids)
    if (id != ids[0]) return false;
  for (std::size_t f = static_cast<std::size_t>(std::max(0, hits_to_confirm - 1)); f < o.track_log.size(); ++f) {
    bool confirmed = false;
    for (const TrackSnapshot& s : o.track_log[f].tracks)
      if (s.id == ids[0] && s.status == TrackStatus::confirmed) confirmed = true;
    if (!confirmed) return false;
  }
  return true;
}

// Patch offsets are relative to the target's top-left corner; the patch rides the target.
inline Outcome run_attack(const Scenario& sc, const PatchSpec& offset_patch, const Vec2& patch_direction, const Detector& det,
                          const MotConfig& mot, const RunOptions& opt = {}) {
  sc.validate();
  if (patch_direction.dx != sc.direction.dx || patch_direction.dy != sc.direction.dy)
    throw std::invalid_argument("run_attack: patch was generated for a different attack direction");
  const std::vector<FrameDetections> clean = clean_detections(sc, det, opt);
  std::vector<FrameDetections> attacked = clean;
  for (int f = sc.attack_start; f <= sc.attack_end; ++f) {
    const std::size_t i = static_cast<std::size_t>(f);
    const Image x = apply_patch(sc.frames[i], place_patch(offset_patch.pixels, sc.target[i], offset_patch.top, offset_patch.left));
    attacked[i] = detect_frame(det, x, sc.target[i], opt.defense);
  }
  auto mixed = [&](int t_end) {
    std::vector<FrameDetections> d = clean;
    for (int f = sc.attack_start; f <= t_end; ++f) d[static_cast<std::size_t>(f)] = attacked[static_cast<std::size_t>(f)];
    return d;
  };
  Outcome o;
  o.detections = mixed(sc.attack_end);
  o.track_log = track_stream(o.detections, mot);
  o.attack_start = sc.attack_start;
  o.attack_end = sc.attack_end;
  detail::fill_outcome(o, opt.horizon);
  for (int t = sc.attack_start; t <= sc.attack_end; ++t) {
    const std::vector<FrameDetections> d = mixed(t);
    if (hijack_success(track_stream(d, mot), d, t, opt.horizon)) {
      o.frames_to_success = t - sc.attack_start + 1;
      break;
    }
  }
  return o;
}

namespace detail {

inline Outcome max_capability_run(const Scenario& sc, const MotConfig& mot, int t_end, int horizon) {
  MultiTracker mt(mot);
  Outcome o;
  o.attack_start = sc.attack_start;
  o.attack_end = t_end;
  int hijacked = -1;
  for (int f = 0; f < sc.frame_count(); ++f) {
    const std::size_t i = static_cast<std::size_t>(f);
    FrameDetections fd;
    for (const GroundTruth& g : sc.ground_truth(f)) fd.detections.push_back({g.box, 1.0});
    fd.target = 0;
    if (f >= sc.attack_start && f <= t_end && hijacked >= 0) {
      // the attacker steers the tracker: fabricate at the gate edge of its prediction
      if (const auto pred = mt.peek_prediction(hijacked))
        fd.detections[0].box = find_target_bbox(*pred, sc.direction, mot.t_iou,
                                                default_k_max(sc.frames[i].height, sc.frames[i].width, sc.direction));
      fd.target = -1;
    }
    o.track_log.push_back(mt.step(fd.detections));
    if (f == sc.attack_start - 1) hijacked = o.track_log.back().tracker_for_detection(0);
    o.detections.push_back(std::move(fd));
  }
  fill_outcome(o, horizon);
  return o;
}

}  // namespace detail

// Upper bound: the attacker places the target's box anywhere inside the
// association gate of the hijacked tracker during the window. `max_frames`
// shortens the window (0 = no manipulation, < 0 = full window).
inline Outcome max_capability(const Scenario& sc, const MotConfig& mot, int max_frames = -1, int horizon = 1) {
  sc.validate();
  mot.validate();
  const int full = sc.attack_end - sc.attack_start + 1;
  const int len = max_frames < 0 ? full : std::min(max_frames, full);
  Outcome o = detail::max_capability_run(sc, mot, sc.attack_start + len - 1, horizon);
  for (int k = 1; k <= len; ++k)
    if (detail::max_capability_run(sc, mot, sc.attack_start + k - 1, horizon).success) {
      o.frames_to_success = k;
      break;
    }
  return o;
}

// ---------------------------------------------------------------------------
// Benchmark-level drivers

enum class LocationPolicy { stage1, random, center };

inline const char* to_string(LocationPolicy p) {
  switch (p) {
    case LocationPolicy::stage1: return "stage1";
    case LocationPolicy::random: return "random";
    default: return "center";
  }
}

struct GeneratorSpec {
  AttackConfig attack;
  Stage1Config stage1;
  LocationPolicy location = LocationPolicy::stage1;
  int budget = 1000;  // total iterations; Stage I consumes its share
};

struct ScenarioAttack {
  AttackResult result;
  int stage1_iterations = 0;
  PixelRect window;  // absolute location on the first attacked frame
};

inline PixelRect choose_location(const Detector& det, const Scenario& sc, const GeneratorSpec& g, std::uint64_t seed,
                                 Stage1Result* diag = nullptr) {
  const std::size_t f = static_cast<std::size_t>(sc.attack_start);
  const PixelRect& reg = sc.region[f];
  const int ph = sc.patch_h, pw = sc.patch_w;
  if (reg.height < ph || reg.width < pw) throw std::invalid_argument("choose_location: region smaller than patch");
  switch (g.location) {
    case LocationPolicy::stage1: {
      Stage1Config s1 = g.stage1;
      s1.win_h = ph;
      s1.win_w = pw;
      s1.seed = seed;
      s1.t_iou = g.attack.t_iou;
      Stage1Result r = preselect_location(det, sc.frames[f], sc.target[f], AttackDirection{sc.direction, sc.goal}, reg, s1);
      const PixelRect w{r.top, r.left, ph, pw};
      if (diag) *diag = std::move(r);
      return w;
    }
    case LocationPolicy::random: {
      Rng rng(derive_seed(seed, 0x2A4D));
      const int top = reg.top + static_cast<int>(rng.below(static_cast<std::uint64_t>(reg.height - ph + 1)));
      const int left = reg.left + static_cast<int>(rng.below(static_cast<std::uint64_t>(reg.width - pw + 1)));
      return {top, left, ph, pw};
    }
    default:
      return {reg.top + (reg.height - ph) / 2, reg.left + (reg.width - pw) / 2, ph, pw};
  }
}

inline AttackFrames window_frames(const Scenario& sc) {
  AttackFrames fs;
  for (int f = sc.attack_start; f <= sc.attack_end; ++f) {
    fs.frames.push_back(sc.frames[static_cast<std::size_t>(f)]);
    fs.boxes.push_back(sc.target[static_cast<std::size_t>(f)]);
  }
  return fs;
}

inline ScenarioAttack attack_scenario(const Detector& det, const Scenario& sc, const GeneratorSpec& g) {
  const std::uint64_t seed = derive_seed(g.attack.seed, sc.seed);
  ScenarioAttack out;
  out.window = choose_location(det, sc, g, seed);
  out.stage1_iterations = g.location == LocationPolicy::stage1 ? g.stage1.iterations : 0;
  AttackConfig cfg = g.attack;
  cfg.seed = seed;
  cfg.iterations = std::max(1, g.budget - out.stage1_iterations);
  cfg.patch_h = sc.patch_h;
  cfg.patch_w = sc.patch_w;
  const BBox& b = sc.target[static_cast<std::size_t>(sc.attack_start)];
  cfg.offset_top = out.window.top - static_cast<int>(std::floor(b.y1));
  cfg.offset_left = out.window.left - static_cast<int>(std::floor(b.x1));
  out.result = run_generator(det, window_frames(sc), AttackDirection{sc.direction, sc.goal}, cfg);
  return out;
}

struct Aggregate {
  int scenarios = 0, successes = 0;
  double asr = 0;
  std::optional<double> mean_frames;  // over successful runs only
};

inline Aggregate aggregate(const std::vector<Outcome>& outcomes) {
  Aggregate a;
  a.scenarios = static_cast<int>(outcomes.size());
  double frames = 0;
  for (const Outcome& o : outcomes) {
    if (!o.success) continue;
    ++a.successes;
    frames += o.frames_to_success.value_or(o.attack_end - o.attack_start + 1);
  }
  a.asr = a.scenarios ? static_cast<double>(a.successes) / a.scenarios : 0.0;
  if (a.successes) a.mean_frames = frames / a.successes;
  return a;
}

// Index-ordered parallel map; results do not depend on the job count.
template <typename T>
std::vector<T> parallel_map(std::size_t n, int jobs, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

struct EvalRow {
  std::string label;
  MotConfig mot;
  Aggregate agg;
};

// One patch per scenario, replayed under every MOT configuration.
inline std::vector<EvalRow> evaluate(const Detector& det, const std::vector<Scenario>& bench, const GeneratorSpec& g,
                                     const std::vector<MotConfig>& mots, const std::string& label, int jobs = 1,
                                     std::vector<ScenarioAttack>* attacks = nullptr) {
  if (bench.empty()) throw std::invalid_argument("evaluate: empty benchmark");
  const std::vector<ScenarioAttack> att =
      parallel_map<ScenarioAttack>(bench.size(), jobs, [&](std::size_t i) { return attack_scenario(det, bench[i], g); });
  std::vector<EvalRow> rows;
  for (const MotConfig& m : mots) {
    std::vector<Outcome> outs;
    for (std::size_t i = 0; i < bench.size(); ++i)
      outs.push_back(run_attack(bench[i], att[i].result.patch, bench[i].direction, det, m));
    rows.push_back({label, m, aggregate(outs)});
  }
  if (attacks) *attacks = att;
  return rows;
}

struct DefenseSetting {
  std::string name;  // none, bitdepth, gauss, median
  double strength = 0;
  std::optional<DefenseKind> kind;
};

inline DefenseSetting make_defense(const std::string& name, double strength, std::uint64_t seed = 0) {
  DefenseSetting d{name, strength, std::nullopt};
  if (name == "none") return d;
  if (name == "bitdepth") d.kind = BitDepth{static_cast<int>(std::lround(strength))};
  else if (name == "gauss") d.kind = GaussianNoise{strength, seed};
  else if (name == "median") d.kind = MedianBlur{static_cast<int>(std::lround(strength))};
  else throw std::invalid_argument("unknown defense: " + name);
  return d;
}

struct DefenseRow {
  std::string defense;
  double strength = 0;
  Aggregate agg;
  double ap = 0;
};

// Frames used for the utility metric: every fourth frame of each scenario.
inline std::vector<LabeledImage> utility_corpus(const std::vector<Scenario>& bench) {
  std::vector<LabeledImage> out;
  for (const Scenario& sc : bench)
    for (int f = 0; f < sc.frame_count(); f += 4) out.push_back({sc.frames[static_cast<std::size_t>(f)], sc.ground_truth(f)});
  return out;
}

inline double defended_ap(const Detector& det, const std::vector<LabeledImage>& corpus, const DefenseKind* kind) {
  std::vector<ImageDetections> ims;
  for (const LabeledImage& li : corpus)
    ims.push_back({kept_boxes(kind ? det.forward(defense_transform(li.image, *kind)) : det.forward(li.image)), li.objects});
  return average_precision(ims, kVehicleClass);
}

inline std::vector<DefenseRow> defense_eval(const Detector& det, const std::vector<Scenario>& bench,
                                            const std::vector<PatchSpec>& patches, const std::vector<DefenseSetting>& settings,
                                            const MotConfig& mot) {
  if (patches.size() != bench.size()) throw std::invalid_argument("defense_eval: one patch per scenario required");
  const std::vector<LabeledImage> corpus = utility_corpus(bench);
  std::vector<DefenseRow> rows;
  for (const DefenseSetting& s : settings) {
    RunOptions opt;
    opt.defense = s.kind ? &*s.kind : nullptr;
    std::vector<Outcome> outs;
    for (std::size_t i = 0; i < bench.size(); ++i) outs.push_back(run_attack(bench[i], patches[i], bench[i].direction, det, mot, opt));
    rows.push_back({s.name, s.strength, aggregate(outs), defended_ap(det, corpus, opt.defense)});
  }
  return rows;
}

}  // namespace controlloc
