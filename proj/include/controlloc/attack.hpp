// attack.hpp: adversarial patch generation (conditional and fixed-weight objectives, dual patch)
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "controlloc/detector.hpp"
#include "controlloc/imaging.hpp"
#include "controlloc/losses.hpp"
#include "controlloc/random.hpp"
#include "controlloc/targeting.hpp"

namespace controlloc {

enum class Optimizer { conditional, slrm };

inline const char* to_string(Optimizer o) { return o == Optimizer::conditional ? "conditional" : "slrm"; }
inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "conditional") return Optimizer::conditional;
  if (s == "slrm") return Optimizer::slrm;
  throw std::invalid_argument("unknown optimizer: " + s);
}

struct AdamParams {
  double lr = 0.01, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected Adam step followed by projection onto [lo, hi].
inline void adam_step(AdamState& s, std::vector<double>& x, const std::vector<double>& grad, const AdamParams& p,
                      double lo = 0.0, double hi = 1.0) {
  if (s.m.size() != x.size() || grad.size() != x.size()) throw std::invalid_argument("adam_step: shape mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw std::runtime_error("adam_step: non-finite gradient at entry " + std::to_string(i));
  ++s.step;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.m[i] = p.beta1 * s.m[i] + (1 - p.beta1) * grad[i];
    s.v[i] = p.beta2 * s.v[i] + (1 - p.beta2) * grad[i] * grad[i];
    const double mh = s.m[i] / c1, vh = s.v[i] / c2;
    x[i] = std::clamp(x[i] - p.lr * mh / (std::sqrt(vh) + p.eps), lo, hi);
  }
}

inline void adam_step(AdamState& s, PatchSpec& patch, const std::vector<double>& grad, const AdamParams& p) {
  adam_step(s, patch.pixels.data, grad, p);
}

struct AttackConfig {
  int iterations = 1000;
  Optimizer optimizer = Optimizer::conditional;
  double eta = 1.0;
  AdamParams adam;
  LossHyper hyper;
  EotParams eot;
  std::uint64_t seed = 0;
  int patch_h = 6, patch_w = 6;
  int offset_top = 0, offset_left = 0;  // patch top-left relative to the target box's top-left
  bool dual = false;
  bool random_init = false;
  double t_iou = 0.3;  // gate used by the target-box search
  TargetMode target_mode = TargetMode::last_above_threshold;
  double k_s = -1;  // anchor-free cell nudge in pixels; < 0 means one stride

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("AttackConfig: iterations must be >= 1");
    if (!(adam.lr > 0)) throw std::invalid_argument("AttackConfig: lr must be > 0");
    if (optimizer == Optimizer::slrm && eta < 0) throw std::invalid_argument("AttackConfig: eta must be >= 0");
    if (patch_h < 2 || patch_w < 2) throw std::invalid_argument("AttackConfig: patch must be at least 2x2");
    hyper.validate();
    eot.validate();
  }
};

struct AttackResult {
  PatchSpec patch;  // top/left hold the offset relative to the target box
  std::optional<PatchSpec> disappearance;
  std::vector<LossBreakdown> log;
  std::vector<LossBreakdown> disappearance_log;
  bool terminal = false;
  int iterations = 0;
};

// Frames the patch is optimized over, with the target box in each.
struct AttackFrames {
  std::vector<Image> frames;
  std::vector<BBox> boxes;

  void validate() const {
    if (frames.empty() || frames.size() != boxes.size()) throw std::invalid_argument("AttackFrames: need matching frames and boxes");
  }
};

inline PatchSpec place_patch(const Image& pixels, const BBox& box, int offset_top, int offset_left) {
  return PatchSpec{pixels, static_cast<int>(std::floor(box.y1)) + offset_top, static_cast<int>(std::floor(box.x1)) + offset_left};
}

// Objective on one forward pass: returns breakdown and proposal gradients of L_adv.
using PassObjective = std::function<ConditionalLoss(const DetectionOutput&, std::size_t frame)>;

namespace detail {

inline Image initial_patch(const AttackConfig& cfg, std::uint64_t stream) {
  Image p(cfg.patch_h, cfg.patch_w, 0.5);
  if (cfg.random_init) {
    Rng rng(derive_seed(cfg.seed, 0x1A17, stream));
    for (double& v : p.data) v = rng.uniform();
  }
  return p;
}

// Shared loop: EoT paste, incremental forward, objective, backward through the
// paste routes, TV, Adam.
inline Image optimize_patch(const Detector& det, const AttackFrames& fs, const AttackConfig& cfg, const PassObjective& objective,
                            std::uint64_t stream, std::vector<LossBreakdown>& log) {
  std::vector<Activations> base;
  base.reserve(fs.frames.size());
  for (const Image& f : fs.frames) base.push_back(det.run(f));
  Image pixels = initial_patch(cfg, stream);
  AdamState adam(pixels.data.size());
  EotParams eot = cfg.eot;
  eot.seed = derive_seed(cfg.seed, 0xE0, stream);
  std::vector<double> grad(pixels.data.size());
  log.clear();
  log.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int n = 0; n < cfg.iterations; ++n) {
    const std::size_t f = static_cast<std::size_t>(n) % fs.frames.size();
    const PatchSpec placed = place_patch(pixels, fs.boxes[f], cfg.offset_top, cfg.offset_left);
    const std::vector<EotSample> samples = sample_eot(eot, static_cast<std::uint64_t>(n));
    std::fill(grad.begin(), grad.end(), 0.0);
    LossBreakdown mean;
    int regression_votes = 0;
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (const EotSample& t : samples) {
      const EotApplied applied = apply_eot(fs.frames[f], placed, t);
      const Activations acts = det.run_incremental(applied.image, base[f], applied.footprint);
      const DetectionOutput out = det.decode(acts);
      const ConditionalLoss l = objective(out, f);
      if (!std::isfinite(l.breakdown.adv)) throw std::runtime_error("patch optimization: non-finite loss");
      const LossBreakdown& b = l.breakdown;
      mean.adv += inv * b.adv;
      mean.score += inv * b.score;
      mean.erase += inv * b.erase;
      mean.fabricate += inv * b.fabricate;
      mean.regression += inv * b.regression;
      mean.iou_term += inv * b.iou_term;
      mean.center_term += inv * b.center_term;
      regression_votes += b.branch == Branch::regression;
      if (applied.footprint.empty() || l.grads.empty()) continue;
      const std::vector<double> g = det.backward_to_input(acts, to_head_grads(det.config(), out, l.grads), applied.footprint);
      route_gradient(applied.routes, g, grad);
    }
    for (double& v : grad) v *= inv;
    mean.branch = 2 * regression_votes > static_cast<int>(samples.size()) ? Branch::regression : Branch::score;
    if (cfg.hyper.mu2 > 0) {
      const TvLoss tv = tv_loss(pixels);
      mean.tv = tv.value;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.hyper.mu2 * tv.grad[i];
    } else {
      mean.tv = tv_loss(pixels).value;
    }
    log.push_back(mean);
    adam_step(adam, pixels.data, grad, cfg.adam);
  }
  return pixels;
}

struct FrameTargets {
  std::vector<BBox> target;  // B_t per frame (geometric, fixed given B_o)
};

inline FrameTargets frame_targets(const DetectorConfig& dc, const AttackFrames& fs, const AttackDirection& dir, const AttackConfig& cfg) {
  FrameTargets t;
  for (const BBox& b : fs.boxes) t.target.push_back(find_target_bbox(b, dir.v, cfg.t_iou, dc, cfg.target_mode));
  return t;
}

inline double nudge(const DetectorConfig& dc, const AttackConfig& cfg) { return cfg.k_s < 0 ? dc.stride() : cfg.k_s; }

}  // namespace detail

// Hijack condition for a given patch: B_f survives NMS and no B_e does, on the un-transformed paste.
inline bool hijack_condition(const Detector& det, const Image& frame, const BBox& origin, const PatchSpec& offset_patch,
                             const AttackDirection& dir, const AttackConfig& cfg) {
  const DetectorConfig& dc = det.config();
  const Image x = apply_patch(frame, place_patch(offset_patch.pixels, origin, offset_patch.top, offset_patch.left));
  const DetectionOutput out = det.forward(x);
  const BBox bt = find_target_bbox(origin, dir.v, cfg.t_iou, dc, cfg.target_mode);
  return select_branch(out, split(out, bt, origin, dc, dir.v, detail::nudge(dc, cfg))) == Branch::regression;
}

namespace detail {

inline AttackResult run_hijack(const Detector& det, const AttackFrames& fs, const AttackDirection& dir, const AttackConfig& cfg) {
  cfg.validate();
  fs.validate();
  if (dir.v.is_zero()) throw std::invalid_argument("attack direction must be non-zero");
  const DetectorConfig& dc = det.config();
  const FrameTargets tg = frame_targets(dc, fs, dir, cfg);
  const double ks = nudge(dc, cfg);
  const PassObjective obj = [&](const DetectionOutput& out, std::size_t f) {
    const FilterResult fr = split(out, tg.target[f], fs.boxes[f], dc, dir.v, ks);
    if (cfg.optimizer == Optimizer::conditional) return conditional_adv_loss(out, fr, tg.target[f], cfg.hyper);
    return slrm_adv_loss(out, fr, tg.target[f], cfg.hyper, cfg.eta);
  };
  AttackResult r;
  const Image px = optimize_patch(det, fs, cfg, obj, 0, r.log);
  r.patch = PatchSpec{px, cfg.offset_top, cfg.offset_left};
  r.iterations = cfg.iterations;
  const std::size_t last = static_cast<std::size_t>(cfg.iterations - 1) % fs.frames.size();
  r.terminal = hijack_condition(det, fs.frames[last], fs.boxes[last], r.patch, dir, cfg);
  return r;
}

}  // namespace detail

inline AttackResult generate_patch(const Detector& det, const AttackFrames& fs, const AttackDirection& dir, AttackConfig cfg) {
  cfg.optimizer = Optimizer::conditional;
  return detail::run_hijack(det, fs, dir, cfg);
}

inline AttackResult slrm_generate(const Detector& det, const AttackFrames& fs, const AttackDirection& dir, AttackConfig cfg, double eta) {
  cfg.optimizer = Optimizer::slrm;
  cfg.eta = eta;
  return detail::run_hijack(det, fs, dir, cfg);
}

// Hijack patch plus an independently optimized disappearance patch.
inline AttackResult dual_generate(const Detector& det, const AttackFrames& fs, const AttackDirection& dir, const AttackConfig& cfg) {
  if (!cfg.dual) throw std::invalid_argument("dual_generate: dual flag not set");
  AttackResult r = detail::run_hijack(det, fs, dir, cfg);
  const DetectorConfig& dc = det.config();
  const PassObjective obj = [&](const DetectionOutput& out, std::size_t f) {
    const std::vector<std::size_t> set = disappearance_set(out, fs.boxes[f], dc);
    const ProposalLoss l = erase_loss(out.proposals, set);
    ConditionalLoss c;
    c.breakdown.erase = l.value;
    c.breakdown.adv = l.value;
    c.grads = l.grads;
    return c;
  };
  const Image px = detail::optimize_patch(det, fs, cfg, obj, 1, r.disappearance_log);
  r.disappearance = PatchSpec{px, cfg.offset_top, cfg.offset_left};
  return r;
}

// Dispatch on cfg.optimizer (and cfg.dual).
inline AttackResult run_generator(const Detector& det, const AttackFrames& fs, const AttackDirection& dir, const AttackConfig& cfg) {
  if (cfg.dual) return dual_generate(det, fs, dir, cfg);
  return detail::run_hijack(det, fs, dir, cfg);
}

}  // namespace controlloc
