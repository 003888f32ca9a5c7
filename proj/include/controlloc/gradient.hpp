// gradient.hpp: input-pixel gradients of the attack losses and a finite-difference checker
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "controlloc/detector.hpp"
#include "controlloc/losses.hpp"
#include "controlloc/random.hpp"
#include "controlloc/targeting.hpp"

namespace controlloc {

struct ScoreSpec {
  std::vector<std::size_t> fabricate, erase;
  LossHyper hyper;
  std::optional<std::vector<char>> active;  // pinned indicator per erase entry
};
struct RegressionSpec {
  std::vector<std::size_t> fabricate;
  BBox target;
  LossHyper hyper;
};
struct EraseSpec {
  std::vector<std::size_t> set;
};
struct ConditionalSpec {
  FilterResult filter;
  BBox target;
  LossHyper hyper;
  std::optional<Branch> frozen;
  std::optional<std::vector<char>> active;
};
struct TvSpec {
  PixelRect rect;  // image rectangle holding the patch
};

struct LossSpec {
  std::variant<ScoreSpec, RegressionSpec, EraseSpec, ConditionalSpec, TvSpec> kind;
  double scale = 1.0;
};

struct LossValue {
  double value = 0;
  std::vector<ProposalGrad> proposal_grads;  // unscaled
  std::vector<double> pixel_grad;            // direct image-space part (TV), unscaled; empty if none
};

inline LossValue evaluate_loss(const DetectionOutput& det, const Image& x, const LossSpec& spec) {
  LossValue out;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ScoreSpec>) {
          const ScoreLoss l = score_loss(det.proposals, s.erase, s.fabricate, s.hyper, s.active ? &*s.active : nullptr);
          out.value = l.total;
          out.proposal_grads = l.grads;
        } else if constexpr (std::is_same_v<T, RegressionSpec>) {
          const RegressionLoss l = regression_loss(det.proposals, s.fabricate, s.target, s.hyper);
          out.value = l.total;
          out.proposal_grads = l.grads;
        } else if constexpr (std::is_same_v<T, EraseSpec>) {
          const ProposalLoss l = erase_loss(det.proposals, s.set);
          out.value = l.value;
          out.proposal_grads = l.grads;
        } else if constexpr (std::is_same_v<T, ConditionalSpec>) {
          const ConditionalLoss l =
              conditional_adv_loss(det, s.filter, s.target, s.hyper, s.frozen, s.active ? &*s.active : nullptr);
          out.value = l.breakdown.adv;
          out.proposal_grads = l.grads;
        } else {
          const TvLoss l = tv_loss(x, s.rect);
          out.value = l.value;
          out.pixel_grad = l.grad;
        }
      },
      spec.kind);
  return out;
}

// Pins every discrete choice (score indicator, conditional branch) at the state of `det`.
inline LossSpec freeze(const LossSpec& spec, const DetectionOutput& det) {
  LossSpec out = spec;
  auto indicator = [&](const std::vector<std::size_t>& erase, double t_conf) {
    std::vector<char> a(erase.size());
    for (std::size_t k = 0; k < erase.size(); ++k) a[k] = detail::proposal_at(det.proposals, erase[k]).confidence > t_conf;
    return a;
  };
  if (auto* s = std::get_if<ScoreSpec>(&out.kind)) {
    if (!s->active) s->active = indicator(s->erase, s->hyper.t_conf);
  } else if (auto* c = std::get_if<ConditionalSpec>(&out.kind)) {
    if (!c->frozen) c->frozen = select_branch(det, c->filter);
    if (!c->active) c->active = indicator(c->filter.erase, c->hyper.t_conf);
  }
  return out;
}

struct InputGradient {
  double value = 0;
  std::vector<double> grad;  // HWC, same layout as the image
};

// d(scale * loss)/d(pixels), exact inside `roi` (the whole image by default).
inline InputGradient input_gradient(const Detector& det, const Image& x, const Activations& acts, const DetectionOutput& out,
                                    const LossSpec& spec, std::optional<PixelRect> roi = std::nullopt) {
  const LossValue lv = evaluate_loss(out, x, spec);
  InputGradient g;
  g.value = spec.scale * lv.value;
  if (!std::isfinite(g.value)) throw std::runtime_error("input_gradient: non-finite loss");
  g.grad = det.backward_to_input(acts, to_head_grads(det.config(), out, lv.proposal_grads), roi.value_or(x.rect()));
  if (!lv.pixel_grad.empty())
    for (std::size_t i = 0; i < g.grad.size(); ++i) g.grad[i] += lv.pixel_grad[i];
  if (spec.scale != 1.0)
    for (double& v : g.grad) v *= spec.scale;
  return g;
}

inline InputGradient input_gradient(const Detector& det, const Image& x, const LossSpec& spec) {
  const Activations a = det.run(x);
  return input_gradient(det, x, a, det.decode(a), spec);
}

struct GradCheckReport {
  double max_rel_error = 0;
  int checked = 0;
  int skipped = 0;  // entries whose +-eps probe crossed an activation kink
  bool flat = false;  // analytic gradient is zero everywhere; errors are absolute
  bool pass = false;
};

namespace detail {
inline bool same_signs(const FeatureMap& a, const FeatureMap& b) {
  for (std::size_t i = 0; i < a.values.size(); ++i)
    if ((a.values[i] > 0) != (b.values[i] > 0)) return false;
  return true;
}
}  // namespace detail

// Central differences on `samples` seeded entries drawn from the gradient's
// support (entries at least 1% of the largest magnitude, topped up with smaller
// nonzero ones when that is too few). Discrete choices are
// frozen at x. Probes that flip a leaky-ReLU sign are non-differentiable points
// and are replaced by fresh draws. A zero gradient is checked on uniform draws
// with absolute error.
inline GradCheckReport grad_check(const Detector& det, const Image& x, const LossSpec& spec, int samples, double eps,
                                  double tol, std::uint64_t seed) {
  if (!(eps > 0)) throw std::invalid_argument("grad_check: eps must be > 0");
  if (samples < 1) throw std::invalid_argument("grad_check: samples must be >= 1");
  const Activations base = det.run(x);
  const DetectionOutput out = det.decode(base);
  const LossSpec frozen = freeze(spec, out);
  const InputGradient g = input_gradient(det, x, base, out, frozen);
  double gmax = 0;
  for (double v : g.grad) gmax = std::max(gmax, std::abs(v));
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < g.grad.size(); ++i)
    if (std::abs(g.grad[i]) >= 1e-2 * gmax) support.push_back(i);

  Rng rng(derive_seed(seed, 0x6C));
  std::vector<std::size_t> order = support;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  if (gmax > 0 && order.size() < static_cast<std::size_t>(samples)) {
    // small support: top up with the remaining nonzero entries, largest first
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < g.grad.size(); ++i)
      if (g.grad[i] != 0 && std::abs(g.grad[i]) < 1e-2 * gmax) rest.push_back(i);
    std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return std::abs(g.grad[a]) > std::abs(g.grad[b]); });
    order.insert(order.end(), rest.begin(), rest.end());
  }

  GradCheckReport rep;
  rep.flat = gmax == 0;
  // TV reads pixels only, so activation kinks do not matter
  const bool through_net = !std::holds_alternative<TvSpec>(spec.kind);
  auto probe = [&](std::size_t idx, double delta, Activations& acts) {
    Image xp = x;
    xp.data[idx] += delta;
    const int pix = static_cast<int>(idx / Image::kChannels);
    const PixelRect dirty{pix / x.width, pix % x.width, 1, 1};
    acts = det.run_incremental(xp, base, dirty);
    return frozen.scale * evaluate_loss(det.decode(acts), xp, frozen).value;
  };
  for (std::size_t idx : order) {
    if (rep.checked >= samples) break;
    Activations ap, am;
    const double fp = probe(idx, eps, ap);
    const double fm = probe(idx, -eps, am);
    if (through_net && (!detail::same_signs(ap.a1, am.a1) || !detail::same_signs(ap.a2, am.a2) || !detail::same_signs(ap.a1, base.a1) ||
        !detail::same_signs(ap.a2, base.a2))) {
      ++rep.skipped;
      continue;
    }
    const double num = (fp - fm) / (2 * eps);
    const double ana = g.grad[idx];
    const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), rep.flat ? 1.0 : 1e-300});
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
    ++rep.checked;
  }
  rep.pass = rep.checked > 0 && rep.max_rel_error <= tol;
  return rep;
}

struct NamedLoss {
  std::string name;
  LossSpec spec;
};

// The five attack objectives set up on one frame: score, regression, TV over a
// 12x12 block at the target centre, erasure, and the conditional composite.
inline std::vector<NamedLoss> attack_losses(const Detector& det, const Image& x, const BBox& origin, const Vec2& v, double t_iou,
                                            const LossHyper& h = {}) {
  const DetectorConfig& dc = det.config();
  const DetectionOutput out = det.forward(x);
  const BBox bt = find_target_bbox(origin, v, t_iou, dc);
  const FilterResult fr = split(out, bt, origin, dc, v, dc.stride());
  const int side = 12;
  const int top = std::clamp(static_cast<int>(origin.cy()) - side / 2, 0, x.height - side);
  const int left = std::clamp(static_cast<int>(origin.cx()) - side / 2, 0, x.width - side);
  return {
      {"score", {ScoreSpec{{fr.fabricate}, fr.erase, h, {}}}},
      {"regression", {RegressionSpec{{fr.fabricate}, bt, h}}},
      {"tv", {TvSpec{PixelRect{top, left, side, side}}}},
      {"erase", {EraseSpec{disappearance_set(out, origin, dc)}}},
      {"conditional", {ConditionalSpec{fr, bt, h, {}, {}}}},
  };
}

}  // namespace controlloc
