// losses.hpp: attack objectives over detector proposals, with analytic gradients
//
// Every loss returns its value plus d(loss)/d(box corners, confidence) for the
// proposals it reads. Discrete choices (the score indicator, the conditional
// branch, NMS membership) are treated as constants of the forward pass.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "controlloc/detector.hpp"
#include "controlloc/geometry.hpp"
#include "controlloc/imaging.hpp"
#include "controlloc/targeting.hpp"

namespace controlloc {

struct LossHyper {
  double mu1 = 1.0;          // fabrication weight inside the score loss
  double beta = 0.01;        // centre-distance weight inside the regression loss
  double mu2 = 0.1;          // total-variation weight
  double t_conf = 0.25;      // score threshold for the erasure indicator
  double iou_floor = 1e-6;   // clamp inside -log(IOU)

  void validate() const {
    if (mu1 < 0 || beta < 0 || mu2 < 0 || t_conf < 0) throw std::invalid_argument("LossHyper: weights must be non-negative");
    if (!(iou_floor > 0 && iou_floor <= 1e-3)) throw std::invalid_argument("LossHyper: iou_floor must lie in (0, 1e-3]");
  }
};

struct ProposalLoss {
  double value = 0;
  std::vector<ProposalGrad> grads;
};

namespace detail {
inline const Proposal& proposal_at(const std::vector<Proposal>& ps, std::size_t i) {
  if (i >= ps.size()) throw std::out_of_range("loss references a proposal absent from the forward pass");
  return ps[i];
}
}  // namespace detail

struct ScoreLoss {
  double total = 0, erase = 0, fabricate = 0;  // L_s, L_e, L_f
  std::vector<ProposalGrad> grads;
};

// L_e = mean over B_e of 1[conf > T_conf] conf^2, L_f = mean over B_f of (1-conf)^2,
// L_s = L_e + mu1 L_f. `active`, when given, overrides the indicator per B_e entry.
inline ScoreLoss score_loss(const std::vector<Proposal>& ps, std::span<const std::size_t> erase,
                            std::span<const std::size_t> fabricate, const LossHyper& h,
                            const std::vector<char>* active = nullptr) {
  if (fabricate.empty()) throw std::invalid_argument("score_loss: empty fabrication set");
  if (active && active->size() != erase.size()) throw std::invalid_argument("score_loss: indicator mask size mismatch");
  ScoreLoss out;
  if (!erase.empty()) {
    const double inv = 1.0 / static_cast<double>(erase.size());
    for (std::size_t k = 0; k < erase.size(); ++k) {
      const Proposal& p = detail::proposal_at(ps, erase[k]);
      const bool on = active ? (*active)[k] != 0 : p.confidence > h.t_conf;
      if (!on) continue;
      out.erase += inv * p.confidence * p.confidence;
      ProposalGrad g;
      g.index = erase[k];
      g.d_conf = inv * 2.0 * p.confidence;
      out.grads.push_back(g);
    }
  }
  const double inv_f = 1.0 / static_cast<double>(fabricate.size());
  for (std::size_t i : fabricate) {
    const Proposal& p = detail::proposal_at(ps, i);
    const double d = 1.0 - p.confidence;
    out.fabricate += inv_f * d * d;
    ProposalGrad g;
    g.index = i;
    g.d_conf = -h.mu1 * inv_f * 2.0 * d;
    out.grads.push_back(g);
  }
  out.total = out.erase + h.mu1 * out.fabricate;
  return out;
}

struct RegressionLoss {
  double total = 0, iou_term = 0, center_term = 0;  // L_r, L_IOU, L_center
  std::vector<ProposalGrad> grads;
};

inline RegressionLoss regression_loss(const std::vector<Proposal>& ps, std::span<const std::size_t> fabricate,
                                      const BBox& target, const LossHyper& h) {
  if (fabricate.empty()) throw std::invalid_argument("regression_loss: empty fabrication set");
  RegressionLoss out;
  const double inv = 1.0 / static_cast<double>(fabricate.size());
  for (std::size_t i : fabricate) {
    const Proposal& p = detail::proposal_at(ps, i);
    ProposalGrad g;
    g.index = i;
    const double v = iou(p.box, target);
    if (v > h.iou_floor) {
      out.iou_term += -inv * std::log(v);
      const auto dv = iou_grad(p.box, target);
      for (int k = 0; k < 4; ++k) g.d_box[static_cast<std::size_t>(k)] += -inv * dv[static_cast<std::size_t>(k)] / v;
    } else {
      out.iou_term += -inv * std::log(h.iou_floor);
    }
    const double ex = p.box.cx() - target.cx(), ey = p.box.cy() - target.cy();
    out.center_term += inv * (ex * ex + ey * ey);
    // d cx / d x1 = d cx / d x2 = 1/2
    const double gx = h.beta * inv * ex, gy = h.beta * inv * ey;
    g.d_box[0] += gx;
    g.d_box[2] += gx;
    g.d_box[1] += gy;
    g.d_box[3] += gy;
    out.grads.push_back(g);
  }
  out.total = out.iou_term + h.beta * out.center_term;
  return out;
}

constexpr double kTvSmoothing = 1e-8;

struct TvLoss {
  double value = 0;
  std::vector<double> grad;  // same layout as the image data
};

// Isotropic TV over interior pixels (i < h-1, j < w-1) of the rectangle `r`,
// per channel, smoothed by delta so it stays differentiable at zero.
inline TvLoss tv_loss(const Image& img, const PixelRect& r) {
  if (r.height < 2 || r.width < 2) throw std::invalid_argument("tv_loss: patch must be at least 2x2");
  if (!img.rect().contains(r)) throw std::invalid_argument("tv_loss: rectangle outside image");
  TvLoss out;
  out.grad.assign(img.data.size(), 0.0);
  const double d2 = kTvSmoothing * kTvSmoothing;
  for (int i = r.top; i < r.bottom() - 1; ++i)
    for (int j = r.left; j < r.right() - 1; ++j)
      for (int c = 0; c < Image::kChannels; ++c) {
        const double p = img.at(i, j, c);
        const double dv = img.at(i + 1, j, c) - p;
        const double dh = img.at(i, j + 1, c) - p;
        const double s = std::sqrt(dv * dv + dh * dh + d2);
        out.value += s;
        out.grad[img.index(i + 1, j, c)] += dv / s;
        out.grad[img.index(i, j + 1, c)] += dh / s;
        out.grad[img.index(i, j, c)] -= (dv + dh) / s;
      }
  return out;
}

inline TvLoss tv_loss(const Image& patch) { return tv_loss(patch, patch.rect()); }

// Disappearance objective: mean of conf^2 over B'_e (0 when empty).
inline ProposalLoss erase_loss(const std::vector<Proposal>& ps, std::span<const std::size_t> set) {
  ProposalLoss out;
  if (set.empty()) return out;
  const double inv = 1.0 / static_cast<double>(set.size());
  for (std::size_t i : set) {
    const Proposal& p = detail::proposal_at(ps, i);
    out.value += inv * p.confidence * p.confidence;
    ProposalGrad g;
    g.index = i;
    g.d_conf = inv * 2.0 * p.confidence;
    out.grads.push_back(g);
  }
  return out;
}

// Proposals the disappearance patch must suppress: live detections of the object.
inline std::vector<std::size_t> disappearance_set(const DetectionOutput& det, const BBox& origin, const DetectorConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < det.proposals.size(); ++i) {
    const Proposal& p = det.proposals[i];
    if (p.confidence > cfg.score_threshold && iou(p.box, origin) > kErasureIou) out.push_back(i);
  }
  return out;
}

enum class Branch { score, regression };

inline const char* to_string(Branch b) { return b == Branch::score ? "score" : "regression"; }

struct LossBreakdown {
  double score = 0, erase = 0, fabricate = 0;             // L_s, L_e, L_f
  double regression = 0, iou_term = 0, center_term = 0;   // L_r, L_IOU, L_center
  double tv = 0;                                          // L_TV
  double adv = 0;                                         // L_adv
  Branch branch = Branch::score;
};

// Regression branch iff B_f survives NMS and no B_e index does.
inline Branch select_branch(const DetectionOutput& det, const FilterResult& fr) {
  if (!det.survives(fr.fabricate)) return Branch::score;
  for (std::size_t i : fr.erase)
    if (det.survives(i)) return Branch::score;
  return Branch::regression;
}

struct ConditionalLoss {
  LossBreakdown breakdown;
  std::vector<ProposalGrad> grads;  // gradient of L_adv only
};

// `frozen` pins the branch (and `active` the score indicator) for finite-difference checks.
inline ConditionalLoss conditional_adv_loss(const DetectionOutput& det, const FilterResult& fr, const BBox& target,
                                            const LossHyper& h, std::optional<Branch> frozen = std::nullopt,
                                            const std::vector<char>* active = nullptr) {
  const std::size_t fab[1] = {fr.fabricate};
  const ScoreLoss s = score_loss(det.proposals, fr.erase, fab, h, active);
  const RegressionLoss r = regression_loss(det.proposals, fab, target, h);
  ConditionalLoss out;
  LossBreakdown& b = out.breakdown;
  b.score = s.total;
  b.erase = s.erase;
  b.fabricate = s.fabricate;
  b.regression = r.total;
  b.iou_term = r.iou_term;
  b.center_term = r.center_term;
  b.branch = frozen ? *frozen : select_branch(det, fr);
  if (b.branch == Branch::regression) {
    b.adv = r.total;
    out.grads = r.grads;
  } else {
    b.adv = s.total;
    out.grads = s.grads;
  }
  return out;
}

// Fixed-weight baseline: L_adv = L_r + eta L_s on every iteration.
inline ConditionalLoss slrm_adv_loss(const DetectionOutput& det, const FilterResult& fr, const BBox& target, const LossHyper& h,
                                     double eta, const std::vector<char>* active = nullptr) {
  const std::size_t fab[1] = {fr.fabricate};
  const ScoreLoss s = score_loss(det.proposals, fr.erase, fab, h, active);
  const RegressionLoss r = regression_loss(det.proposals, fab, target, h);
  ConditionalLoss out;
  LossBreakdown& b = out.breakdown;
  b.score = s.total;
  b.erase = s.erase;
  b.fabricate = s.fabricate;
  b.regression = r.total;
  b.iou_term = r.iou_term;
  b.center_term = r.center_term;
  b.branch = select_branch(det, fr);
  b.adv = r.total + eta * s.total;
  out.grads = r.grads;
  for (ProposalGrad g : s.grads) {
    for (double& v : g.d_box) v *= eta;
    g.d_conf *= eta;
    out.grads.push_back(g);
  }
  return out;
}

// Converts proposal-level gradients into the sparse head-gradient list the detector consumes.
inline std::vector<std::pair<std::size_t, std::vector<double>>> to_head_grads(const DetectorConfig& cfg, const DetectionOutput& det,
                                                                             const std::vector<ProposalGrad>& grads) {
  std::vector<std::pair<std::size_t, std::vector<double>>> out;
  out.reserve(grads.size());
  for (const ProposalGrad& g : grads) {
    const Proposal& p = detail::proposal_at(det.proposals, g.index);
    out.emplace_back(g.index, proposal_raw_grad(cfg, det.raw_of(g.index), p, g));
  }
  return out;
}

// Per-iteration loss log.
inline void write_loss_log_header(std::ostream& os) {
  os << "iteration,branch,L_adv,L_s,L_e,L_f,L_r,L_IOU,L_center,L_TV\n";
}
inline void write_loss_log_row(std::ostream& os, int iteration, const LossBreakdown& b) {
  os << iteration << ',' << to_string(b.branch) << ',' << b.adv << ',' << b.score << ',' << b.erase << ',' << b.fabricate
     << ',' << b.regression << ',' << b.iou_term << ',' << b.center_term << ',' << b.tv << '\n';
}

}  // namespace controlloc
