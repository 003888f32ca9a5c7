// targeting.hpp: target fabricated-box search and proposal filtering (fabrication / erasure split)
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "controlloc/detector.hpp"
#include "controlloc/geometry.hpp"
#include "controlloc/scene.hpp"

namespace controlloc {

struct AttackDirection {
  Vec2 v{1, 0};
  AttackGoal goal = AttackGoal::move_in;
};

enum class TargetMode {
  last_above_threshold,  // largest shift still inside the association gate
  literal,               // first shift at or below the gate
};

// Searches k = 0, 1, ... along v. `k_max` bounds the search (typically
// ceil(image diagonal / |v|)).
inline BBox find_target_bbox(const BBox& origin, const Vec2& v, double t_iou, long k_max,
                             TargetMode mode = TargetMode::last_above_threshold) {
  if (v.is_zero() || !std::isfinite(v.dx) || !std::isfinite(v.dy))
    throw std::invalid_argument("find_target_bbox: direction must be finite and non-zero");
  if (!(t_iou > 0 && t_iou < 1)) throw std::invalid_argument("find_target_bbox: T_IOU must lie in (0,1)");
  if (origin.degenerate()) throw std::invalid_argument("find_target_bbox: degenerate origin box");
  for (long k = 1; k <= k_max; ++k) {
    const BBox b = shift(origin, v, k);
    if (iou(b, origin) <= t_iou) return mode == TargetMode::literal ? b : shift(origin, v, k - 1);
  }
  throw std::runtime_error("find_target_bbox: shift cap reached without leaving the association gate");
}

inline long default_k_max(int image_h, int image_w, const Vec2& v) {
  return static_cast<long>(std::ceil(std::hypot(image_h, image_w) / v.norm()));
}

inline BBox find_target_bbox(const BBox& origin, const Vec2& v, double t_iou, const DetectorConfig& cfg,
                             TargetMode mode = TargetMode::last_above_threshold) {
  return find_target_bbox(origin, v, t_iou, default_k_max(cfg.input_height, cfg.input_width, v), mode);
}

struct GridCell {
  int x = 0, y = 0;
  bool operator==(const GridCell&) const = default;
};

// Cell containing pixel (px, py): integer division by the image/feature-map ratio, clamped.
inline GridCell cell_of(const DetectorConfig& cfg, double px, double py) {
  const double scale = static_cast<double>(cfg.input_width) / cfg.grid_width();
  const int gx = static_cast<int>(std::floor(px / scale));
  const int gy = static_cast<int>(std::floor(py / scale));
  return {std::clamp(gx, 0, cfg.grid_width() - 1), std::clamp(gy, 0, cfg.grid_height() - 1)};
}

// Picks the proposal to fabricate. Anchor-based: the anchor of B_t's cell whose
// current decoded box best overlaps B_t. Anchor-free: the single proposal of the
// cell reached after nudging B_t's centre k_s pixels along v.
inline std::size_t cbbox_filter(const DetectionOutput& det, const BBox& target, const DetectorConfig& cfg, const Vec2& v,
                                double k_s) {
  if (cfg.kind == DetectorKind::non_grid) throw std::invalid_argument("cbbox_filter: detector is not grid-based");
  double cx = target.cx(), cy = target.cy();
  if (cfg.kind == DetectorKind::anchor_free) {
    const double n = v.norm();
    if (n == 0) throw std::invalid_argument("cbbox_filter: zero direction");
    cx += k_s * v.dx / n;
    cy += k_s * v.dy / n;
    const GridCell c = cell_of(cfg, cx, cy);
    return proposal_index(cfg, c.x, c.y, 0);
  }
  const GridCell c = cell_of(cfg, cx, cy);
  std::size_t best = proposal_index(cfg, c.x, c.y, 0);
  double best_iou = -1;
  for (std::size_t a = 0; a < cfg.anchors.size(); ++a) {
    const std::size_t idx = proposal_index(cfg, c.x, c.y, static_cast<int>(a));
    const double v_iou = iou(det.proposals[idx].box, target);
    if (v_iou > best_iou) {
      best_iou = v_iou;
      best = idx;
    }
  }
  return best;
}

constexpr double kErasureIou = 0.3;

// Proposals that would still describe the original object.
inline std::vector<std::size_t> erasure_filter(const DetectionOutput& det, const BBox& origin, std::size_t fabricate,
                                               const DetectorConfig& cfg) {
  if (cfg.kind == DetectorKind::non_grid) throw std::invalid_argument("erasure_filter: detector is not grid-based");
  if (fabricate >= det.proposals.size()) throw std::out_of_range("erasure_filter: fabrication index out of range");
  std::vector<char> pick(det.proposals.size(), 0);
  if (cfg.kind == DetectorKind::anchor_based) {
    const double s = cfg.stride();
    for (int cy = 0; cy < cfg.grid_height(); ++cy)
      for (int cx = 0; cx < cfg.grid_width(); ++cx) {
        const double px = (cx + 0.5) * s, py = (cy + 0.5) * s;
        if (px < origin.x1 || px > origin.x2 || py < origin.y1 || py > origin.y2) continue;
        for (std::size_t a = 0; a < cfg.anchors.size(); ++a) pick[proposal_index(cfg, cx, cy, static_cast<int>(a))] = 1;
      }
  }
  for (std::size_t i = 0; i < det.proposals.size(); ++i) {
    const Proposal& p = det.proposals[i];
    if (p.confidence > cfg.score_threshold && iou(p.box, origin) > kErasureIou) pick[i] = 1;
  }
  pick[fabricate] = 0;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pick.size(); ++i)
    if (pick[i]) out.push_back(i);
  return out;
}

struct FilterResult {
  std::size_t fabricate = 0;       // B_f
  std::vector<std::size_t> erase;  // B_e
};

inline FilterResult split(const DetectionOutput& det, const BBox& target, const BBox& origin, const DetectorConfig& cfg,
                          const Vec2& v, double k_s) {
  if (cfg.kind == DetectorKind::non_grid)
    throw std::invalid_argument("split: non-grid detectors need bipartite matching, which is not supported");
  FilterResult r;
  r.fabricate = cbbox_filter(det, target, cfg, v, k_s);
  r.erase = erasure_filter(det, origin, r.fabricate, cfg);
  return r;
}

}  // namespace controlloc
