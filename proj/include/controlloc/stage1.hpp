// stage1.hpp: patch location preselection by joint optimization of a perturbation
// and a soft mask, followed by a sliding-window argmax inside the allowed region
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "controlloc/attack.hpp"
#include "controlloc/detector.hpp"
#include "controlloc/imaging.hpp"
#include "controlloc/losses.hpp"
#include "controlloc/targeting.hpp"

namespace controlloc {

struct Stage1Config {
  double alpha = 1.0;  // cluster-loss weight (signed)
  double gamma = 1.0;  // tanh sharpness
  int s = 2;           // mask granularity in pixels
  int win_h = 6, win_w = 6;
  int iterations = 20;
  AdamParams adam_p{0.01, 0.9, 0.999, 1e-8};
  AdamParams adam_m{0.1, 0.9, 0.999, 1e-8};
  LossHyper hyper;
  double t_iou = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (s < 1) throw std::invalid_argument("Stage1Config: s must be >= 1");
    if (iterations < 1) throw std::invalid_argument("Stage1Config: iterations must be >= 1");
    if (win_h < 1 || win_w < 1) throw std::invalid_argument("Stage1Config: window must be non-empty");
    if (!(gamma > 0)) throw std::invalid_argument("Stage1Config: gamma must be > 0");
    hyper.validate();
  }
};

constexpr double kFrozenMask = -10.0;

// m lives on a ceil(h/s) x ceil(w/s) grid.
struct MaskParams {
  int s = 1;
  Plane m;
};

inline Plane mask_from_params(const MaskParams& p, double gamma, int h, int w) {
  Plane M(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) M.at(y, x) = 0.5 * std::tanh(gamma * p.m.at(y / p.s, x / p.s)) + 0.5;
  return M;
}

// Mean over every dh x dw window (valid extent).
inline Plane window_scores(const Plane& M, int dh, int dw) {
  if (dh < 1 || dw < 1 || dh > M.height || dw > M.width) throw std::invalid_argument("window_scores: window larger than mask");
  Plane out(M.height - dh + 1, M.width - dw + 1);
  const double inv = 1.0 / (static_cast<double>(dh) * dw);
  for (int i = 0; i < out.height; ++i)
    for (int j = 0; j < out.width; ++j) {
      double acc = 0;
      for (int a = 0; a < dh; ++a)
        for (int b = 0; b < dw; ++b) acc += M.at(i + a, j + b);
      out.at(i, j) = acc * inv;
    }
  return out;
}

struct ClusterLoss {
  double value = 0;
  Plane grad_mprime;  // d L / d M'
};

// |max(M') - sum(M') / (h w)|, with M' zero-padded to the h x w mask extent.
inline ClusterLoss cluster_loss(const Plane& Mp, int h, int w) {
  if (Mp.height < 1 || Mp.width < 1 || Mp.height > h || Mp.width > w) throw std::invalid_argument("cluster_loss: bad extents");
  int bi = 0, bj = 0;
  double mx = Mp.at(0, 0), sum = 0;
  for (int i = 0; i < Mp.height; ++i)
    for (int j = 0; j < Mp.width; ++j) {
      const double v = Mp.at(i, j);
      sum += v;
      if (v > mx) {
        mx = v;
        bi = i;
        bj = j;
      }
    }
  const double hw = static_cast<double>(h) * w;
  const double d = mx - sum / hw;
  ClusterLoss out;
  out.value = std::abs(d);
  const double sg = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
  out.grad_mprime = Plane(Mp.height, Mp.width, -sg / hw);
  out.grad_mprime.at(bi, bj) += sg;
  return out;
}

// Adjoint of window_scores.
inline Plane window_scores_adjoint(const Plane& g, int dh, int dw, int h, int w) {
  Plane out(h, w);
  const double inv = 1.0 / (static_cast<double>(dh) * dw);
  for (int i = 0; i < g.height; ++i)
    for (int j = 0; j < g.width; ++j) {
      const double v = g.at(i, j) * inv;
      if (v == 0) continue;
      for (int a = 0; a < dh; ++a)
        for (int b = 0; b < dw; ++b) out.at(i + a, j + b) += v;
    }
  return out;
}

struct WindowPick {
  int top = 0, left = 0;
  double score = 0;
};

// Highest-scoring window fully inside `region`; ties go to the smallest (row, col).
inline WindowPick best_window(const Plane& Mp, const PixelRect& region, int dh, int dw) {
  if (region.height < dh || region.width < dw) throw std::invalid_argument("best_window: region smaller than window");
  WindowPick best{-1, -1, 0};
  for (int i = region.top; i + dh <= region.bottom(); ++i)
    for (int j = region.left; j + dw <= region.right(); ++j) {
      if (i < 0 || j < 0 || i >= Mp.height || j >= Mp.width) continue;
      const double v = Mp.at(i, j);
      if (best.top < 0 || v > best.score) best = {i, j, v};
    }
  if (best.top < 0) throw std::invalid_argument("best_window: region outside the image");
  return best;
}

struct Stage1Result {
  int top = 0, left = 0;  // absolute image coordinates
  Plane M, Mprime;
  std::vector<double> loss_log;  // L_adv + alpha L_M' per iteration
};

inline Stage1Result preselect_location(const Detector& det, const Image& frame, const BBox& origin, const AttackDirection& dir,
                                       const PixelRect& region, const Stage1Config& cfg) {
  cfg.validate();
  const int h = frame.height, w = frame.width;
  const PixelRect reg = intersect(region, frame.rect());
  if (reg.height < cfg.win_h || reg.width < cfg.win_w) throw std::invalid_argument("preselect_location: region smaller than window");
  const DetectorConfig& dc = det.config();

  MaskParams mp{cfg.s, Plane((h + cfg.s - 1) / cfg.s, (w + cfg.s - 1) / cfg.s, kFrozenMask)};
  std::vector<char> live(mp.m.values.size(), 0);
  for (int by = 0; by < mp.m.height; ++by)
    for (int bx = 0; bx < mp.m.width; ++bx) {
      const PixelRect blk{by * cfg.s, bx * cfg.s, cfg.s, cfg.s};
      if (reg.contains(blk)) {
        mp.m.at(by, bx) = 0.0;
        live[static_cast<std::size_t>(by) * mp.m.width + bx] = 1;
      }
    }

  Image p = frame;
  AdamState adam_p(p.data.size()), adam_m(mp.m.values.size());
  const Activations base = det.run(frame);
  const BBox bt = find_target_bbox(origin, dir.v, cfg.t_iou, dc);
  Stage1Result res;
  std::vector<double> gm(mp.m.values.size());
  for (int it = 0; it < cfg.iterations; ++it) {
    const Plane M = mask_from_params(mp, cfg.gamma, h, w);
    const Image xp = apply_soft_mask(frame, p, M);
    const Activations acts = det.run_incremental(xp, base, reg);
    const DetectionOutput out = det.decode(acts);
    const FilterResult fr = split(out, bt, origin, dc, dir.v, dc.stride());
    const ConditionalLoss adv = conditional_adv_loss(out, fr, bt, cfg.hyper);
    const std::vector<double> gx = det.backward_to_input(acts, to_head_grads(dc, out, adv.grads), reg);

    const Plane Mp = window_scores(M, cfg.win_h, cfg.win_w);
    const ClusterLoss cl = cluster_loss(Mp, h, w);
    const Plane gM_cluster = window_scores_adjoint(cl.grad_mprime, cfg.win_h, cfg.win_w, h, w);
    res.loss_log.push_back(adv.breakdown.adv + cfg.alpha * cl.value);

    std::vector<double> gp(p.data.size(), 0.0);
    std::fill(gm.begin(), gm.end(), 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t bi = static_cast<std::size_t>(y / cfg.s) * mp.m.width + static_cast<std::size_t>(x / cfg.s);
        if (!live[bi]) continue;
        const double mv = M.at(y, x);
        double gMv = cfg.alpha * gM_cluster.at(y, x);
        for (int c = 0; c < Image::kChannels; ++c) {
          const std::size_t k = frame.index(y, x, c);
          gp[k] = gx[k] * mv;
          gMv += gx[k] * (p.data[k] - frame.data[k]);
        }
        // dM/dm = gamma/2 (1 - tanh^2) = 2 gamma M (1 - M)
        gm[bi] += gMv * 2.0 * cfg.gamma * mv * (1.0 - mv);
      }
    adam_step(adam_p, p.data, gp, cfg.adam_p);
    adam_step(adam_m, mp.m.values, gm, cfg.adam_m, -1e300, 1e300);
    for (std::size_t i = 0; i < live.size(); ++i)
      if (!live[i]) mp.m.values[i] = kFrozenMask;
  }
  res.M = mask_from_params(mp, cfg.gamma, h, w);
  res.Mprime = window_scores(res.M, cfg.win_h, cfg.win_w);
  const WindowPick pick = best_window(res.Mprime, reg, cfg.win_h, cfg.win_w);
  res.top = pick.top;
  res.left = pick.left;
  return res;
}

// Window-centre displacement between consecutive per-frame selections.
inline std::vector<double> location_stability(const Detector& det, const std::vector<Image>& frames, const std::vector<BBox>& boxes,
                                              const std::vector<PixelRect>& regions, const AttackDirection& dir,
                                              const Stage1Config& cfg) {
  if (frames.size() < 2 || boxes.size() != frames.size() || regions.size() != frames.size())
    throw std::invalid_argument("location_stability: need >= 2 frames with matching boxes and regions");
  std::vector<double> out;
  double py = 0, px = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Stage1Result r = preselect_location(det, frames[f], boxes[f], dir, regions[f], cfg);
    const double cy = r.top + 0.5 * cfg.win_h, cx = r.left + 0.5 * cfg.win_w;
    if (f > 0) out.push_back(std::hypot(cy - py, cx - px));
    py = cy;
    px = cx;
  }
  return out;
}

}  // namespace controlloc
