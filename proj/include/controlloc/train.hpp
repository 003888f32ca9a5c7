// train.hpp: seeded, single-threaded training of the toy detector on labelled frames
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "controlloc/detector.hpp"
#include "controlloc/scene.hpp"

namespace controlloc {

struct TrainConfig {
  int epochs = 20;
  int batch = 8;
  double lr = 2e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double negative_weight = 0.05;
  double box_weight = 1.0;
  double label_smoothing = 0.02;  // objectness/class targets become eps/2 and 1 - eps/2
  std::uint64_t seed = 1;
};

namespace detail {

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double bce(double t, double y) {
  // log(1+exp(t)) - y t, written stably
  const double sp = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
  return sp - y * t;
}

struct AssignedTarget {
  int cell_x, cell_y, anchor, class_id;
  double tx, ty, tw, th;
};

inline std::vector<AssignedTarget> assign_targets(const DetectorConfig& cfg, const std::vector<GroundTruth>& objects) {
  std::vector<AssignedTarget> out;
  const double s = cfg.stride();
  for (const GroundTruth& gt : objects) {
    const BBox& b = gt.box;
    if (b.degenerate() || b.x1 < 0 || b.y1 < 0 || b.x2 > cfg.input_width || b.y2 > cfg.input_height)
      throw std::invalid_argument("train: ground-truth box out of bounds");
    if (gt.class_id < 0 || gt.class_id >= cfg.num_classes) throw std::invalid_argument("train: class id out of range");
    const double gx = b.cx() / s, gy = b.cy() / s;
    const int cx = std::clamp(static_cast<int>(gx), 0, cfg.grid_width() - 1);
    const int cy = std::clamp(static_cast<int>(gy), 0, cfg.grid_height() - 1);
    int best = 0;
    double best_iou = -1;
    for (std::size_t a = 0; a < cfg.anchors.size(); ++a) {
      const BBox ab = BBox::from_center(b.cx(), b.cy(), cfg.anchors[a].width, cfg.anchors[a].height);
      const double v = iou(ab, b);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(a);
      }
    }
    double fx = gx - cx, fy = gy - cy;
    if (cfg.kind == DetectorKind::anchor_free) {
      fx = (fx + 0.5) / 2.0;
      fy = (fy + 0.5) / 2.0;
    }
    const Anchor& an = cfg.anchors[static_cast<std::size_t>(best)];
    out.push_back({cx, cy, best, gt.class_id, logit(std::clamp(fx, 0.02, 0.98)), logit(std::clamp(fy, 0.02, 0.98)),
                   std::clamp(std::log(b.width() / an.width), -kSizeExpClamp + 0.1, kSizeExpClamp - 0.1),
                   std::clamp(std::log(b.height() / an.height), -kSizeExpClamp + 0.1, kSizeExpClamp - 0.1)});
  }
  return out;
}

}  // namespace detail

// Per-image training loss; writes d(loss)/d(head) into `g_head` when non-null.
inline double detection_loss(const DetectorConfig& cfg, const FeatureMap& head, const std::vector<GroundTruth>& objects,
                             const TrainConfig& tc, FeatureMap* g_head) {
  const auto targets = detail::assign_targets(cfg, objects);
  const int vpa = cfg.values_per_anchor();
  const std::size_t na = cfg.anchors.size();
  std::vector<char> positive(cfg.proposal_count(), 0);
  for (const auto& t : targets) positive[proposal_index(cfg, t.cell_x, t.cell_y, t.anchor)] = 1;
  const double y_neg = 0.5 * tc.label_smoothing, y_pos = 1.0 - y_neg;
  double loss = 0;
  for (int cy = 0; cy < cfg.grid_height(); ++cy)
    for (int cx = 0; cx < cfg.grid_width(); ++cx)
      for (std::size_t a = 0; a < na; ++a) {
        if (positive[proposal_index(cfg, cx, cy, static_cast<int>(a))]) continue;
        const double to = head.at(cy, cx)[a * static_cast<std::size_t>(vpa) + 4];
        loss += tc.negative_weight * detail::bce(to, y_neg);
        if (g_head) g_head->at(cy, cx)[a * static_cast<std::size_t>(vpa) + 4] += tc.negative_weight * (sigmoid(to) - y_neg);
      }
  for (const auto& t : targets) {
    const double* h = head.at(t.cell_y, t.cell_x) + static_cast<std::size_t>(t.anchor) * static_cast<std::size_t>(vpa);
    double* g = g_head ? g_head->at(t.cell_y, t.cell_x) + static_cast<std::size_t>(t.anchor) * static_cast<std::size_t>(vpa) : nullptr;
    const double goal[4] = {t.tx, t.ty, t.tw, t.th};
    for (int k = 0; k < 4; ++k) {
      const double d = h[k] - goal[k];
      loss += tc.box_weight * d * d;
      if (g) g[k] += 2.0 * tc.box_weight * d;
    }
    loss += detail::bce(h[4], y_pos);
    if (g) g[4] += sigmoid(h[4]) - y_pos;
    for (int c = 0; c < cfg.num_classes; ++c) {
      const double y = c == t.class_id ? y_pos : y_neg;
      loss += detail::bce(h[5 + c], y);
      if (g) g[5 + c] += sigmoid(h[5 + c]) - y;
    }
  }
  return loss;
}

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-image loss; entry 0 is before any update
};

// Mini-batch Adam over the corpus. Deterministic given (corpus, config, seed).
inline DetectorWeights train(const std::vector<LabeledImage>& corpus, const DetectorConfig& cfg, const TrainConfig& tc,
                             TrainReport* report = nullptr,
                             const std::function<void(int, double)>& on_epoch = {}) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  for (const LabeledImage& li : corpus) {
    if (li.image.height != cfg.input_height || li.image.width != cfg.input_width)
      throw std::invalid_argument("train: image size does not match config");
    detail::assign_targets(cfg, li.objects);
  }
  Detector det(cfg, DetectorWeights::random(cfg, tc.seed));
  DetectorWeights m = DetectorWeights::zeros(cfg), v = DetectorWeights::zeros(cfg);
  Rng rng(derive_seed(tc.seed, 0x7EA1));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;

  auto mean_loss = [&]() {
    double total = 0;
    for (const LabeledImage& li : corpus) total += detection_loss(cfg, det.run(li.image).head, li.objects, tc, nullptr);
    return total / static_cast<double>(corpus.size());
  };
  if (report) report->epoch_loss.push_back(mean_loss());

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_total = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(tc.batch)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(tc.batch));
      DetectorWeights grads = DetectorWeights::zeros(cfg);
      for (std::size_t k = b0; k < b1; ++k) {
        const LabeledImage& li = corpus[order[k]];
        const Activations act = det.run(li.image);
        FeatureMap g_head(act.head.height, act.head.width, act.head.channels);
        epoch_total += detection_loss(cfg, act.head, li.objects, tc, &g_head);
        det.backward_weights(act, g_head, grads);
      }
      ++step;
      const double inv_n = 1.0 / static_cast<double>(b1 - b0);
      const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
      auto wl = det.mutable_weights().layers();
      auto gl = grads.layers();
      auto ml = m.layers();
      auto vl = v.layers();
      for (std::size_t l = 0; l < wl.size(); ++l) {
        auto update = [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>& mm, std::vector<double>& vv) {
          for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i] * inv_n;
            mm[i] = tc.beta1 * mm[i] + (1 - tc.beta1) * gi;
            vv[i] = tc.beta2 * vv[i] + (1 - tc.beta2) * gi * gi;
            w[i] -= tc.lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + tc.eps);
          }
        };
        update(wl[l]->weights, gl[l]->weights, ml[l]->weights, vl[l]->weights);
        update(wl[l]->bias, gl[l]->bias, ml[l]->bias, vl[l]->bias);
      }
    }
    const double mean = epoch_total / static_cast<double>(corpus.size());
    if (report) report->epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  DetectorWeights out = det.weights();
  out.round_to_float();
  return out;
}

}  // namespace controlloc
