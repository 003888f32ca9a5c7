// shared helpers for the unit tests
#pragma once

#include <vector>

#include "controlloc/detector.hpp"
#include "controlloc/metrics.hpp"
#include "controlloc/scene.hpp"
#include "controlloc/train.hpp"

namespace testsupport {

using namespace controlloc;

// Every proposal decoded from all-zero head values: anchor-sized boxes at cell centres, conf 0.25.
inline DetectionOutput zero_output(const DetectorConfig& cfg) {
  DetectionOutput out;
  out.values_per_anchor = cfg.values_per_anchor();
  out.num_classes = cfg.num_classes;
  const std::vector<double> t(static_cast<std::size_t>(cfg.values_per_anchor()), 0.0);
  for (int y = 0; y < cfg.grid_height(); ++y)
    for (int x = 0; x < cfg.grid_width(); ++x)
      for (std::size_t a = 0; a < cfg.anchors.size(); ++a) {
        out.proposals.push_back(decode_proposal(cfg, t, x, y, static_cast<int>(a)));
        out.raw.insert(out.raw.end(), t.begin(), t.end());
        out.class_scores.insert(out.class_scores.end(), static_cast<std::size_t>(cfg.num_classes), 0.5);
      }
  return out;
}

inline Proposal proposal(const BBox& b, double conf) {
  Proposal p;
  p.box = b;
  p.confidence = conf;
  p.objectness = conf;
  p.class_score = 1;
  return p;
}

// Small detector trained once per test process; good enough for pipeline tests.
inline const Detector& trained_detector() {
  static const Detector det = [] {
    const DetectorConfig cfg;
    TrainConfig tc;
    tc.epochs = 12;
    return Detector(cfg, train(make_corpus(SceneSpec{}, 40, 3, 11), cfg, tc));
  }();
  return det;
}

}  // namespace testsupport
