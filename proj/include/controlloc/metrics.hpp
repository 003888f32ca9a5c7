// metrics.hpp: average precision (all-point interpolation)
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "controlloc/detector.hpp"
#include "controlloc/geometry.hpp"
#include "controlloc/scene.hpp"

namespace controlloc {

struct ImageDetections {
  std::vector<ScoredBox> detections;  // post-NMS
  std::vector<GroundTruth> truth;
};

inline std::vector<ScoredBox> kept_boxes(const DetectionOutput& d) {
  std::vector<ScoredBox> out;
  for (std::size_t i : d.kept) out.push_back({d.proposals[i].box, d.proposals[i].confidence, d.proposals[i].class_id});
  return out;
}

// Single-class AP at the given IOU. Detections are greedily matched to unmatched
// ground truth in descending confidence order; precision is made monotone and
// integrated over every recall step.
inline double average_precision(const std::vector<ImageDetections>& images, int class_id, double iou_threshold = 0.5) {
  struct Scored {
    double conf;
    std::size_t image;
    BBox box;
  };
  std::vector<Scored> all;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const GroundTruth& g : images[i].truth)
      if (g.class_id == class_id) ++positives;
    for (const ScoredBox& d : images[i].detections)
      if (d.class_id == class_id) all.push_back({d.confidence, i, d.box});
  }
  if (positives == 0) return 0.0;
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.conf > b.conf; });
  std::vector<std::vector<char>> used(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) used[i].assign(images[i].truth.size(), 0);
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const Scored& s : all) {
    const auto& truth = images[s.image].truth;
    double best = 0;
    std::size_t best_j = truth.size();
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (truth[j].class_id != class_id) continue;
      const double v = iou(s.box, truth[j].box);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < truth.size() && best >= iou_threshold && !used[s.image][best_j]) {
      used[s.image][best_j] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  // all-point interpolation
  std::vector<double> mrec{0.0}, mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0;
  for (std::size_t i = 1; i < mrec.size(); ++i) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  return ap;
}

inline double detector_ap(const Detector& det, const std::vector<LabeledImage>& corpus, int class_id = kVehicleClass) {
  std::vector<ImageDetections> ims;
  for (const LabeledImage& li : corpus) ims.push_back({kept_boxes(det.forward(li.image)), li.objects});
  return average_precision(ims, class_id);
}

}  // namespace controlloc
