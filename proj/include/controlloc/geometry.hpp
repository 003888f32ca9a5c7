// geometry.hpp: axis-aligned box algebra shared by the detector, tracker and attack code
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace controlloc {

// Corner-format box in pixel coordinates, origin at the top-left of the image.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  // Validating constructor: rejects non-finite or non-positive-area boxes.
  static BBox make(double x1, double y1, double x2, double y2) {
    BBox b{x1, y1, x2, y2};
    if (!b.finite() || b.degenerate())
      throw std::invalid_argument("BBox: coordinates must be finite with x1 < x2 and y1 < y2");
    return b;
  }
  static BBox from_center(double cx, double cy, double w, double h) {
    return BBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return degenerate() ? 0.0 : width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool degenerate() const { return !(x1 < x2) || !(y1 < y2); }
  bool finite() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2);
  }
  bool operator==(const BBox&) const = default;
};

struct Vec2 {
  double dx = 0, dy = 0;
  double norm() const { return std::hypot(dx, dy); }
  bool is_zero() const { return dx == 0.0 && dy == 0.0; }
  bool operator==(const Vec2&) const = default;
};

struct Point {
  double x = 0, y = 0;
  bool operator==(const Point&) const = default;
};

struct IouResult {
  double value = 0;
  bool degenerate = false;
};

// IOU that also reports whether either input had zero area.
inline IouResult iou_checked(const BBox& a, const BBox& b) {
  if (a.degenerate() || b.degenerate()) return {0.0, true};
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return {0.0, false};
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return {std::clamp(inter / uni, 0.0, 1.0), false};
}

inline double iou(const BBox& a, const BBox& b) { return iou_checked(a, b).value; }

// d IOU(a, b) / d (a.x1, a.y1, a.x2, a.y2), with b held fixed. Zero where the
// boxes are disjoint or degenerate.
inline std::array<double, 4> iou_grad(const BBox& a, const BBox& b) {
  std::array<double, 4> g{0, 0, 0, 0};
  if (a.degenerate() || b.degenerate()) return g;
  const double lx = std::max(a.x1, b.x1), rx = std::min(a.x2, b.x2);
  const double ty = std::max(a.y1, b.y1), by = std::min(a.y2, b.y2);
  const double iw = rx - lx, ih = by - ty;
  if (iw <= 0 || ih <= 0) return g;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  // partials of the intersection width/height wrt a's coordinates
  const double diw_dx1 = a.x1 > b.x1 ? -1.0 : 0.0;
  const double diw_dx2 = a.x2 < b.x2 ? 1.0 : 0.0;
  const double dih_dy1 = a.y1 > b.y1 ? -1.0 : 0.0;
  const double dih_dy2 = a.y2 < b.y2 ? 1.0 : 0.0;
  const double dI[4] = {diw_dx1 * ih, dih_dy1 * iw, diw_dx2 * ih, dih_dy2 * iw};
  const double dA[4] = {-a.height(), -a.width(), a.height(), a.width()};
  for (int k = 0; k < 4; ++k) {
    const double dU = dA[k] - dI[k];
    g[k] = (dI[k] * uni - inter * dU) / (uni * uni);
  }
  return g;
}

inline Point center(const BBox& b) { return {b.cx(), b.cy()}; }

inline BBox shift(const BBox& b, const Vec2& v, long k) {
  if (k < 0) throw std::invalid_argument("shift: k must be non-negative");
  const double ox = v.dx * static_cast<double>(k), oy = v.dy * static_cast<double>(k);
  return BBox{b.x1 + ox, b.y1 + oy, b.x2 + ox, b.y2 + oy};
}

inline BBox clip(const BBox& b, double width, double height) {
  return BBox{std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
              std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

struct ScoredBox {
  BBox box;
  double confidence = 0;
  int class_id = 0;
};

// Class-aware greedy NMS. Returns indices into `proposals`, highest confidence
// first; equal confidences keep input order.
inline std::vector<std::size_t> nms(const std::vector<ScoredBox>& proposals, double iou_threshold,
                                    double conf_threshold) {
  if (iou_threshold < 0 || iou_threshold > 1 || conf_threshold < 0 || conf_threshold > 1)
    throw std::invalid_argument("nms: thresholds must lie in [0,1]");
  std::vector<std::size_t> order;
  order.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i)
    if (proposals[i].confidence > conf_threshold) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proposals[a].confidence > proposals[b].confidence;
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (proposals[k].class_id == proposals[i].class_id &&
          iou(proposals[k].box, proposals[i].box) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

}  // namespace controlloc
