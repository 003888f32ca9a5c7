// scene.hpp: synthetic driving-scene sequences (target vehicle, distractors, ground truth)
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "controlloc/geometry.hpp"
#include "controlloc/imaging.hpp"
#include "controlloc/random.hpp"

namespace controlloc {

enum class AttackGoal { move_in, move_out };

inline const char* to_string(AttackGoal g) { return g == AttackGoal::move_in ? "move-in" : "move-out"; }
inline AttackGoal goal_from_string(const std::string& s) {
  if (s == "move-in" || s == "move_in") return AttackGoal::move_in;
  if (s == "move-out" || s == "move_out") return AttackGoal::move_out;
  throw std::invalid_argument("unknown goal: " + s);
}

constexpr int kVehicleClass = 0;
constexpr int kDistractorClass = 1;

struct GroundTruth {
  BBox box;
  int class_id = kVehicleClass;
};

struct SceneSpec {
  int frame_height = 128, frame_width = 128;
  int frames = 24;
  int attack_start = 8;
  int attack_length = 8;
  int target_min_w = 22, target_max_w = 30;
  int target_min_h = 16, target_max_h = 22;
  double max_speed = 1.0;  // px/frame, horizontal
  int distractors = 1;
  double patch_area_ratio = 0.12;
  double step = 1.0;  // |v|, pixels per Alg.-1 step

  void validate() const {
    if (!(patch_area_ratio > 0 && patch_area_ratio < 1)) throw std::invalid_argument("SceneSpec: patch ratio must lie in (0,1)");
    if (frames < 2 || attack_start < 0 || attack_length < 1 || attack_start + attack_length >= frames)
      throw std::invalid_argument("SceneSpec: attack window must end before the last frame");
    if (target_min_w < 4 || target_min_h < 4 || target_max_w < target_min_w || target_max_h < target_min_h)
      throw std::invalid_argument("SceneSpec: bad target size range");
    if (target_max_w + 8 > frame_width || target_max_h + 8 > frame_height)
      throw std::invalid_argument("SceneSpec: target does not fit the frame");
    if (distractors < 0 || max_speed < 0 || !(step > 0)) throw std::invalid_argument("SceneSpec: bad motion parameters");
  }
};

struct Scenario {
  std::vector<Image> frames;
  std::vector<BBox> target;                          // B_o per frame
  std::vector<std::vector<GroundTruth>> distractors;  // per frame
  std::vector<PixelRect> region;                     // allowed patch region per frame (lower half of target)
  int attack_start = 0, attack_end = 0;              // inclusive window
  AttackGoal goal = AttackGoal::move_in;
  Vec2 direction{1, 0};
  int patch_h = 6, patch_w = 6;
  std::uint64_t seed = 0;

  int frame_count() const { return static_cast<int>(frames.size()); }
  std::vector<GroundTruth> ground_truth(int f) const {
    std::vector<GroundTruth> g{{target[static_cast<std::size_t>(f)], kVehicleClass}};
    for (const GroundTruth& d : distractors[static_cast<std::size_t>(f)]) g.push_back(d);
    return g;
  }
  void validate() const {
    const int n = frame_count();
    if (n < 2 || static_cast<int>(target.size()) != n || static_cast<int>(region.size()) != n ||
        static_cast<int>(distractors.size()) != n)
      throw std::invalid_argument("Scenario: per-frame arrays must match the frame count");
    if (!(0 <= attack_start && attack_start <= attack_end && attack_end < n))
      throw std::invalid_argument("Scenario: need 0 <= t_start <= t_end < frame count");
    for (int f = 0; f < n; ++f) {
      const BBox& b = target[static_cast<std::size_t>(f)];
      const Image& im = frames[static_cast<std::size_t>(f)];
      if (b.degenerate() || b.x1 < 0 || b.y1 < 0 || b.x2 > im.width || b.y2 > im.height)
        throw std::invalid_argument("Scenario: target box outside frame");
    }
    if (direction.is_zero()) throw std::invalid_argument("Scenario: direction must be non-zero");
  }
};

namespace detail {

struct Rgb {
  double r, g, b;
};

inline void fill_rect(Image& img, int y0, int x0, int y1, int x1, const Rgb& c) {
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x) {
      img.at(y, x, 0) = c.r;
      img.at(y, x, 1) = c.g;
      img.at(y, x, 2) = c.b;
    }
}

// Low-frequency background: bilinear upsampling of a coarse random lattice plus fine grain.
inline Image render_background(int h, int w, Rng& rng) {
  constexpr int kGrid = 5;
  double lattice[kGrid][kGrid][3];
  const double base = rng.uniform(0.35, 0.55);
  for (auto& row : lattice)
    for (auto& cell : row) {
      const double lum = base + rng.uniform(-0.12, 0.12);
      cell[0] = lum + rng.uniform(-0.03, 0.03);
      cell[1] = lum + rng.uniform(-0.03, 0.03);
      cell[2] = lum + rng.uniform(-0.03, 0.03);
    }
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gy = static_cast<double>(y) / (h - 1) * (kGrid - 1);
      const double gx = static_cast<double>(x) / (w - 1) * (kGrid - 1);
      const int iy = std::min(kGrid - 2, static_cast<int>(gy)), ix = std::min(kGrid - 2, static_cast<int>(gx));
      const double fy = gy - iy, fx = gx - ix;
      const double grain = rng.uniform(-0.02, 0.02);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - fy) * ((1 - fx) * lattice[iy][ix][c] + fx * lattice[iy][ix + 1][c]) +
                         fy * ((1 - fx) * lattice[iy + 1][ix][c] + fx * lattice[iy + 1][ix + 1][c]);
        img.at(y, x, c) = std::clamp(v + grain, 0.0, 1.0);
      }
    }
  return img;
}

struct VehicleLook {
  Rgb body, border, window, light;
};

inline VehicleLook random_vehicle_look(Rng& rng) {
  static const Rgb kBodies[] = {{0.80, 0.15, 0.12}, {0.15, 0.25, 0.75}, {0.90, 0.85, 0.80},
                                {0.12, 0.12, 0.14}, {0.85, 0.65, 0.10}, {0.20, 0.55, 0.25}};
  VehicleLook v;
  v.body = kBodies[rng.below(std::size(kBodies))];
  v.border = {0.05, 0.05, 0.05};
  v.window = {0.25, 0.30, 0.38};
  v.light = {0.95, 0.20, 0.15};
  return v;
}

// Rear view of a vehicle: dark outline, rear window band, body, tail lights, bumper.
inline void render_vehicle(Image& img, const BBox& b, const VehicleLook& look) {
  const int x0 = static_cast<int>(b.x1), y0 = static_cast<int>(b.y1);
  const int x1 = static_cast<int>(b.x2), y1 = static_cast<int>(b.y2);
  const int w = x1 - x0, h = y1 - y0;
  fill_rect(img, y0, x0, y1, x1, look.border);
  fill_rect(img, y0 + 2, x0 + 2, y1 - 2, x1 - 2, look.body);
  fill_rect(img, y0 + 3, x0 + 4, y0 + 3 + h / 4, x1 - 4, look.window);
  const int ly = y0 + h / 2;
  fill_rect(img, ly, x0 + 2, ly + 3, x0 + 2 + w / 6, look.light);
  fill_rect(img, ly, x1 - 2 - w / 6, ly + 3, x1 - 2, look.light);
  fill_rect(img, y1 - 4, x0 + 2, y1 - 2, x1 - 2, {0.3, 0.3, 0.3});
}

// Distractor: light checkerboard sign with a thin grey frame.
inline void render_distractor(Image& img, const BBox& b, const Rgb& a, const Rgb& c) {
  const int x0 = static_cast<int>(b.x1), y0 = static_cast<int>(b.y1);
  const int x1 = static_cast<int>(b.x2), y1 = static_cast<int>(b.y2);
  fill_rect(img, y0, x0, y1, x1, {0.6, 0.6, 0.6});
  for (int y = y0 + 1; y < y1 - 1; ++y)
    for (int x = x0 + 1; x < x1 - 1; ++x) {
      const bool odd = (((y - y0) / 3) + ((x - x0) / 3)) % 2 != 0;
      fill_rect(img, y, x, y + 1, x + 1, odd ? a : c);
    }
}

}  // namespace detail

// Deterministic scenario from (spec, seed). Even seeds produce move-in, odd move-out
// scenes unless `goal` is given explicitly.
// `direction_sign` (+1 left-to-right, -1 right-to-left) overrides the drawn direction.
inline Scenario gen_scene(const SceneSpec& spec, std::uint64_t seed, const AttackGoal* goal = nullptr, const int* direction_sign = nullptr) {
  if (direction_sign && *direction_sign != 1 && *direction_sign != -1) throw std::invalid_argument("gen_scene: direction sign must be +1 or -1");
  spec.validate();
  Rng rng(derive_seed(seed, 0x5CE7E));
  Scenario sc;
  sc.seed = seed;
  sc.goal = goal ? *goal : (seed % 2 == 0 ? AttackGoal::move_in : AttackGoal::move_out);
  const int W = spec.frame_width, H = spec.frame_height;
  const int tw = spec.target_min_w + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.target_max_w - spec.target_min_w + 1)));
  const int th = spec.target_min_h + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.target_max_h - spec.target_min_h + 1)));
  const double speed = rng.uniform(-spec.max_speed, spec.max_speed);
  const int travel = static_cast<int>(std::ceil(std::abs(speed) * spec.frames)) + 1;

  // The victim's lane is the horizontal middle of the frame. Move-in pushes the
  // perceived target towards it, move-out pushes it away.
  const double lane_center = 0.5 * W;
  const int margin = 4 + travel;
  int x_start;
  double side;
  if (sc.goal == AttackGoal::move_in) {
    side = rng.uniform() < 0.5 ? -1.0 : 1.0;  // which side of the lane the target sits on
    if (direction_sign) side = -*direction_sign;
    const double off = rng.uniform(0.20, 0.30) * W;
    x_start = static_cast<int>(std::lround(lane_center + side * off - 0.5 * tw));
    sc.direction = Vec2{-side * spec.step, 0};
  } else {
    side = rng.uniform() < 0.5 ? -1.0 : 1.0;  // which way it is pushed out
    if (direction_sign) side = *direction_sign;
    const double off = rng.uniform(-0.06, 0.06) * W;
    x_start = static_cast<int>(std::lround(lane_center + off - 0.5 * tw));
    sc.direction = Vec2{side * spec.step, 0};
  }
  x_start = std::clamp(x_start, margin, W - tw - margin);
  const int y_top = static_cast<int>(std::lround(rng.uniform(0.45, 0.70) * H - 0.5 * th));

  const detail::VehicleLook look = detail::random_vehicle_look(rng);
  std::vector<BBox> dboxes;
  std::vector<double> dspeed;
  std::vector<std::pair<detail::Rgb, detail::Rgb>> dcolors;
  for (int d = 0; d < spec.distractors; ++d) {
    const int dw = 10 + static_cast<int>(rng.below(8)), dh = 10 + static_cast<int>(rng.below(8));
    // distractors live in the upper band, away from the target's rows
    const int dy = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, y_top - dh - 10))));
    const int dx = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(W - dw - 8)));
    dboxes.push_back(BBox{static_cast<double>(dx), static_cast<double>(dy), static_cast<double>(dx + dw), static_cast<double>(dy + dh)});
    dspeed.push_back(rng.uniform(-0.5, 0.5));
    const detail::Rgb a{rng.uniform(0.7, 0.95), rng.uniform(0.7, 0.95), rng.uniform(0.5, 0.7)};
    const detail::Rgb c{rng.uniform(0.55, 0.75), rng.uniform(0.6, 0.8), rng.uniform(0.85, 1.0)};
    dcolors.push_back({a, c});
  }
  Rng bg_rng(derive_seed(seed, 0xB6));
  const Image background = detail::render_background(H, W, bg_rng);

  for (int f = 0; f < spec.frames; ++f) {
    Image img = background;
    std::vector<GroundTruth> ds;
    for (std::size_t d = 0; d < dboxes.size(); ++d) {
      const double ox = std::round(dspeed[d] * f);
      BBox b{dboxes[d].x1 + ox, dboxes[d].y1, dboxes[d].x2 + ox, dboxes[d].y2};
      if (b.x1 < 1 || b.x2 > W - 1) b = dboxes[d];
      detail::render_distractor(img, b, dcolors[d].first, dcolors[d].second);
      ds.push_back({b, kDistractorClass});
    }
    const double x = x_start + std::round(speed * f);
    if (x < 0 || x + tw > W) throw std::invalid_argument("gen_scene: target would exit the frame");
    const BBox tb{x, static_cast<double>(y_top), x + tw, static_cast<double>(y_top + th)};
    detail::render_vehicle(img, tb, look);
    sc.frames.push_back(std::move(img));
    sc.target.push_back(tb);
    sc.distractors.push_back(std::move(ds));
    const int rt = y_top + th / 2;
    sc.region.push_back(PixelRect{rt, static_cast<int>(x), y_top + th - rt, tw});
  }
  sc.attack_start = spec.attack_start;
  sc.attack_end = spec.attack_start + spec.attack_length - 1;
  const int side_len = std::max(2, static_cast<int>(std::floor(std::sqrt(spec.patch_area_ratio * tw * th))));
  sc.patch_h = std::min(side_len, th - th / 2);
  sc.patch_w = std::max(2, std::min(tw, static_cast<int>(std::floor(spec.patch_area_ratio * tw * th / sc.patch_h))));
  sc.validate();
  return sc;
}

// Benchmark: n scenarios alternating move-in / move-out.
inline std::vector<Scenario> make_benchmark(const SceneSpec& spec, int n, std::uint64_t base_seed) {
  std::vector<Scenario> out;
  for (int i = 0; i < n; ++i) out.push_back(gen_scene(spec, derive_seed(base_seed, 0xBE7C, static_cast<std::uint64_t>(i)) * 2 + static_cast<std::uint64_t>(i % 2)));
  return out;
}

struct LabeledImage {
  Image image;
  std::vector<GroundTruth> objects;
};

// Detector training corpus: `frames_per_scene` evenly spaced frames from each of `scenes` scenarios.
inline std::vector<LabeledImage> make_corpus(const SceneSpec& spec, int scenes, int frames_per_scene, std::uint64_t base_seed) {
  std::vector<LabeledImage> out;
  for (int i = 0; i < scenes; ++i) {
    const Scenario sc = gen_scene(spec, derive_seed(base_seed, 0xC02, static_cast<std::uint64_t>(i)));
    for (int k = 0; k < frames_per_scene; ++k) {
      const int f = (k * (sc.frame_count() - 1)) / std::max(1, frames_per_scene - 1);
      out.push_back({sc.frames[static_cast<std::size_t>(f)], sc.ground_truth(f)});
    }
  }
  return out;
}

}  // namespace controlloc
