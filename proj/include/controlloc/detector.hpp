// detector.hpp: toy grid/anchor detector with hand-written reverse mode
//
// Two strided convolutions (leaky ReLU) and a stride-1 convolutional head. Every head cell emits,
// per anchor, (t_x, t_y, t_w, t_h, t_obj, t_class[0..Nc)). Decoding follows the
// usual YOLO-style grid parameterisation: the centre is an offset from the
// cell's top-left corner squashed through a sigmoid, so an anchor-based
// proposal's centre always lies inside its own cell.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "controlloc/geometry.hpp"
#include "controlloc/imaging.hpp"
#include "controlloc/random.hpp"

namespace controlloc {

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

constexpr double kSizeExpClamp = 4.0;
constexpr double kLeakySlope = 0.1;

enum class DetectorKind { anchor_based, anchor_free, non_grid };

struct Anchor {
  double width = 16, height = 16;
  bool operator==(const Anchor&) const = default;
};

struct ConvSpec {
  int in_channels = 3, out_channels = 16;
  int kernel = 5, stride = 4;
  int pad = 1;  // leading zero padding; output size is input / stride
  bool operator==(const ConvSpec&) const = default;
};

struct DetectorConfig {
  int input_height = 128, input_width = 128;
  int conv1_channels = 16, conv1_kernel = 5, conv1_stride = 4, conv1_pad = 1;
  int conv2_channels = 32, conv2_kernel = 5, conv2_stride = 2, conv2_pad = 1;
  int head_kernel = 3;  // odd, stride 1, same padding
  std::vector<Anchor> anchors{{16, 16}, {24, 12}, {12, 24}};
  int num_classes = 2;
  double nms_iou = 0.5;
  double score_threshold = 0.25;  // T_conf
  DetectorKind kind = DetectorKind::anchor_based;

  int stride() const { return conv1_stride * conv2_stride; }
  int grid_height() const { return input_height / stride(); }
  int grid_width() const { return input_width / stride(); }
  int values_per_anchor() const { return 5 + num_classes; }
  int head_channels() const { return static_cast<int>(anchors.size()) * values_per_anchor(); }
  std::size_t proposal_count() const {
    return static_cast<std::size_t>(grid_height()) * grid_width() * anchors.size();
  }
  ConvSpec conv1() const { return {3, conv1_channels, conv1_kernel, conv1_stride, conv1_pad}; }
  ConvSpec conv2() const { return {conv1_channels, conv2_channels, conv2_kernel, conv2_stride, conv2_pad}; }
  ConvSpec head() const { return {conv2_channels, head_channels(), head_kernel, 1, head_kernel / 2}; }

  void validate() const {
    if (conv1_stride < 1 || conv2_stride < 1 || conv1_kernel < 1 || conv2_kernel < 1)
      throw std::invalid_argument("DetectorConfig: kernels and strides must be >= 1");
    if (head_kernel < 1 || head_kernel % 2 == 0) throw std::invalid_argument("DetectorConfig: head kernel must be odd");
    if (input_height % stride() != 0 || input_width % stride() != 0 || input_height < stride() ||
        input_width < stride())
      throw std::invalid_argument("DetectorConfig: input size must be a positive multiple of the stride");
    if (anchors.empty()) throw std::invalid_argument("DetectorConfig: at least one anchor required");
    if (kind == DetectorKind::anchor_free && anchors.size() != 1)
      throw std::invalid_argument("DetectorConfig: anchor-free mode uses exactly one base anchor");
    for (const Anchor& a : anchors)
      if (!(a.width > 0) || !(a.height > 0)) throw std::invalid_argument("DetectorConfig: anchors must be positive");
    if (num_classes < 1) throw std::invalid_argument("DetectorConfig: num_classes must be >= 1");
    if (!(score_threshold > 0 && score_threshold < 1))
      throw std::invalid_argument("DetectorConfig: score threshold must lie in (0,1)");
    if (!(nms_iou >= 0 && nms_iou <= 1)) throw std::invalid_argument("DetectorConfig: NMS IOU must lie in [0,1]");
    if (conv1_channels < 1 || conv2_channels < 1) throw std::invalid_argument("DetectorConfig: channels must be >= 1");
    if (conv1_pad < 0 || conv2_pad < 0) throw std::invalid_argument("DetectorConfig: padding must be >= 0");
  }
  bool operator==(const DetectorConfig&) const = default;
};

// HWC feature map.
struct FeatureMap {
  int height = 0, width = 0, channels = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c) : height(h), width(w), channels(c), values(static_cast<std::size_t>(h) * w * c, 0.0) {}
  double* at(int y, int x) { return values.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
  const double* at(int y, int x) const { return values.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
  PixelRect rect() const { return {0, 0, height, width}; }
};

inline FeatureMap to_feature_map(const Image& img) {
  FeatureMap f(img.height, img.width, Image::kChannels);
  f.values = img.data;
  return f;
}

// Weight layout: [out][ky][kx][in], matching the HWC gather order.
struct ConvLayer {
  ConvSpec spec;
  std::vector<double> weights;
  std::vector<double> bias;

  ConvLayer() = default;
  explicit ConvLayer(const ConvSpec& s)
      : spec(s),
        weights(static_cast<std::size_t>(s.out_channels) * s.kernel * s.kernel * s.in_channels, 0.0),
        bias(static_cast<std::size_t>(s.out_channels), 0.0) {}
  std::size_t fan_in() const { return static_cast<std::size_t>(spec.kernel) * spec.kernel * spec.in_channels; }
  bool operator==(const ConvLayer&) const = default;
};

namespace detail {

inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Output positions (1-D) whose window intersects input range [a, b).
inline std::pair<int, int> affected_outputs(int a, int b, const ConvSpec& s, int out_n) {
  const int lo = std::max(0, floor_div(a + s.pad - s.kernel + 1 + s.stride - 1, s.stride));
  const int hi = std::min(out_n, floor_div(b - 1 + s.pad, s.stride) + 1);
  return {lo, std::max(lo, hi)};
}

inline PixelRect affected_rect(const PixelRect& in, const ConvSpec& s, int out_h, int out_w) {
  if (in.empty()) return {};
  const auto [y0, y1] = affected_outputs(in.top, in.bottom(), s, out_h);
  const auto [x0, x1] = affected_outputs(in.left, in.right(), s, out_w);
  return PixelRect{y0, x0, y1 - y0, x1 - x0};
}

inline void gather(const FeatureMap& in, const ConvSpec& s, int oy, int ox, double* col) {
  const int c = in.channels;
  const int iy0 = oy * s.stride - s.pad, ix0 = ox * s.stride - s.pad;
  for (int ky = 0; ky < s.kernel; ++ky) {
    const int iy = iy0 + ky;
    for (int kx = 0; kx < s.kernel; ++kx) {
      const int ix = ix0 + kx;
      double* dst = col + (static_cast<std::size_t>(ky) * s.kernel + kx) * c;
      if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) {
        std::fill(dst, dst + c, 0.0);
      } else {
        std::memcpy(dst, in.at(iy, ix), sizeof(double) * static_cast<std::size_t>(c));
      }
    }
  }
}

}  // namespace detail

// Forward over `region` of the output map. leaky=false gives a linear layer.
inline void conv_forward(const ConvLayer& L, const FeatureMap& in, FeatureMap& out, const PixelRect& region, bool leaky) {
  const std::size_t n = L.fan_in();
  std::vector<double> col(n);
  for (int oy = region.top; oy < region.bottom(); ++oy)
    for (int ox = region.left; ox < region.right(); ++ox) {
      detail::gather(in, L.spec, oy, ox, col.data());
      double* o = out.at(oy, ox);
      for (int oc = 0; oc < L.spec.out_channels; ++oc) {
        const double* w = L.weights.data() + static_cast<std::size_t>(oc) * n;
        double acc = L.bias[static_cast<std::size_t>(oc)];
        for (std::size_t k = 0; k < n; ++k) acc += w[k] * col[k];
        o[oc] = (leaky && acc < 0) ? kLeakySlope * acc : acc;
      }
    }
}

// Adds d(loss)/d(input) for input positions inside `clip`, given the gradient
// with respect to the layer's pre-activation output over `region`.
inline void conv_backward_input(const ConvLayer& L, const FeatureMap& grad_out, const PixelRect& region,
                                FeatureMap& grad_in, const PixelRect& clip) {
  const ConvSpec& s = L.spec;
  const std::size_t n = L.fan_in();
  std::vector<double> col(n);
  const int c = grad_in.channels;
  for (int oy = region.top; oy < region.bottom(); ++oy)
    for (int ox = region.left; ox < region.right(); ++ox) {
      const double* g = grad_out.at(oy, ox);
      bool any = false;
      std::fill(col.begin(), col.end(), 0.0);
      for (int oc = 0; oc < s.out_channels; ++oc) {
        if (g[oc] == 0.0) continue;
        any = true;
        const double* w = L.weights.data() + static_cast<std::size_t>(oc) * n;
        for (std::size_t k = 0; k < n; ++k) col[k] += g[oc] * w[k];
      }
      if (!any) continue;
      const int iy0 = oy * s.stride - s.pad, ix0 = ox * s.stride - s.pad;
      for (int ky = 0; ky < s.kernel; ++ky) {
        const int iy = iy0 + ky;
        if (iy < clip.top || iy >= clip.bottom()) continue;
        for (int kx = 0; kx < s.kernel; ++kx) {
          const int ix = ix0 + kx;
          if (ix < clip.left || ix >= clip.right()) continue;
          double* dst = grad_in.at(iy, ix);
          const double* src = col.data() + (static_cast<std::size_t>(ky) * s.kernel + kx) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
}

inline void conv_backward_weights(const ConvLayer& L, const FeatureMap& in, const FeatureMap& grad_out,
                                  const PixelRect& region, ConvLayer& grads) {
  const std::size_t n = L.fan_in();
  std::vector<double> col(n);
  for (int oy = region.top; oy < region.bottom(); ++oy)
    for (int ox = region.left; ox < region.right(); ++ox) {
      const double* g = grad_out.at(oy, ox);
      bool gathered = false;
      for (int oc = 0; oc < L.spec.out_channels; ++oc) {
        if (g[oc] == 0.0) continue;
        if (!gathered) {
          detail::gather(in, L.spec, oy, ox, col.data());
          gathered = true;
        }
        double* dw = grads.weights.data() + static_cast<std::size_t>(oc) * n;
        for (std::size_t k = 0; k < n; ++k) dw[k] += g[oc] * col[k];
        grads.bias[static_cast<std::size_t>(oc)] += g[oc];
      }
    }
}

struct DetectorWeights {
  ConvLayer conv1, conv2, head;

  static DetectorWeights zeros(const DetectorConfig& cfg) {
    return {ConvLayer(cfg.conv1()), ConvLayer(cfg.conv2()), ConvLayer(cfg.head())};
  }
  // He-style normal initialisation; head starts small with a negative objectness bias.
  static DetectorWeights random(const DetectorConfig& cfg, std::uint64_t seed) {
    DetectorWeights w = zeros(cfg);
    Rng rng(derive_seed(seed, 0x1A17));
    auto fill = [&](ConvLayer& L, double gain) {
      const double sd = gain * std::sqrt(2.0 / static_cast<double>(L.fan_in()));
      for (double& v : L.weights) v = rng.normal(0.0, sd);
    };
    fill(w.conv1, 1.0);
    fill(w.conv2, 1.0);
    fill(w.head, 0.1);
    for (std::size_t a = 0; a < cfg.anchors.size(); ++a)
      w.head.bias[a * static_cast<std::size_t>(cfg.values_per_anchor()) + 4] = -4.0;
    return w;
  }

  std::vector<ConvLayer*> layers() { return {&conv1, &conv2, &head}; }
  std::vector<const ConvLayer*> layers() const { return {&conv1, &conv2, &head}; }

  bool finite() const {
    for (const ConvLayer* L : layers()) {
      for (double v : L->weights)
        if (!std::isfinite(v)) return false;
      for (double v : L->bias)
        if (!std::isfinite(v)) return false;
    }
    return true;
  }
  void round_to_float() {
    for (ConvLayer* L : layers()) {
      for (double& v : L->weights) v = static_cast<float>(v);
      for (double& v : L->bias) v = static_cast<float>(v);
    }
  }
  void check_shapes(const DetectorConfig& cfg) const {
    const DetectorWeights ref = zeros(cfg);
    const auto a = layers();
    const auto b = ref.layers();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i]->spec != b[i]->spec || a[i]->weights.size() != b[i]->weights.size() || a[i]->bias.size() != b[i]->bias.size())
        throw std::invalid_argument("DetectorWeights: shapes inconsistent with config");
  }
  bool operator==(const DetectorWeights&) const = default;
};

// One pre-NMS candidate.
struct Proposal {
  BBox box;
  double objectness = 0;   // c_obj
  double class_score = 0;  // max_i c_class[i]
  double confidence = 0;   // c_obj * max class score
  int class_id = 0;        // argmax class, lowest index on ties
  int cell_x = 0, cell_y = 0, anchor = 0;
};

struct DetectionOutput {
  std::vector<Proposal> proposals;        // O_bbox, indexed (cell_y, cell_x, anchor)
  std::vector<std::size_t> kept;          // B' after NMS, indices into proposals
  std::vector<double> raw;                // head t-values, values_per_anchor per proposal
  std::vector<double> class_scores;       // num_classes per proposal
  int values_per_anchor = 0;
  int num_classes = 0;

  std::span<const double> raw_of(std::size_t i) const {
    return {raw.data() + i * static_cast<std::size_t>(values_per_anchor), static_cast<std::size_t>(values_per_anchor)};
  }
  double class_score(std::size_t i, int c) const { return class_scores[i * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(c)]; }
  bool survives(std::size_t i) const { return std::find(kept.begin(), kept.end(), i) != kept.end(); }
};

inline std::size_t proposal_index(const DetectorConfig& cfg, int cell_x, int cell_y, int anchor) {
  return (static_cast<std::size_t>(cell_y) * cfg.grid_width() + cell_x) * cfg.anchors.size() + static_cast<std::size_t>(anchor);
}

// Decodes one proposal from its raw head values.
inline Proposal decode_proposal(const DetectorConfig& cfg, std::span<const double> t, int cell_x, int cell_y, int anchor,
                                double* class_scores_out = nullptr) {
  Proposal p;
  p.cell_x = cell_x;
  p.cell_y = cell_y;
  p.anchor = anchor;
  const double s = cfg.stride();
  double ox, oy;
  if (cfg.kind == DetectorKind::anchor_free) {
    ox = 2.0 * sigmoid(t[0]) - 0.5;
    oy = 2.0 * sigmoid(t[1]) - 0.5;
  } else {
    ox = sigmoid(t[0]);
    oy = sigmoid(t[1]);
  }
  const double bx = (ox + cell_x) * s, by = (oy + cell_y) * s;
  const Anchor& a = cfg.anchors[static_cast<std::size_t>(anchor)];
  const double w = a.width * std::exp(std::clamp(t[2], -kSizeExpClamp, kSizeExpClamp));
  const double h = a.height * std::exp(std::clamp(t[3], -kSizeExpClamp, kSizeExpClamp));
  p.box = BBox::from_center(bx, by, w, h);
  p.objectness = sigmoid(t[4]);
  p.class_score = -1;
  for (int c = 0; c < cfg.num_classes; ++c) {
    const double sc = sigmoid(t[5 + static_cast<std::size_t>(c)]);
    if (class_scores_out) class_scores_out[c] = sc;
    if (sc > p.class_score) {
      p.class_score = sc;
      p.class_id = c;
    }
  }
  p.confidence = p.objectness * p.class_score;
  return p;
}

// d(loss)/d(box corners, confidence) for one proposal.
struct ProposalGrad {
  std::size_t index = 0;
  std::array<double, 4> d_box{0, 0, 0, 0};  // wrt x1, y1, x2, y2
  double d_conf = 0;
};

// Chain rule from a ProposalGrad to the proposal's raw head values.
inline std::vector<double> proposal_raw_grad(const DetectorConfig& cfg, std::span<const double> t, const Proposal& p,
                                             const ProposalGrad& g) {
  std::vector<double> dt(static_cast<std::size_t>(cfg.values_per_anchor()), 0.0);
  const double s = cfg.stride();
  const double gcx = g.d_box[0] + g.d_box[2];
  const double gcy = g.d_box[1] + g.d_box[3];
  const double gw = 0.5 * (g.d_box[2] - g.d_box[0]);
  const double gh = 0.5 * (g.d_box[3] - g.d_box[1]);
  const double k = cfg.kind == DetectorKind::anchor_free ? 2.0 : 1.0;
  const double sx = sigmoid(t[0]), sy = sigmoid(t[1]);
  dt[0] = gcx * s * k * sx * (1 - sx);
  dt[1] = gcy * s * k * sy * (1 - sy);
  const double w = p.box.width(), h = p.box.height();
  dt[2] = std::abs(t[2]) < kSizeExpClamp ? gw * w : 0.0;
  dt[3] = std::abs(t[3]) < kSizeExpClamp ? gh * h : 0.0;
  const double so = p.objectness, sc = p.class_score;
  dt[4] = g.d_conf * sc * so * (1 - so);
  dt[5 + static_cast<std::size_t>(p.class_id)] = g.d_conf * so * sc * (1 - sc);
  return dt;
}

// Intermediate activations of one forward pass (post-activation).
struct Activations {
  FeatureMap input, a1, a2, head;
};

class Detector {
 public:
  Detector(DetectorConfig cfg, DetectorWeights w) : cfg_(std::move(cfg)), w_(std::move(w)) {
    cfg_.validate();
    if (cfg_.kind == DetectorKind::non_grid)
      throw std::invalid_argument("Detector: only grid-based (anchor-based or anchor-free) detectors are supported");
    w_.check_shapes(cfg_);
    if (!w_.finite()) throw std::invalid_argument("Detector: non-finite weights");
  }

  const DetectorConfig& config() const { return cfg_; }
  const DetectorWeights& weights() const { return w_; }

  Activations run(const Image& x) const {
    check_input(x);
    Activations a;
    a.input = to_feature_map(x);
    a.a1 = FeatureMap(cfg_.input_height / cfg_.conv1_stride, cfg_.input_width / cfg_.conv1_stride, cfg_.conv1_channels);
    a.a2 = FeatureMap(cfg_.grid_height(), cfg_.grid_width(), cfg_.conv2_channels);
    a.head = FeatureMap(cfg_.grid_height(), cfg_.grid_width(), cfg_.head_channels());
    conv_forward(w_.conv1, a.input, a.a1, a.a1.rect(), true);
    conv_forward(w_.conv2, a.a1, a.a2, a.a2.rect(), true);
    conv_forward(w_.head, a.a2, a.head, a.head.rect(), false);
    return a;
  }

  // Re-runs only the part of the network that depends on pixels in `dirty`.
  // `base` must come from an image equal to `x` outside `dirty`.
  Activations run_incremental(const Image& x, const Activations& base, const PixelRect& dirty) const {
    check_input(x);
    Activations a = base;
    a.input.values = x.data;
    const PixelRect d = intersect(dirty, x.rect());
    const PixelRect r1 = detail::affected_rect(d, w_.conv1.spec, a.a1.height, a.a1.width);
    const PixelRect r2 = detail::affected_rect(r1, w_.conv2.spec, a.a2.height, a.a2.width);
    const PixelRect r3 = detail::affected_rect(r2, w_.head.spec, a.head.height, a.head.width);
    conv_forward(w_.conv1, a.input, a.a1, r1, true);
    conv_forward(w_.conv2, a.a1, a.a2, r2, true);
    conv_forward(w_.head, a.a2, a.head, r3, false);
    return a;
  }

  DetectionOutput decode(const Activations& a) const {
    DetectionOutput out;
    const int vpa = cfg_.values_per_anchor();
    const std::size_t na = cfg_.anchors.size();
    out.values_per_anchor = vpa;
    out.num_classes = cfg_.num_classes;
    out.proposals.resize(cfg_.proposal_count());
    out.raw.resize(cfg_.proposal_count() * static_cast<std::size_t>(vpa));
    out.class_scores.resize(cfg_.proposal_count() * static_cast<std::size_t>(cfg_.num_classes));
    for (int cy = 0; cy < cfg_.grid_height(); ++cy)
      for (int cx = 0; cx < cfg_.grid_width(); ++cx) {
        const double* h = a.head.at(cy, cx);
        for (std::size_t an = 0; an < na; ++an) {
          const std::size_t idx = proposal_index(cfg_, cx, cy, static_cast<int>(an));
          double* raw = out.raw.data() + idx * static_cast<std::size_t>(vpa);
          std::copy(h + an * static_cast<std::size_t>(vpa), h + (an + 1) * static_cast<std::size_t>(vpa), raw);
          out.proposals[idx] = decode_proposal(cfg_, std::span<const double>(raw, static_cast<std::size_t>(vpa)), cx, cy,
                                               static_cast<int>(an),
                                               out.class_scores.data() + idx * static_cast<std::size_t>(cfg_.num_classes));
        }
      }
    std::vector<ScoredBox> scored;
    scored.reserve(out.proposals.size());
    for (const Proposal& p : out.proposals) scored.push_back({p.box, p.confidence, p.class_id});
    out.kept = nms(scored, cfg_.nms_iou, cfg_.score_threshold);
    return out;
  }

  DetectionOutput forward(const Image& x) const { return decode(run(x)); }

  // Reverse pass from sparse head gradients (raw t-values per proposal) to the
  // input pixels inside `roi`. Returns a full-size HWC gradient, zero outside roi.
  std::vector<double> backward_to_input(const Activations& a, const std::vector<std::pair<std::size_t, std::vector<double>>>& head_grads,
                                        const PixelRect& roi) const {
    std::vector<double> grad(a.input.values.size(), 0.0);
    const PixelRect in_roi = intersect(roi, a.input.rect());
    if (in_roi.empty() || head_grads.empty()) return grad;
    const PixelRect r1 = detail::affected_rect(in_roi, w_.conv1.spec, a.a1.height, a.a1.width);
    const PixelRect r2 = detail::affected_rect(r1, w_.conv2.spec, a.a2.height, a.a2.width);
    const PixelRect r3 = detail::affected_rect(r2, w_.head.spec, a.head.height, a.head.width);
    FeatureMap g_head(a.head.height, a.head.width, a.head.channels);
    const std::size_t na = cfg_.anchors.size();
    const int vpa = cfg_.values_per_anchor();
    bool touched = false;
    for (const auto& [idx, dt] : head_grads) {
      const int an = static_cast<int>(idx % na);
      const int cell = static_cast<int>(idx / na);
      const int cy = cell / cfg_.grid_width(), cx = cell % cfg_.grid_width();
      if (!r3.contains(cy, cx)) continue;
      touched = true;
      double* g = g_head.at(cy, cx) + static_cast<std::size_t>(an) * static_cast<std::size_t>(vpa);
      for (int k = 0; k < vpa; ++k) g[k] += dt[static_cast<std::size_t>(k)];
    }
    if (!touched) return grad;
    FeatureMap g2(a.a2.height, a.a2.width, a.a2.channels);
    conv_backward_input(w_.head, g_head, r3, g2, r2);
    apply_leaky_grad(a.a2, g2, r2);
    FeatureMap g1(a.a1.height, a.a1.width, a.a1.channels);
    conv_backward_input(w_.conv2, g2, r2, g1, r1);
    apply_leaky_grad(a.a1, g1, r1);
    FeatureMap g0(a.input.height, a.input.width, a.input.channels);
    conv_backward_input(w_.conv1, g1, r1, g0, in_roi);
    grad = std::move(g0.values);
    return grad;
  }

  // Full reverse pass accumulating weight gradients (training).
  void backward_weights(const Activations& a, const FeatureMap& g_head, DetectorWeights& grads) const {
    FeatureMap g2(a.a2.height, a.a2.width, a.a2.channels);
    conv_backward_weights(w_.head, a.a2, g_head, g_head.rect(), grads.head);
    conv_backward_input(w_.head, g_head, g_head.rect(), g2, g2.rect());
    apply_leaky_grad(a.a2, g2, g2.rect());
    conv_backward_weights(w_.conv2, a.a1, g2, g2.rect(), grads.conv2);
    FeatureMap g1(a.a1.height, a.a1.width, a.a1.channels);
    conv_backward_input(w_.conv2, g2, g2.rect(), g1, g1.rect());
    apply_leaky_grad(a.a1, g1, g1.rect());
    conv_backward_weights(w_.conv1, a.input, g1, g1.rect(), grads.conv1);
  }

  DetectorWeights& mutable_weights() { return w_; }

 private:
  void check_input(const Image& x) const {
    if (x.height != cfg_.input_height || x.width != cfg_.input_width)
      throw std::invalid_argument("Detector: input size does not match config");
  }
  // Post-activation sign equals pre-activation sign, so the derivative is read off the output.
  static void apply_leaky_grad(const FeatureMap& act, FeatureMap& g, const PixelRect& r) {
    for (int y = r.top; y < r.bottom(); ++y)
      for (int x = r.left; x < r.right(); ++x) {
        const double* v = act.at(y, x);
        double* gg = g.at(y, x);
        for (int c = 0; c < act.channels; ++c)
          if (v[c] <= 0) gg[c] *= kLeakySlope;
      }
  }

  DetectorConfig cfg_;
  DetectorWeights w_;
};

inline DetectionOutput forward(const Image& x, const DetectorWeights& weights, const DetectorConfig& config) {
  return Detector(config, weights).forward(x);
}

// ---------------------------------------------------------------------------
// Weights file: "CLDW", u16 version, config echo, float32 tensors in
// declaration order (conv1 w, conv1 b, conv2 w, conv2 b, head w, head b).

constexpr std::uint16_t kWeightsVersion = 1;

namespace detail {
inline void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}
inline std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (is.gcount() != 2) throw FormatError("weights: truncated header");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline void put_f64(std::ostream& os, double d) {
  const auto u = std::bit_cast<std::uint64_t>(d);
  put_u32(os, static_cast<std::uint32_t>(u));
  put_u32(os, static_cast<std::uint32_t>(u >> 32));
}
inline double get_f64(std::istream& is) {
  const std::uint64_t lo = get_u32(is), hi = get_u32(is);
  return std::bit_cast<double>(lo | (hi << 32));
}
}  // namespace detail

inline void save_weights(const std::string& path, const DetectorConfig& cfg, const DetectorWeights& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_weights: cannot open " + path);
  os.write("CLDW", 4);
  detail::put_u16(os, kWeightsVersion);
  const std::uint32_t ints[] = {static_cast<std::uint32_t>(cfg.input_height), static_cast<std::uint32_t>(cfg.input_width),
                                static_cast<std::uint32_t>(cfg.conv1_channels), static_cast<std::uint32_t>(cfg.conv1_kernel),
                                static_cast<std::uint32_t>(cfg.conv1_stride), static_cast<std::uint32_t>(cfg.conv1_pad),
                                static_cast<std::uint32_t>(cfg.conv2_channels), static_cast<std::uint32_t>(cfg.conv2_kernel),
                                static_cast<std::uint32_t>(cfg.conv2_stride), static_cast<std::uint32_t>(cfg.conv2_pad),
                                static_cast<std::uint32_t>(cfg.head_kernel), static_cast<std::uint32_t>(cfg.num_classes), static_cast<std::uint32_t>(cfg.kind),
                                static_cast<std::uint32_t>(cfg.anchors.size())};
  for (std::uint32_t v : ints) detail::put_u32(os, v);
  for (const Anchor& a : cfg.anchors) {
    detail::put_f64(os, a.width);
    detail::put_f64(os, a.height);
  }
  detail::put_f64(os, cfg.nms_iou);
  detail::put_f64(os, cfg.score_threshold);
  for (const ConvLayer* L : w.layers()) {
    for (double v : L->weights) detail::put_f32(os, static_cast<float>(v));
    for (double v : L->bias) detail::put_f32(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("save_weights: write failed for " + path);
}

struct LoadedDetector {
  DetectorConfig config;
  DetectorWeights weights;
};

inline LoadedDetector load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_weights: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "CLDW", 4) != 0) throw FormatError("weights: bad magic in " + path);
  if (detail::get_u16(is) != kWeightsVersion) throw FormatError("weights: unsupported version");
  std::uint32_t ints[14];
  for (std::uint32_t& v : ints) v = detail::get_u32(is);
  for (int i = 0; i < 12; ++i)
    if (ints[i] > 4096) throw FormatError("weights: implausible config value");
  if (ints[12] > 2 || ints[13] < 1 || ints[13] > 64) throw FormatError("weights: bad detector kind or anchor count");
  LoadedDetector out;
  DetectorConfig& c = out.config;
  c.input_height = static_cast<int>(ints[0]);
  c.input_width = static_cast<int>(ints[1]);
  c.conv1_channels = static_cast<int>(ints[2]);
  c.conv1_kernel = static_cast<int>(ints[3]);
  c.conv1_stride = static_cast<int>(ints[4]);
  c.conv1_pad = static_cast<int>(ints[5]);
  c.conv2_channels = static_cast<int>(ints[6]);
  c.conv2_kernel = static_cast<int>(ints[7]);
  c.conv2_stride = static_cast<int>(ints[8]);
  c.conv2_pad = static_cast<int>(ints[9]);
  c.head_kernel = static_cast<int>(ints[10]);
  c.num_classes = static_cast<int>(ints[11]);
  c.kind = static_cast<DetectorKind>(ints[12]);
  c.anchors.resize(ints[13]);
  for (Anchor& a : c.anchors) {
    a.width = detail::get_f64(is);
    a.height = detail::get_f64(is);
  }
  c.nms_iou = detail::get_f64(is);
  c.score_threshold = detail::get_f64(is);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("weights: invalid config echo: ") + e.what());
  }
  out.weights = DetectorWeights::zeros(c);
  for (ConvLayer* L : out.weights.layers()) {
    for (double& v : L->weights) v = detail::get_f32(is);
    for (double& v : L->bias) v = detail::get_f32(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("weights: trailing bytes");
  return out;
}

}  // namespace controlloc
