// imaging.hpp: images, patches, patch pasting, EoT transforms, input defenses and image I/O
#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "controlloc/random.hpp"

namespace controlloc {

// Thrown for malformed image or weight files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integer pixel rectangle [top, top+height) x [left, left+width).
struct PixelRect {
  int top = 0, left = 0, height = 0, width = 0;
  int bottom() const { return top + height; }
  int right() const { return left + width; }
  bool empty() const { return height <= 0 || width <= 0; }
  bool contains(int y, int x) const { return y >= top && y < bottom() && x >= left && x < right(); }
  bool contains(const PixelRect& r) const {
    return r.top >= top && r.left >= left && r.bottom() <= bottom() && r.right() <= right();
  }
  long area() const { return empty() ? 0L : static_cast<long>(height) * width; }
  bool operator==(const PixelRect&) const = default;
};

inline PixelRect intersect(const PixelRect& a, const PixelRect& b) {
  const int t = std::max(a.top, b.top), l = std::max(a.left, b.left);
  const int btm = std::min(a.bottom(), b.bottom()), r = std::min(a.right(), b.right());
  return PixelRect{t, l, std::max(0, btm - t), std::max(0, r - l)};
}

inline PixelRect bounding_union(const PixelRect& a, const PixelRect& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  const int t = std::min(a.top, b.top), l = std::min(a.left, b.left);
  const int btm = std::max(a.bottom(), b.bottom()), r = std::max(a.right(), b.right());
  return PixelRect{t, l, btm - t, r - l};
}

// Single-channel scalar field (masks, window scores, gradients of masks).
struct Plane {
  int height = 0, width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(int h, int w, double fill = 0.0) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Plane&) const = default;
};

// 3-channel image, interleaved HWC, intensities in [0,1].
struct Image {
  static constexpr int kChannels = 3;
  int height = 0, width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<std::size_t>(h) * w * kChannels, fill) {
    if (h < 1 || w < 1) throw std::invalid_argument("Image: dimensions must be >= 1");
  }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
  }
  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }
  PixelRect rect() const { return {0, 0, height, width}; }
  bool operator==(const Image&) const = default;
};

inline void clamp_unit(Image& img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

// Adversarial patch: pixel block plus its top-left placement in the image frame.
struct PatchSpec {
  Image pixels;
  int top = 0, left = 0;

  int height() const { return pixels.height; }
  int width() const { return pixels.width; }
  PixelRect rect() const { return {top, left, pixels.height, pixels.width}; }

  static PatchSpec filled(int h, int w, double value, int top = 0, int left = 0) {
    return PatchSpec{Image(h, w, value), top, left};
  }
};

// Moves the patch so that it lies fully inside an image of the given size.
// Returns true if the placement changed.
inline bool clamp_placement(PatchSpec& patch, int img_h, int img_w) {
  if (patch.height() > img_h || patch.width() > img_w)
    throw std::invalid_argument("apply_patch: patch larger than image");
  const int t = std::clamp(patch.top, 0, img_h - patch.height());
  const int l = std::clamp(patch.left, 0, img_w - patch.width());
  const bool changed = t != patch.top || l != patch.left;
  patch.top = t;
  patch.left = l;
  return changed;
}

inline Image apply_patch(const Image& x, PatchSpec patch, bool* clamped = nullptr) {
  const bool moved = clamp_placement(patch, x.height, x.width);
  if (clamped) *clamped = moved;
  Image out = x;
  for (int i = 0; i < patch.height(); ++i)
    for (int j = 0; j < patch.width(); ++j)
      for (int c = 0; c < Image::kChannels; ++c)
        out.at(patch.top + i, patch.left + j, c) = patch.pixels.at(i, j, c);
  return out;
}

// x' = x (1 - M) + p M, with M broadcast over channels.
inline Image apply_soft_mask(const Image& x, const Image& p, const Plane& mask) {
  if (x.height != p.height || x.width != p.width || mask.height != x.height || mask.width != x.width)
    throw std::invalid_argument("apply_soft_mask: shape mismatch");
  Image out = x;
  for (int y = 0; y < x.height; ++y)
    for (int xx = 0; xx < x.width; ++xx) {
      const double m = mask.at(y, xx);
      for (int c = 0; c < Image::kChannels; ++c)
        out.at(y, xx, c) = x.at(y, xx, c) * (1.0 - m) + p.at(y, xx, c) * m;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Expectation over transformation

struct EotParams {
  double translate_px = 4.0;   // +/- pixels
  double rotate_deg = 5.0;     // +/- degrees
  double brightness = 0.1;     // additive, +/-
  double contrast_lo = 0.9;    // multiplicative range
  double contrast_hi = 1.1;
  double noise_std = 0.02;
  int samples = 4;
  std::uint64_t seed = 0;

  void validate() const {
    if (translate_px < 0 || rotate_deg < 0 || brightness < 0 || noise_std < 0 || contrast_lo < 0 ||
        contrast_hi < contrast_lo || samples < 1)
      throw std::invalid_argument("EotParams: ranges must be non-negative and samples >= 1");
  }
  static EotParams identity(int samples = 1) {
    return EotParams{0, 0, 0, 1, 1, 0, samples, 0};
  }
};

struct EotSample {
  double dx = 0, dy = 0;
  double angle_deg = 0;
  double brightness = 0;
  double contrast = 1;
  double noise_std = 0;
  std::uint64_t noise_seed = 0;

  static EotSample identity() { return {}; }
  bool operator==(const EotSample&) const = default;
};

inline std::vector<EotSample> sample_eot(const EotParams& params, std::uint64_t iteration) {
  params.validate();
  Rng rng(derive_seed(params.seed, 0xE07, iteration));
  std::vector<EotSample> out;
  out.reserve(static_cast<std::size_t>(params.samples));
  for (int s = 0; s < params.samples; ++s) {
    EotSample t;
    t.dx = rng.uniform(-params.translate_px, params.translate_px);
    t.dy = rng.uniform(-params.translate_px, params.translate_px);
    t.angle_deg = rng.uniform(-params.rotate_deg, params.rotate_deg);
    t.brightness = rng.uniform(-params.brightness, params.brightness);
    t.contrast = rng.uniform(params.contrast_lo, params.contrast_hi);
    t.noise_std = params.noise_std;
    t.noise_seed = derive_seed(params.seed, 0x401, iteration, static_cast<std::uint64_t>(s));
    out.push_back(t);
  }
  return out;
}

// One image value produced from one patch value: d image / d patch = scale.
struct PixelRoute {
  std::uint32_t image_index = 0;  // flat HWC index into the output image
  std::uint32_t patch_index = 0;  // flat HWC index into the patch pixels
  double scale = 0;               // contrast factor, 0 where a clamp saturated
};

struct EotApplied {
  Image image;
  std::vector<PixelRoute> routes;
  PixelRect footprint;  // bounding rect of all written pixels (empty if fully clipped)
};

// Colour-adjusts, rotates (nearest neighbour, about the patch centre), translates,
// pastes and noises the patch. Pixels falling outside the image are dropped.
inline EotApplied apply_eot(const Image& x, const PatchSpec& patch, const EotSample& t) {
  EotApplied res{x, {}, {}};
  const int ph = patch.height(), pw = patch.width();
  const int tx = static_cast<int>(std::lround(t.dx));
  const int ty = static_cast<int>(std::lround(t.dy));
  const double ccx = patch.left + 0.5 * pw + tx;
  const double ccy = patch.top + 0.5 * ph + ty;
  const double th = t.angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const bool rotated = t.angle_deg != 0.0;
  const int reach = rotated ? static_cast<int>(std::ceil(0.5 * std::hypot(ph, pw))) + 1 : 0;
  const int y0 = rotated ? static_cast<int>(std::floor(ccy)) - reach : patch.top + ty;
  const int y1 = rotated ? static_cast<int>(std::ceil(ccy)) + reach : patch.top + ty + ph;
  const int x0 = rotated ? static_cast<int>(std::floor(ccx)) - reach : patch.left + tx;
  const int x1 = rotated ? static_cast<int>(std::ceil(ccx)) + reach : patch.left + tx + pw;

  Rng noise(t.noise_seed);
  int fy0 = x.height, fy1 = -1, fx0 = x.width, fx1 = -1;
  res.routes.reserve(static_cast<std::size_t>(ph) * pw * Image::kChannels);
  for (int y = std::max(0, y0); y < std::min(x.height, y1); ++y) {
    for (int xx = std::max(0, x0); xx < std::min(x.width, x1); ++xx) {
      int si, sj;
      if (rotated) {
        const double u = xx + 0.5 - ccx, v = y + 0.5 - ccy;
        const double su = cs * u + sn * v, sv = -sn * u + cs * v;
        sj = static_cast<int>(std::floor(su + 0.5 * pw));
        si = static_cast<int>(std::floor(sv + 0.5 * ph));
        if (si < 0 || si >= ph || sj < 0 || sj >= pw) continue;
      } else {
        si = y - (patch.top + ty);
        sj = xx - (patch.left + tx);
      }
      fy0 = std::min(fy0, y);
      fy1 = std::max(fy1, y);
      fx0 = std::min(fx0, xx);
      fx1 = std::max(fx1, xx);
      for (int c = 0; c < Image::kChannels; ++c) {
        const double raw = t.contrast * patch.pixels.at(si, sj, c) + t.brightness;
        const double adj = std::clamp(raw, 0.0, 1.0);
        double scale = (raw > 0.0 && raw < 1.0) ? t.contrast : 0.0;
        double v = adj;
        if (t.noise_std > 0) {
          const double noisy = adj + noise.normal(0.0, t.noise_std);
          v = std::clamp(noisy, 0.0, 1.0);
          if (!(noisy > 0.0 && noisy < 1.0)) scale = 0.0;
        }
        const std::size_t ii = x.index(y, xx, c);
        res.image.data[ii] = v;
        res.routes.push_back({static_cast<std::uint32_t>(ii),
                              static_cast<std::uint32_t>(patch.pixels.index(si, sj, c)), scale});
      }
    }
  }
  if (fy1 >= fy0) res.footprint = PixelRect{fy0, fx0, fy1 - fy0 + 1, fx1 - fx0 + 1};
  return res;
}

// Chain rule through an EoT paste: scatter-adds image gradients onto patch pixels.
// Several image pixels can read the same patch pixel after rotation.
inline void route_gradient(const std::vector<PixelRoute>& routes, const std::vector<double>& image_grad,
                           std::vector<double>& patch_grad) {
  for (const PixelRoute& r : routes) patch_grad[r.patch_index] += r.scale * image_grad[r.image_index];
}

// ---------------------------------------------------------------------------
// Input-transformation defenses

struct BitDepth {
  int bits = 8;
};
struct GaussianNoise {
  double std = 0.0;
  std::uint64_t seed = 0;
};
struct MedianBlur {
  int kernel = 3;
};
using DefenseKind = std::variant<BitDepth, GaussianNoise, MedianBlur>;

inline Image defense_transform(const Image& x, const DefenseKind& kind) {
  Image out = x;
  if (const auto* bd = std::get_if<BitDepth>(&kind)) {
    if (bd->bits < 1 || bd->bits > 30) throw std::invalid_argument("bit_depth: bits must be in [1,30]");
    const double levels = std::ldexp(1.0, bd->bits) - 1.0;
    for (double& v : out.data) v = std::round(v * levels) / levels;
  } else if (const auto* gn = std::get_if<GaussianNoise>(&kind)) {
    if (!(gn->std >= 0)) throw std::invalid_argument("gaussian_noise: std must be >= 0");
    if (gn->std == 0) return out;
    Rng rng(derive_seed(gn->seed, 0x6A055));
    for (double& v : out.data) v = std::clamp(v + rng.normal(0.0, gn->std), 0.0, 1.0);
  } else {
    const int k = std::get<MedianBlur>(kind).kernel;
    if (k < 3 || k % 2 == 0) throw std::invalid_argument("median_blur: kernel must be odd and >= 3");
    const int r = k / 2;
    std::vector<double> window(static_cast<std::size_t>(k) * k);
    for (int y = 0; y < x.height; ++y)
      for (int xx = 0; xx < x.width; ++xx)
        for (int c = 0; c < Image::kChannels; ++c) {
          std::size_t n = 0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int sy = std::clamp(y + dy, 0, x.height - 1);
              const int sx = std::clamp(xx + dx, 0, x.width - 1);
              window[n++] = x.at(sy, sx, c);
            }
          std::nth_element(window.begin(), window.begin() + static_cast<long>(n / 2), window.end());
          out.at(y, xx, c) = window[n / 2];
        }
  }
  return out;
}

// ---------------------------------------------------------------------------
// File I/O: binary PPM (P6, maxval 255) and raw planar float32 ("CLIM").

inline double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("write_ppm: write failed for " + path);
}

namespace detail {
inline int read_ppm_int(std::istream& is) {
  int ch = is.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = is.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = is.get();
  }
  if (ch == EOF || !std::isdigit(ch)) throw FormatError("ppm: malformed header");
  long v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    if (v > (1L << 24)) throw FormatError("ppm: header value out of range");
    ch = is.get();
  }
  return static_cast<int>(v);
}
}  // namespace detail

inline Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_ppm: cannot open " + path);
  char magic[2] = {0, 0};
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || magic[1] != '6') throw FormatError("ppm: expected P6 magic in " + path);
  const int w = detail::read_ppm_int(is);
  const int h = detail::read_ppm_int(is);
  const int maxval = detail::read_ppm_int(is);
  if (w < 1 || h < 1) throw FormatError("ppm: non-positive dimensions");
  if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported");
  Image img(h, w);
  std::vector<unsigned char> buf(img.data.size());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw FormatError("ppm: truncated pixel data");
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
  return img;
}

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) throw FormatError("truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }
}  // namespace detail

// Raw planar float32 little-endian: "CLIM", u32 h, u32 w, u32 channels, then CHW data.
inline void write_clim(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_clim: cannot open " + path);
  os.write("CLIM", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(img.height));
  detail::put_u32(os, static_cast<std::uint32_t>(img.width));
  detail::put_u32(os, Image::kChannels);
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) detail::put_f32(os, static_cast<float>(img.at(y, x, c)));
}

inline Image read_clim(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_clim: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "CLIM", 4) != 0) throw FormatError("clim: bad magic in " + path);
  const std::uint32_t h = detail::get_u32(is), w = detail::get_u32(is), ch = detail::get_u32(is);
  if (ch != Image::kChannels) throw FormatError("clim: expected 3 channels");
  if (h < 1 || w < 1 || h > 1u << 15 || w > 1u << 15) throw FormatError("clim: bad dimensions");
  Image img(static_cast<int>(h), static_cast<int>(w));
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const float v = detail::get_f32(is);
        if (!std::isfinite(v)) throw FormatError("clim: non-finite pixel");
        img.at(y, x, c) = std::clamp(static_cast<double>(v), 0.0, 1.0);
      }
  return img;
}

// Dispatches on extension: ".clim" is raw float, everything else PPM.
inline Image read_image(const std::string& path) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".clim") == 0) return read_clim(path);
  return read_ppm(path);
}
inline void write_image(const std::string& path, const Image& img) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".clim") == 0) return write_clim(path, img);
  write_ppm(path, img);
}

// Grayscale rendering of a plane scaled by its max (diagnostic dumps).
inline Image plane_to_image(const Plane& p) {
  Image img(std::max(1, p.height), std::max(1, p.width));
  double hi = 0;
  for (double v : p.values) hi = std::max(hi, v);
  const double s = hi > 0 ? 1.0 / hi : 0.0;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x)
      for (int c = 0; c < Image::kChannels; ++c) img.at(y, x, c) = std::clamp(p.at(y, x) * s, 0.0, 1.0);
  return img;
}

}  // namespace controlloc
