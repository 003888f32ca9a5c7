#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "controlloc/imaging.hpp"

using namespace controlloc;

namespace {
std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("controlloc_test_" + name)).string();
}

Image ramp(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::fmod(0.013 * (y * w + x) + 0.3 * c, 1.0);
  return img;
}
}  // namespace

TEST(ApplyPatch, IdenticalPatchIsIdempotent) {
  const Image x = ramp(16, 16);
  PatchSpec p{Image(4, 5), 3, 6};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j)
      for (int c = 0; c < 3; ++c) p.pixels.at(i, j, c) = x.at(3 + i, 6 + j, c);
  EXPECT_EQ(apply_patch(x, p), x);
}

TEST(ApplyPatch, BlackSquareOnWhite) {
  const Image x(8, 8, 1.0);
  const Image y = apply_patch(x, PatchSpec::filled(2, 2, 0.0, 0, 0));
  int zeros = 0;
  for (int yy = 0; yy < 8; ++yy)
    for (int xx = 0; xx < 8; ++xx) zeros += y.at(yy, xx, 0) == 0.0;
  EXPECT_EQ(zeros, 4);
}

TEST(ApplyPatch, DisjointPastesCommute) {
  const Image x = ramp(16, 16);
  const PatchSpec a = PatchSpec::filled(3, 3, 0.1, 1, 1), b = PatchSpec::filled(4, 2, 0.8, 9, 10);
  EXPECT_EQ(apply_patch(apply_patch(x, a), b), apply_patch(apply_patch(x, b), a));
}

TEST(ApplyPatch, OutOfBoundsPlacementIsClamped) {
  bool clamped = false;
  const Image y = apply_patch(Image(8, 8, 1.0), PatchSpec::filled(2, 2, 0.0, 7, -1), &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(y.at(6, 0, 0), 0.0);
  EXPECT_EQ(y.at(7, 1, 2), 0.0);
}

TEST(SoftMask, ZeroOneAndHalf) {
  const Image x(4, 4, 0.0), p(4, 4, 1.0);
  EXPECT_EQ(apply_soft_mask(x, p, Plane(4, 4, 0.0)), x);
  EXPECT_EQ(apply_soft_mask(x, p, Plane(4, 4, 1.0)), p);
  const Image h = apply_soft_mask(x, p, Plane(4, 4, 0.5));
  for (double v : h.data) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Eot, ZeroRangesGiveIdentitySamples) {
  const auto s = sample_eot(EotParams::identity(4), 7);
  ASSERT_EQ(s.size(), 4u);
  for (const EotSample& t : s) {
    EXPECT_EQ(t.dx, 0.0);
    EXPECT_EQ(t.dy, 0.0);
    EXPECT_EQ(t.angle_deg, 0.0);
    EXPECT_EQ(t.brightness, 0.0);
    EXPECT_EQ(t.contrast, 1.0);
    EXPECT_EQ(t.noise_std, 0.0);
  }
}

TEST(Eot, SameSeedAndIterationRepeat) {
  EotParams p;
  p.seed = 5;
  EXPECT_EQ(sample_eot(p, 11), sample_eot(p, 11));
  EXPECT_NE(sample_eot(p, 11), sample_eot(p, 12));
}

TEST(Eot, TranslationIsCentred) {
  EotParams p;
  p.samples = 10000;
  p.seed = 2;
  double mean = 0;
  for (const EotSample& t : sample_eot(p, 0)) {
    EXPECT_LE(std::abs(t.dx), 4.0);
    mean += t.dx;
  }
  EXPECT_NEAR(mean / 10000, 0.0, 0.2);
}

TEST(Eot, IdentitySampleEqualsPaste) {
  const Image x = ramp(16, 16);
  PatchSpec p{ramp(5, 4), 2, 3};
  const EotApplied a = apply_eot(x, p, EotSample::identity());
  EXPECT_EQ(a.image, apply_patch(x, p));
  EXPECT_EQ(a.footprint, p.rect());
  EXPECT_EQ(a.routes.size(), 5u * 4u * 3u);
}

TEST(Eot, QuarterTurnOfTwoByTwo) {
  // [[a,b],[c,d]] -> [[c,a],[d,b]]
  PatchSpec p{Image(2, 2), 1, 1};
  const double a = 0.1, b = 0.2, c = 0.3, d = 0.4;
  for (int k = 0; k < 3; ++k) {
    p.pixels.at(0, 0, k) = a;
    p.pixels.at(0, 1, k) = b;
    p.pixels.at(1, 0, k) = c;
    p.pixels.at(1, 1, k) = d;
  }
  EotSample t;
  t.angle_deg = 90;
  const Image y = apply_eot(Image(4, 4, 0.0), p, t).image;
  EXPECT_DOUBLE_EQ(y.at(1, 1, 0), c);
  EXPECT_DOUBLE_EQ(y.at(1, 2, 0), a);
  EXPECT_DOUBLE_EQ(y.at(2, 1, 0), d);
  EXPECT_DOUBLE_EQ(y.at(2, 2, 0), b);
}

TEST(Eot, BrightnessClampsAtOne) {
  EotSample t;
  t.brightness = 0.1;
  const EotApplied r = apply_eot(Image(4, 4, 0.0), PatchSpec::filled(2, 2, 0.95, 0, 0), t);
  EXPECT_DOUBLE_EQ(r.image.at(0, 0, 0), 1.0);
  for (const PixelRoute& pr : r.routes) EXPECT_EQ(pr.scale, 0.0);  // saturated, no gradient
}

TEST(Eot, RoutedGradientMatchesFiniteDifferenceOfPaste) {
  const Image x = ramp(20, 20);
  PatchSpec p{ramp(6, 5), 5, 7};
  for (double& v : p.pixels.data) v = 0.2 + 0.6 * v;
  EotSample t;
  t.dx = 1.4;
  t.dy = -0.7;
  t.angle_deg = 17;
  t.contrast = 1.05;
  t.brightness = 0.02;
  // loss = sum(w * image); d loss / d image = w
  std::vector<double> w(x.data.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.37 * static_cast<double>(i));
  const auto loss = [&](const PatchSpec& q) {
    const Image y = apply_eot(x, q, t).image;
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * y.data[i];
    return s;
  };
  std::vector<double> g(p.pixels.data.size(), 0.0);
  route_gradient(apply_eot(x, p, t).routes, w, g);
  for (std::size_t k = 0; k < g.size(); k += 7) {
    PatchSpec a = p, b = p;
    a.pixels.data[k] += 1e-5;
    b.pixels.data[k] -= 1e-5;
    EXPECT_NEAR(g[k], (loss(a) - loss(b)) / 2e-5, 1e-6);
  }
}

TEST(Defense, BitDepthOneRoundsUp) {
  EXPECT_DOUBLE_EQ(defense_transform(Image(2, 2, 0.6), BitDepth{1}).at(0, 0, 0), 1.0);
}

TEST(Defense, ZeroNoiseIsIdentity) {
  const Image x = ramp(8, 8);
  EXPECT_EQ(defense_transform(x, GaussianNoise{0.0, 3}), x);
}

TEST(Defense, MedianOfConstantImage) {
  const Image x(9, 9, 0.42);
  EXPECT_EQ(defense_transform(x, MedianBlur{3}), x);
  EXPECT_THROW(defense_transform(x, MedianBlur{4}), std::invalid_argument);
}

TEST(Defense, MedianRemovesIsolatedSpike) {
  Image x(9, 9, 0.2);
  x.at(4, 4, 1) = 1.0;
  EXPECT_DOUBLE_EQ(defense_transform(x, MedianBlur{3}).at(4, 4, 1), 0.2);
}

TEST(ImageIo, PpmRoundTripWithinQuantization) {
  const Image x = ramp(7, 9);
  const std::string path = tmp_path("rt.ppm");
  write_ppm(path, x);
  const Image y = read_ppm(path);
  ASSERT_EQ(y.height, 7);
  ASSERT_EQ(y.width, 9);
  for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_LE(std::abs(x.data[i] - y.data[i]), 1.0 / 255.0);
  std::remove(path.c_str());
}

TEST(ImageIo, ZeroImageRoundTripsExactly) {
  const std::string path = tmp_path("zero.ppm");
  write_ppm(path, Image(3, 4, 0.0));
  EXPECT_EQ(read_ppm(path), Image(3, 4, 0.0));
  std::remove(path.c_str());
}

TEST(ImageIo, BadHeaderIsFormatError) {
  const std::string path = tmp_path("bad.ppm");
  std::ofstream(path, std::ios::binary) << "P3\n2 2\n255\n";
  EXPECT_THROW(read_ppm(path), FormatError);
  std::ofstream(path, std::ios::binary) << "P6\n2 2\n255\n\x01\x02";  // truncated body
  EXPECT_THROW(read_ppm(path), FormatError);
  std::remove(path.c_str());
}

TEST(ImageIo, ClimRoundTripsFloats) {
  const Image x = ramp(5, 6);
  const std::string path = tmp_path("rt.clim");
  write_image(path, x);
  const Image y = read_image(path);
  for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_EQ(y.data[i], static_cast<double>(static_cast<float>(x.data[i])));
  std::ofstream(path, std::ios::binary) << "CLIX0000000000000000";
  EXPECT_THROW(read_clim(path), FormatError);
  std::remove(path.c_str());
}
