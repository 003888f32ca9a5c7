#include <gtest/gtest.h>

#include "controlloc/geometry.hpp"
#include "controlloc/hungarian.hpp"
#include "controlloc/random.hpp"

using namespace controlloc;

TEST(Iou, IdentityIsOne) {
  const BBox a{0, 0, 10, 10};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
}

TEST(Iou, DisjointIsZero) { EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0); }

TEST(Iou, HalfShiftIsOneThird) { EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0, 1e-15); }

TEST(Iou, DegenerateFlagged) {
  const IouResult r = iou_checked({0, 0, 0, 10}, {0, 0, 10, 10});
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.value, 0.0);
}

TEST(Iou, SymmetricAndBounded) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const BBox a = BBox::from_center(rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 20), rng.uniform(1, 20));
    const BBox b = BBox::from_center(rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 20), rng.uniform(1, 20));
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Iou, GradientMatchesFiniteDifferences) {
  const BBox a{2, 3, 14, 11}, b{6, 1, 18, 9};
  const auto g = iou_grad(a, b);
  const double h = 1e-6;
  for (int k = 0; k < 4; ++k) {
    BBox p = a, m = a;
    double* pp[] = {&p.x1, &p.y1, &p.x2, &p.y2};
    double* mm[] = {&m.x1, &m.y1, &m.x2, &m.y2};
    *pp[k] += h;
    *mm[k] -= h;
    EXPECT_NEAR(g[static_cast<std::size_t>(k)], (iou(p, b) - iou(m, b)) / (2 * h), 1e-7) << k;
  }
}

TEST(BBoxTest, MakeRejectsEmptyAndNonFinite) {
  EXPECT_THROW(BBox::make(0, 0, 0, 5), std::invalid_argument);
  EXPECT_THROW(BBox::make(0, 0, 5, -1), std::invalid_argument);
  EXPECT_THROW(BBox::make(0, 0, std::nan(""), 5), std::invalid_argument);
  EXPECT_NO_THROW(BBox::make(0, 0, 1, 1));
}

TEST(Center, Examples) {
  EXPECT_EQ(center({0, 0, 10, 10}), (Point{5, 5}));
  EXPECT_EQ(center({100, 100, 200, 200}), (Point{150, 150}));
  EXPECT_EQ(center({0, 0, 3, 7}), (Point{1.5, 3.5}));
}

TEST(Shift, Examples) {
  const BBox b{100, 100, 200, 200};
  EXPECT_EQ(shift(b, {10, 0}, 0), b);
  EXPECT_EQ(shift(b, {10, 0}, 3), (BBox{130, 100, 230, 200}));
  EXPECT_EQ(shift({0, 0, 10, 10}, {0, -5}, 2), (BBox{0, -10, 10, 0}));
}

TEST(Nms, SingleBoxKept) {
  EXPECT_EQ(nms({{{0, 0, 10, 10}, 0.9, 0}}, 0.5, 0.25), (std::vector<std::size_t>{0}));
}

TEST(Nms, OverlappingSameClassKeepsHigher) {
  // IOU 0.8: [0,10] vs [0,9]x... use widths 10 and 8 on the same left edge
  const BBox a{0, 0, 10, 10}, b{0, 0, 8, 10};
  ASSERT_NEAR(iou(a, b), 0.8, 1e-12);
  EXPECT_EQ(nms({{b, 0.7, 0}, {a, 0.9, 0}}, 0.5, 0.25), (std::vector<std::size_t>{1}));
}

TEST(Nms, DifferentClassesBothKept) {
  const BBox a{0, 0, 10, 10}, b{0, 0, 8, 10};
  EXPECT_EQ(nms({{a, 0.9, 0}, {b, 0.7, 1}}, 0.5, 0.25).size(), 2u);
}

TEST(Nms, ConfidenceThresholdIsStrict) { EXPECT_TRUE(nms({{{0, 0, 10, 10}, 0.25, 0}}, 0.5, 0.25).empty()); }

TEST(Nms, RejectsBadThresholds) {
  EXPECT_THROW(nms({}, 1.5, 0.25), std::invalid_argument);
  EXPECT_THROW(nms({}, 0.5, -0.1), std::invalid_argument);
}

namespace {
double brute_min_cost(const std::vector<double>& c, std::size_t n, std::size_t m) {
  // rows <= cols assumed; try every injective map
  std::vector<std::size_t> cols(m);
  for (std::size_t j = 0; j < m; ++j) cols[j] = j;
  double best = 1e300;
  do {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += c[i * m + cols[i]];
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}
}  // namespace

TEST(Assignment, MatchesEnumerationOnSmallSquares) {
  Rng rng(17);
  for (std::size_t n : {2u, 3u, 4u})
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> c(n * n);
      for (double& v : c) v = rng.uniform();
      const std::vector<int> a = solve_assignment(c, n, n);
      double s = 0;
      std::vector<char> used(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        ASSERT_GE(a[i], 0);
        EXPECT_FALSE(used[static_cast<std::size_t>(a[i])]);
        used[static_cast<std::size_t>(a[i])] = 1;
        s += c[i * n + static_cast<std::size_t>(a[i])];
      }
      EXPECT_NEAR(s, brute_min_cost(c, n, n), 1e-12);
    }
}

TEST(Assignment, RectangularLeavesRowsUnassigned) {
  const std::vector<double> c{0.1, 0.9, 0.2, 0.3, 0.5, 0.05};  // 3 rows, 2 cols
  const std::vector<int> a = solve_assignment(c, 3, 2);
  int assigned = 0;
  for (int v : a) assigned += v >= 0;
  EXPECT_EQ(assigned, 2);
  EXPECT_EQ(a[0], 0);
  EXPECT_EQ(a[2], 1);
}
