// hungarian.hpp: rectangular linear assignment (Kuhn-Munkres with row/column potentials)
#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace controlloc {

// Minimum-cost assignment for a rows x cols cost matrix (row-major). Every row is
// assigned when rows <= cols, otherwise every column is. Returns, for each row,
// the assigned column or -1.
inline std::vector<int> solve_assignment(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
  if (cost.size() != rows * cols) throw std::invalid_argument("solve_assignment: cost size mismatch");
  std::vector<int> result(rows, -1);
  if (rows == 0 || cols == 0) return result;
  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t m = transposed ? rows : cols;
  auto c = [&](std::size_t i, std::size_t j) { return transposed ? cost[j * cols + i] : cost[i * cols + j]; };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based arrays; p[j] is the row matched to column j, 0 = none.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed)
      result[j - 1] = static_cast<int>(p[j] - 1);
    else
      result[p[j] - 1] = static_cast<int>(j - 1);
  }
  return result;
}

}  // namespace controlloc
