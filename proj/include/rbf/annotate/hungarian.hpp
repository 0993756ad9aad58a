#pragma once

#include <Eigen/Core>

#include <limits>
#include <utility>
#include <vector>

#include "rbf/core/error.hpp"

namespace rbf::annotate {

inline constexpr double kAssignmentPadCost = 1e6;

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double cost = 0.0;
};

// Minimum-cost assignment of size min(m, n). Rectangular inputs are padded to
// square with a constant cost; pairs that land on padding are dropped.
// Shortest augmenting path with potentials, O(n^3).
inline Assignment hungarian(const Eigen::MatrixXd& cost) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  Assignment out;
  if (m == 0 || n == 0) return out;
  if (!cost.allFinite()) throw DataError("hungarian: cost matrix has non-finite entries");

  const int s = std::max(m, n);
  auto at = [&](int i, int j) { return (i < m && j < n) ? cost(i, j) : kAssignmentPadCost; };

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source.
  std::vector<double> u(static_cast<size_t>(s + 1), 0.0), v(static_cast<size_t>(s + 1), 0.0);
  std::vector<int> p(static_cast<size_t>(s + 1), 0), way(static_cast<size_t>(s + 1), 0);
  for (int i = 1; i <= s; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(s + 1), inf);
    std::vector<char> used(static_cast<size_t>(s + 1), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= s; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = at(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= s; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> colOfRow(static_cast<size_t>(s), -1);
  for (int j = 1; j <= s; ++j) colOfRow[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
  for (int i = 0; i < m; ++i) {
    const int j = colOfRow[static_cast<size_t>(i)];
    if (j < n) {
      out.pairs.emplace_back(i, j);
      out.cost += cost(i, j);
    }
  }
  return out;
}

}  // namespace rbf::annotate
