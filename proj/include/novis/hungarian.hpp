#pragma once

// Kuhn-Munkres / shortest-augmenting-path solver for the linear assignment
// problem with real-valued costs. Exact optimum, O(n^3).

#include <limits>
#include <vector>

#include "novis/tensor.hpp"

namespace novis {

namespace detail {

// Square min-cost solver; cost is n x n row-major. Returns row -> column.
inline std::vector<int> assignment_square(const std::vector<double>& cost, int n) {
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> col_row(static_cast<std::size_t>(n) + 1, 0);  // column -> row (1-based)
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    col_row[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = col_row[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] -
                           u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(col_row[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (col_row[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      col_row[static_cast<std::size_t>(j0)] = col_row[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (col_row[static_cast<std::size_t>(j)] != 0)
      row_col[static_cast<std::size_t>(col_row[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_col;
}

}  // namespace detail

// Minimum-cost one-to-one assignment for a rows x cols matrix (row-major).
// min(rows, cols) pairs are matched; the result maps each row to its column
// or -1. Rectangular instances are padded with zero-cost dummies, which
// leaves the optimum over the real entries unchanged.
inline std::vector<int> solve_assignment_min(const std::vector<double>& cost, int rows,
                                             int cols) {
  check_contract(static_cast<long long>(rows) * cols == static_cast<long long>(cost.size()),
                 "solve_assignment_min: cost size mismatch");
  if (rows == 0 || cols == 0) return std::vector<int>(static_cast<std::size_t>(rows), -1);
  const int n = rows > cols ? rows : cols;
  std::vector<double> padded(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      padded[static_cast<std::size_t>(i) * n + j] = cost[static_cast<std::size_t>(i) * cols + j];
  auto full = detail::assignment_square(padded, n);
  std::vector<int> out(static_cast<std::size_t>(rows), -1);
  for (int i = 0; i < rows; ++i) {
    const int j = full[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = j < cols ? j : -1;
  }
  return out;
}

// Maximum-similarity variant.
inline std::vector<int> solve_assignment_max(const std::vector<double>& sim, int rows,
                                             int cols) {
  std::vector<double> neg(sim.size());
  for (std::size_t i = 0; i < sim.size(); ++i) neg[i] = -sim[i];
  return solve_assignment_min(neg, rows, cols);
}

}  // namespace novis
