#include "vtrace/hungarian.hpp"

#include <limits>

namespace vtrace {

namespace {

// Kuhn-Munkres with potentials; requires n_rows <= n_cols.
std::vector<int> solve(const std::vector<double>& a, int n, int m) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[std::size_t(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
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
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

std::vector<int> min_cost_assignment(const std::vector<double>& cost, int n_rows,
                                     int n_cols, double forbidden) {
  if (n_rows == 0 || n_cols == 0) return std::vector<int>(n_rows, -1);

  // Cap forbidden entries at a large finite value so potentials stay finite.
  const double big = forbidden;
  std::vector<int> result(n_rows, -1);

  if (n_rows <= n_cols) {
    std::vector<double> a(cost);
    for (double& c : a) c = std::min(c, big);
    std::vector<int> rc = solve(a, n_rows, n_cols);
    for (int i = 0; i < n_rows; ++i)
      if (rc[i] >= 0 && cost[std::size_t(i) * n_cols + rc[i]] < forbidden) result[i] = rc[i];
  } else {
    std::vector<double> t(std::size_t(n_cols) * n_rows);
    for (int i = 0; i < n_rows; ++i)
      for (int j = 0; j < n_cols; ++j)
        t[std::size_t(j) * n_rows + i] = std::min(cost[std::size_t(i) * n_cols + j], big);
    std::vector<int> cr = solve(t, n_cols, n_rows);
    for (int j = 0; j < n_cols; ++j)
      if (cr[j] >= 0 && cost[std::size_t(cr[j]) * n_cols + j] < forbidden) result[cr[j]] = j;
  }
  return result;
}

}  // namespace vtrace
