#include "hoi/hungarian.hpp"

#include <cmath>
#include <limits>

#include "hoi/errors.hpp"

namespace hoi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest augmenting path with potentials for n <= m. a is 1-indexed
// (n+1)x(m+1); returns the column of each row.
std::vector<std::size_t> solve_rows(const std::vector<double>& a, std::size_t n, std::size_t m) {
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
        const double cur = a[i0 * (m + 1) + j] - u[i0] - v[j];
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
  std::vector<std::size_t> col_of(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) col_of[p[j] - 1] = j - 1;
  return col_of;
}

// Optimal cost over the sub-matrix of the given rows and columns, matching
// min(|rows|, |cols|) pairs.
double residual_cost(const CostMatrix& c, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  if (rows.empty() || cols.empty()) return 0.0;
  const bool flip = rows.size() > cols.size();
  const auto& R = flip ? cols : rows;
  const auto& C = flip ? rows : cols;
  const std::size_t n = R.size(), m = C.size();
  std::vector<double> a((n + 1) * (m + 1), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      a[(i + 1) * (m + 1) + j + 1] = flip ? c(C[j], R[i]) : c(R[i], C[j]);
  const auto col_of = solve_rows(a, n, m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += a[(i + 1) * (m + 1) + col_of[i] + 1];
  return total;
}

void check_finite(const CostMatrix& c) {
  for (double x : c.values)
    if (!std::isfinite(x)) throw DataError("assignment cost matrix holds a non-finite entry");
}

}  // namespace

CostMatrix::CostMatrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != r * c) throw DimensionError("cost matrix data does not match its shape");
}

double assignment_cost(const CostMatrix& cost) {
  check_finite(cost);
  std::vector<std::size_t> rows(cost.rows), cols(cost.cols);
  for (std::size_t i = 0; i < cost.rows; ++i) rows[i] = i;
  for (std::size_t j = 0; j < cost.cols; ++j) cols[j] = j;
  return residual_cost(cost, rows, cols);
}

MatchResult hungarian(const CostMatrix& cost) {
  const double best = assignment_cost(cost);
  const double tol = 1e-12 * (1.0 + std::abs(best));
  const std::size_t want = std::min(cost.rows, cost.cols);

  MatchResult out;
  std::vector<char> gt_used(cost.cols, 0);
  double fixed = 0.0;
  std::size_t matched = 0;
  for (std::size_t q = 0; q < cost.rows; ++q) {
    std::vector<std::size_t> rest_rows;
    for (std::size_t r = q + 1; r < cost.rows; ++r) rest_rows.push_back(r);
    auto free_cols = [&](std::size_t skip) {
      std::vector<std::size_t> cols;
      for (std::size_t j = 0; j < cost.cols; ++j)
        if (!gt_used[j] && j != skip) cols.push_back(j);
      return cols;
    };
    bool placed = false;
    for (std::size_t g = 0; g < cost.cols && !placed; ++g) {
      if (gt_used[g]) continue;
      const auto cols = free_cols(g);
      if (matched + 1 + std::min(rest_rows.size(), cols.size()) != want) continue;
      const double total = fixed + cost(q, g) + residual_cost(cost, rest_rows, cols);
      if (total <= best + tol) {
        gt_used[g] = 1;
        fixed += cost(q, g);
        ++matched;
        out.pairs.emplace_back(q, g);
        placed = true;
      }
    }
    if (!placed) out.unmatched_queries.push_back(q);
  }
  if (matched != want) throw ContractError("tie-break refinement lost the optimum");
  out.cost = fixed;
  return out;
}

}  // namespace hoi
