#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace hoi {

/// Row-major cost matrix, rows = predictions (queries), cols = ground truth.
struct CostMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, std::vector<double> v);
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (query, gt), ascending query
  std::vector<std::size_t> unmatched_queries;
  double cost = 0.0;
};

/// Minimum-cost assignment of min(rows, cols) pairs. Among cost-equal optima
/// (within 1e-12 relative) the lexicographically smallest one is returned:
/// query 0 takes the lowest usable gt index, then query 1, and so on, with
/// "unmatched" ordered after every gt. Non-finite costs throw DataError.
MatchResult hungarian(const CostMatrix& cost);

/// Optimal total cost only, without the tie-break refinement.
double assignment_cost(const CostMatrix& cost);

}  // namespace hoi
