#include "hoi/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hoi/errors.hpp"
#include "hoi/rng.hpp"

namespace hoi {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0;
  for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

KMeansResult kmeans(const std::vector<double>& pts, std::size_t n, std::size_t dim, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter, double tol) {
  if (k == 0 || k > n) throw ConfigError("k-means needs 1 <= k <= number of points");
  if (pts.size() != n * dim) throw DimensionError("k-means point buffer does not match n x dim");
  auto rng = substream(seed, "kmeans");
  KMeansResult r;
  r.centroids.assign(k * dim, 0.0);
  auto centroid = [&](std::size_t c) { return r.centroids.data() + c * dim; };
  auto point = [&](std::size_t i) { return pts.data() + i * dim; };

  // k-means++
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::copy_n(point(first), dim, centroid(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(point(i), centroid(c - 1), dim));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      double u = std::uniform_real_distribution<double>(0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] == 0) continue;
        pick = i;
        if (u < d2[i]) break;
        u -= d2[i];
      }
    }
    std::copy_n(point(pick), dim, centroid(c));
  }

  r.assignment.assign(n, 0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(point(i), centroid(c), dim);
        if (d < best) {
          best = d;
          r.assignment[i] = c;
        }
      }
      ++count[r.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = n;
      double far_d = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[r.assignment[i]] < 2) continue;
        const double d = sq_dist(point(i), centroid(r.assignment[i]), dim);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --count[r.assignment[far]];
      r.assignment[far] = c;
      count[c] = 1;
    }
    std::vector<double> next(k * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim; ++j) next[r.assignment[i] * dim + j] += point(i)[j];
    double moved = 0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < dim; ++j) next[c * dim + j] /= double(count[c]);
      moved = std::max(moved, std::sqrt(sq_dist(next.data() + c * dim, centroid(c), dim)));
    }
    r.centroids = std::move(next);
    double inertia = 0;
    for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(point(i), centroid(r.assignment[i]), dim);
    r.inertia.push_back(inertia);
    r.iterations = it + 1;
    if (moved < tol) break;
  }
  return r;
}

}  // namespace hoi
