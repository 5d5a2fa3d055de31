#pragma once

#include <cstdint>
#include <vector>

namespace hoi {

struct KMeansResult {
  std::vector<std::size_t> assignment;  // per point
  std::vector<double> centroids;        // k x dim, row-major
  std::vector<double> inertia;          // within-cluster sum of squares after each iteration
  std::size_t iterations = 0;
};

/// Lloyd's algorithm on n x dim row-major points with k-means++ seeding.
/// Stops after `max_iter` iterations or when no centroid moves more than
/// `tol`. A cluster left empty is re-seeded at the point farthest from its
/// centroid.
KMeansResult kmeans(const std::vector<double>& points, std::size_t n, std::size_t dim, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter = 100, double tol = 1e-9);

}  // namespace hoi
