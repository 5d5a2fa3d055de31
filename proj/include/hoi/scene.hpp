#pragma once

// Synthetic scenes: ground-truth triplets plus a feature grid standing in for
// the visual encoder output. Each grid cell mixes the embeddings of the
// triplets whose boxes cover it, so overlapping siblings interfere.

#include <cstdint>
#include <utility>
#include <vector>

#include "hoi/embedding.hpp"
#include "hoi/taxonomy.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

struct GridConfig {
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t dim = 64;
  double noise_sigma = 0.1;
};

struct SceneConfig {
  std::size_t n_triplets = 2;
  double sibling_rate = 0.6;
  std::uint64_t seed = 0;
  std::uint64_t scene_id = 0;
  double zipf_exponent = 1.0;
  GridConfig grid;
};

/// How far the sampler fell short of what it was asked for.
struct SceneMeta {
  std::size_t sibling_requests = 0;
  std::size_t sibling_shortfall = 0;    // sibling requested, none possible
  std::size_t placement_shortfall = 0;  // box constraints not met within budget
};

struct SceneAnnotation {
  std::uint64_t scene_id = 0;
  std::vector<HoiTriplet> triplets;
  Tensor feature_grid;  // H x W x dim
  SceneMeta meta;
};

/// Owns the "world" embedding used to paint feature grids. It is always the
/// pseudo backend with a fixed seed, independent of classifier embeddings.
class SceneGenerator {
 public:
  SceneGenerator(const Taxonomy& tax, std::size_t dim);

  const Taxonomy& taxonomy() const { return *tax_; }

  SceneAnnotation generate(const SceneConfig& cfg) const;

  /// Deterministic in (triplets, seed, scene_id, grid).
  Tensor render(const std::vector<HoiTriplet>& triplets, const GridConfig& grid, std::uint64_t seed,
                std::uint64_t scene_id) const;

 private:
  const Taxonomy* tax_;
  EmbeddingTable world_;
  std::vector<double> person_;
};

SceneAnnotation generate_scene(const Taxonomy& tax, const SceneConfig& cfg);

/// Unordered pairs (i < j) sharing exactly one of object class or verb class.
std::vector<std::pair<std::size_t, std::size_t>> find_input_siblings(const std::vector<HoiTriplet>& triplets);
inline std::vector<std::pair<std::size_t, std::size_t>> find_input_siblings(const SceneAnnotation& s) {
  return find_input_siblings(s.triplets);
}

/// Union region of a triplet (the human box when there is no object).
Box union_box(const HoiTriplet& t);

/// Sampling weights 1/(rank+1)^s over categories.
std::vector<double> zipf_weights(std::size_t n, double exponent);

struct DatasetConfig {
  std::size_t n_train = 500;
  std::size_t n_test = 200;
  std::size_t min_triplets = 1;
  std::size_t max_triplets = 4;
  double sibling_rate = 0.6;
  double zipf_exponent = 1.0;
  GridConfig grid;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetConfig config;
  std::vector<SceneAnnotation> train;
  std::vector<SceneAnnotation> test;
};

/// Train scenes get ids [0, n_train), test scenes follow.
Dataset generate_dataset(const Taxonomy& tax, const DatasetConfig& cfg);

/// Per-category occurrence counts over a scene list.
std::vector<std::size_t> category_counts(const Taxonomy& tax, const std::vector<SceneAnnotation>& scenes);

}  // namespace hoi
