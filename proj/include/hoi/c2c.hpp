#pragma once

// Contrastive-then-calibration: same-image positive/negative sets, triplet
// features (semantic slot + learned spatial slots), an InfoNCE-style loss over
// those sets, and reconstruction of queries whose semantics were swapped for
// a sibling's.

#include <random>
#include <vector>

#include "hoi/detector.hpp"
#include "hoi/taxonomy.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

struct SiblingSets {
  std::vector<std::vector<std::size_t>> positives;  // includes the triplet itself
  std::vector<std::vector<std::size_t>> negatives;
};

SiblingSets build_sibling_sets(const std::vector<HoiTriplet>& triplets);

/// Rows cat(semantic_i, spatial_h_i, spatial_o_i).
Tensor triplet_features(const Tensor& semantic, const Tensor& spatial_h, const Tensor& spatial_o);

/// Ground-truth triplet features: text row of each category plus the
/// detector's spatial maps of the true boxes.
Tensor gt_triplet_features(const Detector& det, const Taxonomy& tax, const std::vector<HoiTriplet>& triplets);

/// loss = -(1/N) sum_i log( sum_{j in P_i} e^{s_ij} / sum_{k in P_i u N_i} e^{s_ik} ),
/// s_ij = <q_i / |q_i|, g_j / |g_j|> / tau. Row i of `query_feats` belongs to
/// ground truth `gt_index[i]`; rows whose set has no negatives add 0 but still
/// count in N.
Tensor contrastive_loss(const Tensor& query_feats, const Tensor& gt_feats, const std::vector<std::size_t>& gt_index,
                        const SiblingSets& sets, double tau);

struct ReplacedQuery {
  std::size_t triplet = 0;   // whose spatial slots are kept
  std::size_t sampled = 0;   // negative triplet whose label was borrowed
  std::size_t category = 0;  // borrowed category
  Tensor feature;            // 1 x (C + 2 Ds)
};

/// Semantic slot from a uniformly drawn member of N_i, spatial slots from
/// triplet i itself. `gt_feats` are the rows from gt_triplet_features.
ReplacedQuery build_replaced_query(std::size_t i, const SiblingSets& sets, const Taxonomy& tax,
                                   const std::vector<HoiTriplet>& triplets, const Tensor& text, const Tensor& gt_feats,
                                   std::mt19937_64& rng);

/// sum_i |corrected_i - target_i|_1 / n_norm. `strict_sign` negates it.
Tensor calibration_loss(const Tensor& corrected, const Tensor& targets, double n_norm, bool strict_sign = false);

}  // namespace hoi
