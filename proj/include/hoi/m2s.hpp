#pragma once

// Merge-then-split: superclasses from clustering verb and object text
// features, a superclass classification loss, and a contrastive loss among
// the categories most often ranked close to the queries.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "hoi/embedding.hpp"
#include "hoi/hungarian.hpp"
#include "hoi/taxonomy.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

struct SuperclassMap {
  std::size_t m1 = 0, m2 = 0;
  std::vector<std::size_t> verb_cluster;    // per verb, in [0, m1)
  std::vector<std::size_t> object_cluster;  // per object, in [0, m2)
  std::vector<std::size_t> hoi_super;       // per category, verb_cluster * m2 + object_cluster
  std::vector<double> verb_centroids;       // m1 x dim
  std::vector<double> object_centroids;     // m2 x dim

  std::size_t size() const { return m1 * m2; }
};

SuperclassMap build_superclasses(const Taxonomy& tax, const EmbeddingTable& emb, std::size_t m1, std::size_t m2,
                                 std::uint64_t seed);

nlohmann::json superclasses_to_json(const Taxonomy& tax, const SuperclassMap& map);

/// Mean softmax cross-entropy of matched queries' superclass logits.
Tensor merge_loss(const Tensor& logits, const std::vector<std::size_t>& labels);

struct SplitContext {
  std::vector<std::size_t> selected;  // categories, most frequent first
  Tensor features;                    // |selected| x dim text rows
  std::vector<std::size_t> eligible;  // indices into the matched list
  std::vector<std::size_t> targets;   // per eligible entry, position in `selected`
};

/// Top-k1 categories per query by cosine similarity to `text`, the k2 most
/// frequent across queries, and the matched queries whose ground-truth
/// category is among them. `matched_categories[i]` is the category of the
/// i-th matched pair.
SplitContext select_topk_categories(const Tensor& queries, const Tensor& text, std::size_t k1, std::size_t k2,
                                    const std::vector<std::size_t>& matched_categories);

/// Same as above with the selection already made (it is a detector input).
SplitContext split_context(const std::vector<std::size_t>& selected, const Tensor& text,
                           const std::vector<std::size_t>& matched_categories);

/// -(1/N) sum_i log softmax_j(<q_i, t_j> / tau)[target_i] with unit-normalised
/// rows; 0 when there are no rows.
Tensor split_loss(const Tensor& queries, const Tensor& context, const std::vector<std::size_t>& targets, double tau);

}  // namespace hoi
