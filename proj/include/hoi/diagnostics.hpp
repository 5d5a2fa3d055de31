#pragma once

// Sibling-bias statistics: how often ground truth with an in-image sibling
// is missed compared with ground truth without one, and how a category's
// initial classifier similarity to the others relates to its final AP.

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hoi/eval.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

struct InputBiasReport {
  std::optional<double> with_siblings;     // absent when no instance has a sibling
  std::optional<double> without_siblings;  // absent when every instance has one
  std::optional<double> delta;             // with - without
  std::size_t n_with = 0, n_without = 0;
};

/// An instance is an error when no prediction claims it under greedy
/// matching. Rates are per category, then averaged over the categories that
/// have instances in the partition.
InputBiasReport diagnose_input_bias(const Taxonomy& tax, std::span<const PredictionRecord> preds,
                                    std::span<const SceneAnnotation> gts, double iou_threshold = 0.5);

struct OutputBiasRow {
  std::size_t category = 0;
  double mean_similarity = 0;  // mean cosine to every other category's row
  double ap = 0;
};

struct OutputBiasReport {
  std::vector<OutputBiasRow> rows;  // non-head categories with a defined AP
  std::optional<double> slope;      // least-squares d(AP)/d(similarity)
  std::vector<std::size_t> head;    // categories treated as head
};

/// `rows_at_init`: |C| x d classifier rows captured before training. Head =
/// the ceil(head_fraction * |C|) most frequent training categories.
OutputBiasReport diagnose_output_bias(const Tensor& rows_at_init, const std::vector<std::optional<double>>& final_ap,
                                      const std::vector<std::size_t>& train_counts, double head_fraction = 0.1);

nlohmann::json to_json(const InputBiasReport& r);
nlohmann::json to_json(const OutputBiasReport& r);

}  // namespace hoi
