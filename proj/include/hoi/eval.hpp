#pragma once

// Triplet detection mAP. A prediction is a true positive when its category
// matches and both the human and the object IoU exceed the threshold; each
// ground truth is consumed once, greedily in descending score order. AP uses
// 101-point interpolation.

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hoi/scene.hpp"
#include "hoi/taxonomy.hpp"

namespace hoi {

struct PredictionRecord {
  std::uint64_t scene_id = 0;
  Box human;
  Box object;
  std::size_t object_class = 0;
  std::size_t verb_class = 0;
  double score = 0.0;
};

enum class EvalSetting { Default, KnownObject };

struct EvalOptions {
  EvalSetting setting = EvalSetting::Default;
  double iou_threshold = 0.5;
  std::size_t rare_threshold = 10;  // rare: fewer training occurrences than this
};

struct EvalReport {
  double map_full = 0, map_rare = 0, map_nonrare = 0, map_known_object = 0;
  std::vector<std::optional<double>> per_category_ap;  // empty when the category has no ground truth
  std::vector<std::size_t> gt_counts;
  std::vector<bool> rare;
  EvalSetting setting = EvalSetting::Default;
};

/// `train_counts` decides the rare split. Predictions for unknown scenes
/// throw DataError. Means over an empty split are NaN.
EvalReport evaluate(const Taxonomy& tax, std::span<const PredictionRecord> preds,
                    std::span<const SceneAnnotation> gts, const std::vector<std::size_t>& train_counts,
                    const EvalOptions& opt = {});

/// 101-point interpolated AP from a ranked TP/FP list and the number of
/// ground-truth instances.
double interpolated_ap(const std::vector<bool>& ranked_tp, std::size_t n_gt);

enum class Scenario { S1, S2 };

struct RoleReport {
  std::vector<std::optional<double>> per_verb_ap;
  double mean_ap = 0;
};

/// Role AP per verb (object class is not scored). For verbs without an
/// object, S1 requires the predicted object box to be the empty sentinel and
/// S2 ignores it.
RoleReport scenario_eval(const Taxonomy& tax, std::span<const PredictionRecord> preds,
                         std::span<const SceneAnnotation> gts, Scenario scenario, double iou_threshold = 0.5);

/// Ground-truth outcome from greedy matching: hit[s][t] is true when
/// triplet t of scene s was claimed by a true positive.
std::vector<std::vector<bool>> ground_truth_hits(const Taxonomy& tax, std::span<const PredictionRecord> preds,
                                                 std::span<const SceneAnnotation> gts, double iou_threshold = 0.5);

nlohmann::json to_json(const PredictionRecord& p);
PredictionRecord prediction_from_json(const nlohmann::json& j);
void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> preds);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

nlohmann::json to_json(const EvalReport& r);

}  // namespace hoi
