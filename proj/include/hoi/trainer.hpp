#pragma once

// Training loop over the combined objective, evaluation helpers, and the
// toggle-grid ablation driver.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hoi/config.hpp"
#include "hoi/detector.hpp"
#include "hoi/detector_loss.hpp"
#include "hoi/diagnostics.hpp"
#include "hoi/errors.hpp"
#include "hoi/eval.hpp"
#include "hoi/m2s.hpp"
#include "hoi/scene.hpp"

namespace hoi {

/// Raised when a step produces a non-finite loss.
class TrainingAborted : public DataError {
 public:
  using DataError::DataError;
};

/// Everything the losses need besides the model.
struct TrainingContext {
  const Taxonomy* tax = nullptr;
  EmbeddingTable embeddings;
  SuperclassMap superclasses;
  std::vector<std::size_t> train_counts;
};

/// Dataset settings with the seed derived from the root seed.
DatasetConfig dataset_config(const RunConfig& cfg);
DetectorConfig model_config(const RunConfig& cfg);
EmbeddingTable load_embeddings(const RunConfig& cfg, const Taxonomy& tax);
TrainingContext make_context(const Taxonomy& tax, const RunConfig& cfg, const Dataset& data);
/// Fresh detector initialised from the root seed.
std::unique_ptr<Detector> make_detector(const TrainingContext& ctx, const RunConfig& cfg);
ForwardOptions forward_options(const RunConfig& cfg);

/// Per-objective terms for one scene. Disabled objectives are exact zeros
/// that carry no gradient.
struct StepLosses {
  DetectorLoss detector;
  Tensor con, cal, merge, split;
  Tensor total;
  std::size_t matched = 0;

  LossReport report() const;
};

/// The detector must already be bound (to a tape for training).
StepLosses compute_losses(const Detector& det, const TrainingContext& ctx, const RunConfig& cfg,
                          const SceneAnnotation& scene, std::mt19937_64& rng);

/// Tensor form of the weighted sum; disabled objectives contribute 0.
Tensor total_loss(const Tensor& detector, const Tensor& con, const Tensor& cal, const Tensor& merge,
                  const Tensor& split, const LambdaWeights& w, const ObjectiveToggles& on);

/// Scored triplets for a scene: per query, the `top_k` categories by
/// p(object) * sigmoid(HOI logit).
std::vector<PredictionRecord> predict(Detector& det, const Taxonomy& tax, const SceneAnnotation& scene,
                                      const ForwardOptions& opt, std::size_t top_k);
std::vector<PredictionRecord> predict_all(Detector& det, const Taxonomy& tax, const std::vector<SceneAnnotation>& scenes,
                                          const ForwardOptions& opt, std::size_t top_k);

struct BiasReport {
  InputBiasReport input;
  OutputBiasReport output;
};

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  ObjectiveToggles toggles;
  EvalReport initial_eval;          // before any update
  std::vector<double> lr;           // per epoch
  std::vector<LossReport> losses;   // per epoch, mean over training scenes
  std::vector<EvalReport> evals;    // per epoch, test split
  BiasReport bias;                  // final model
  std::string checkpoint;           // empty when not written
};

/// Bias statistics of a trained model. `rows_at_init` are the HOI classifier
/// rows before training.
BiasReport diagnose(Detector& det, const TrainingContext& ctx, const RunConfig& cfg,
                    const std::vector<SceneAnnotation>& test, const Tensor& rows_at_init, const EvalReport& final_eval);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoint and failure dumps
  std::function<void(std::size_t epoch, const LossReport&, const EvalReport&)> on_epoch;
};

struct TrainResult {
  RunRecord record;
  std::unique_ptr<Detector> model;
};

TrainResult train(const RunConfig& cfg, const Taxonomy& tax, const Dataset& data, const TrainOptions& opt = {});

struct AblationRow {
  std::string name;
  ObjectiveToggles toggles;
};

/// baseline, +HOR mask, +contrastive, +calibration, +merge, +split; each row
/// adds one objective to the previous.
std::vector<AblationRow> incremental_grid();

struct AblationRun {
  std::string row;
  std::uint64_t seed = 0;
  RunRecord record;
};

/// Every row on every seed; rows share the dataset and initialisation seed.
std::vector<AblationRun> ablate(const RunConfig& cfg, const Taxonomy& tax, const std::vector<AblationRow>& grid,
                                const std::vector<std::uint64_t>& seeds, const TrainOptions& opt = {});

}  // namespace hoi
