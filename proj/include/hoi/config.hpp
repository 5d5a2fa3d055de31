#pragma once

// Flat "key = value" run configuration. Unknown keys and malformed values are
// rejected; '#' starts a comment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "hoi/detector.hpp"
#include "hoi/detector_loss.hpp"
#include "hoi/embedding.hpp"
#include "hoi/optim.hpp"
#include "hoi/scene.hpp"

namespace hoi {

struct ObjectiveToggles {
  bool hor_mask = false;
  bool con = false;
  bool cal = false;
  bool merge = false;
  bool split = false;

  bool operator==(const ObjectiveToggles&) const = default;
  static ObjectiveToggles all() { return {true, true, true, true, true}; }
};

struct LambdaWeights {
  double detector = 1.0;
  double con = 1.0;
  double cal = 0.5;
  double merge = 1.0;
  double split = 0.5;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig data;
  std::string embeddings = "pseudo";  // or a path to an embedding file
  PseudoEmbeddingConfig pseudo;  // dim follows model.dim
  DetectorConfig model;
  DetectorLossConfig det_loss;
  MatchWeights match;
  LambdaWeights lambda;
  double tau_con = 0.07;
  double tau_split = 0.07;
  std::size_t k1 = 2;
  std::size_t k2 = 10;
  std::size_t m1 = 5;
  std::size_t m2 = 5;
  bool negated_cal_sign = false;
  ObjectiveToggles toggles;
  OptimizerConfig optim;
  double lr = 1e-3;
  std::size_t epochs = 20;
  std::size_t lr_decay_epoch = 14;
  double lr_decay_factor = 0.1;
  std::size_t batch_size = 8;
  std::size_t eval_top_k = 10;  // predictions kept per query

  /// Parses "key=value" lines on top of the defaults.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Applies one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Every key with its current value, canonical form.
  std::map<std::string, std::string> entries() const;
  std::string to_text() const;
  /// FNV-1a of the canonical text, as 16 hex digits.
  std::string hash() const;
  /// Throws ConfigError when a value is out of range.
  void validate() const;
};

/// Every config key, in canonical order.
const std::vector<std::string>& config_keys();

/// Weighted sum of the objectives; disabled ones contribute exactly 0.
double total_loss(const LossReport& r, const LambdaWeights& w, const ObjectiveToggles& on);

}  // namespace hoi
