#pragma once

#include <span>
#include <string>
#include <vector>

#include "hoi/tensor.hpp"

namespace hoi {

struct OptimizerConfig {
  enum class Kind { Sgd, AdamW };
  Kind kind = Kind::AdamW;
  double momentum = 0.9;       // SGD
  double beta1 = 0.9;          // AdamW
  double beta2 = 0.999;        // AdamW
  double eps = 1e-8;           // AdamW
  double weight_decay = 1e-4;  // decoupled, matrices only
  double clip_norm = 0.0;      // global L2 clip; 0 disables
};

OptimizerConfig::Kind parse_optimizer_kind(const std::string& s);
std::string to_string(OptimizerConfig::Kind k);

/// First-order optimizer with decoupled weight decay. Consumes and clears the
/// parameters' accumulated gradients on every step.
class Optimizer {
 public:
  Optimizer(std::vector<Parameter*> params, OptimizerConfig cfg);

  /// Applies one update with learning rate `lr`. Returns the pre-clip
  /// gradient norm.
  double step(double lr);
  void zero_grad();

 private:
  std::vector<Parameter*> params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long steps_ = 0;
};

}  // namespace hoi
