#include "hoi/optim.hpp"

#include <cmath>

#include "hoi/errors.hpp"

namespace hoi {

OptimizerConfig::Kind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerConfig::Kind::Sgd;
  if (s == "adamw") return OptimizerConfig::Kind::AdamW;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adamw)");
}

std::string to_string(OptimizerConfig::Kind k) {
  return k == OptimizerConfig::Kind::Sgd ? "sgd" : "adamw";
}

Optimizer::Optimizer(std::vector<Parameter*> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto* p : params_) {
    m_.emplace_back(p->data.size(), 0.0);
    if (cfg_.kind == OptimizerConfig::Kind::AdamW) v_.emplace_back(p->data.size(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double Optimizer::step(double lr) {
  double sq = 0.0;
  for (const auto* p : params_)
    for (double g : p->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw DataError("non-finite gradient norm");
  const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    const double decay = p.shape.size() >= 2 ? lr * cfg_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double g = p.grad[i] * clip;
      p.data[i] -= decay * p.data[i];
      if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
        m_[k][i] = cfg_.momentum * m_[k][i] + g;
        p.data[i] -= lr * m_[k][i];
      } else {
        m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
        v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
        p.data[i] -= lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + cfg_.eps);
      }
    }
    p.zero_grad();
  }
  return norm;
}

}  // namespace hoi
