#include "hmar/training/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace hmar {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adamw ? "adamw" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "sgd") return OptimizerKind::sgd;
  throw InvalidArgument("unknown optimizer \"" + std::string(s) + "\"");
}

double learning_rate(const OptimizerConfig& cfg, std::size_t step, std::size_t total) {
  if (step < cfg.warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup);
  const std::size_t span = total > cfg.warmup ? total - cfg.warmup : 1;
  const double p = std::min(1.0, static_cast<double>(step - cfg.warmup) / static_cast<double>(span));
  const double floor = cfg.min_lr_ratio * cfg.lr;
  return floor + 0.5 * (cfg.lr - floor) * (1.0 + std::cos(std::numbers::pi * p));
}

Optimizer::Optimizer(OptimizerConfig cfg, const ModelParams& like, std::vector<bool> trainable)
    : cfg_(cfg), trainable_(std::move(trainable)), m_(like.zeros_like()), v_(like.zeros_like()) {
  if (trainable_.size() != like.size()) throw InvalidArgument("Optimizer: trainable mask length mismatch");
  if (!(cfg_.lr > 0.0)) throw InvalidArgument("Optimizer: lr must be > 0");
}

double Optimizer::step(ModelParams& params, const ParamTable<float>& grads, std::size_t step, std::size_t total) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable_[i]) continue;
    for (float g : grads.at(i).data()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
  const double lr = learning_rate(cfg_, step, total);
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable_[i]) continue;
    auto p = params.at(i).data();
    auto g = grads.at(i).data();
    auto m = m_.at(i).data();
    auto v = v_.at(i).data();
    const bool decay = params.at(i).rank() == 2 && params.names()[i].find("emb") == std::string::npos;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]) * clip;
      double pj = p[j];
      if (decay) pj -= lr * cfg_.weight_decay * pj;
      if (cfg_.kind == OptimizerKind::adamw) {
        m[j] = static_cast<float>(cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj);
        v[j] = static_cast<float>(cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj);
        pj -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      } else {
        m[j] = static_cast<float>(cfg_.momentum * m[j] + gj);
        pj -= lr * m[j];
      }
      p[j] = static_cast<float>(pj);
    }
  }
  return norm;
}

}  // namespace hmar
