#pragma once

#include <string_view>
#include <vector>

#include "hmar/model/params.hpp"

namespace hmar {

enum class OptimizerKind { adamw, sgd };

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double lr = 1e-3;
  double min_lr_ratio = 0.1;  // cosine floor as a fraction of lr
  std::size_t warmup = 0;
  double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;
  double momentum = 0.9;       // sgd
  double weight_decay = 0.01;  // decoupled; applied to matrices only
  double clip_norm = 1.0;      // 0 disables global-norm clipping
};

// Linear warmup then cosine decay to min_lr_ratio * lr over `total` steps.
double learning_rate(const OptimizerConfig& cfg, std::size_t step, std::size_t total);

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, const ModelParams& like, std::vector<bool> trainable);

  // Applies one update from accumulated gradients. Returns the pre-clip
  // global gradient norm.
  double step(ModelParams& params, const ParamTable<float>& grads, std::size_t step, std::size_t total);

  const OptimizerConfig& config() const noexcept { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<bool> trainable_;
  ParamTable<float> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace hmar
