#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hmar/model/checkpoint.hpp"
#include "hmar/msvq/codebook.hpp"
#include "hmar/msvq/pyramid.hpp"
#include "hmar/training/dataset.hpp"
#include "hmar/training/loss.hpp"
#include "hmar/training/optimizer.hpp"

namespace hmar {

struct EncodedExample {
  TokenPyramid tokens;
  std::vector<LatentGrid> running;  // cumulative reconstruction after each scale
  std::size_t label = 0;
};

std::vector<EncodedExample> encode_corpus(const Dataset& ds, const Codebook& cb, const ScaleSchedule& sched);
// Rebuilds the running reconstructions of stored pyramids.
std::vector<EncodedExample> attach_running(const std::vector<TokenPyramid>& pyramids,
                                           const std::vector<std::size_t>& labels, const Codebook& cb);

enum class TrainPhase { nextscale = 1, masked = 2 };

struct TrainConfig {
  TrainPhase phase = TrainPhase::nextscale;
  std::size_t steps = 200;
  std::size_t batch = 8;
  WeightingScheme scheme{};
  OptimizerConfig optim{};
  double class_drop = 0.1;  // probability of training on the null class
  double gamma = -1.0;      // fixed masking ratio; negative draws U(0, 1] per example
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  std::string run_config;  // echoed into checkpoints
};

// Masked fine-tuning length when not set explicitly: 30% of phase 1.
std::size_t default_masked_steps(std::size_t phase1_steps);

struct StepMetrics {
  std::size_t step = 0;
  TrainPhase phase = TrainPhase::nextscale;
  double total_loss = 0.0;
  std::vector<double> per_scale_loss, per_scale_acc;
  double grad_norm = 0.0;
  double lr = 0.0;
};

std::string metrics_json(const StepMetrics& m);

using MetricsSink = std::function<void(const StepMetrics&)>;

// Runs one training phase from `init`. The masked phase requires a
// checkpoint that completed phase 1 (InvalidState otherwise) and starts by
// seeding the refinement stack from the trained trunk. Deterministic given
// the seed. Throws InvalidArgument when the data cannot fill a batch and
// NumericFailure, tagged with the step, on a non-finite loss.
Checkpoint train(const Checkpoint& init, const std::vector<EncodedExample>& data, const Codebook& cb, const TrainConfig& tc,
                 const MetricsSink& sink = {});

// Held-out style evaluation with the true class, no dropout of conditioning.
LossReport evaluate_nextscale(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<EncodedExample>& data, const WeightingScheme& scheme);
// Masked-head accuracy at a fixed ratio; masks drawn from substream "mask".
LossReport evaluate_masked(const ModelParams& params, const ModelConfig& cfg, const std::vector<EncodedExample>& data,
                           const Codebook& cb,
                           double gamma, std::uint64_t seed);

// Accumulates per-scale sums of reports so loss and accuracy can be pooled
// over examples position-wise.
class ReportPool {
 public:
  void add(const LossReport& r);
  LossReport mean() const;
  std::size_t reports() const noexcept { return n_; }

 private:
  std::vector<double> loss_sum_, acc_sum_;
  std::vector<std::size_t> count_;
  double total_sum_ = 0.0;
  std::size_t n_ = 0;
};

}  // namespace hmar
