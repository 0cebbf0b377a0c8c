#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hmar/msvq/schedule.hpp"
#include "hmar/numerics/rng.hpp"
#include "hmar/numerics/tape.hpp"
#include "hmar/training/weighting.hpp"

namespace hmar {

struct LossReport {
  double total = 0.0;
  std::vector<double> per_scale_loss;  // mean cross-entropy over the scored positions of each scale
  std::vector<double> per_scale_acc;   // argmax accuracy over the same positions
  std::vector<std::size_t> per_scale_count;
};

// Next-scale objective over a full sequence: sum_k w(k) * mean_k CE. Under
// `unweighted` this is the plain mean over all N positions.
// Throws InvalidArgument when logits and targets disagree with the schedule,
// InvalidState when a scale has no positions.
template <typename T>
LossReport loss_nextscale(const Tensor<T>& logits, std::span<const std::int32_t> targets, const ScaleSchedule& sched,
                          const WeightingScheme& scheme);

// Mean cross-entropy over flagged positions, all scales pooled. Per-scale
// entries cover flagged positions only (zero count where none are flagged).
// Throws InvalidArgument when nothing is flagged.
template <typename T>
LossReport loss_masked(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                       std::span<const std::uint8_t> flags, const ScaleSchedule& sched);

// Tape forms of the two objectives.
template <typename T>
typename Tape<T>::Var nextscale_objective(Tape<T>& tape, typename Tape<T>::Var logits,
                                          std::span<const std::int32_t> targets, const ScaleSchedule& sched,
                                          const WeightingScheme& scheme);
template <typename T>
typename Tape<T>::Var masked_objective(Tape<T>& tape, typename Tape<T>::Var logits,
                                       std::span<const std::int32_t> targets, std::span<const std::uint8_t> flags);

// Exactly ceil(gamma * n_k) positions flagged per scale, chosen uniformly
// without replacement. Throws InvalidArgument for gamma outside [0, 1].
std::vector<std::uint8_t> sample_mask(const ScaleSchedule& sched, double gamma, Rng& rng);
std::size_t masked_count(std::size_t n, double gamma);

// Aggregate first-order influence of each scale on the next-scale objective
// at uniform logits: sum over the scale's rows of the gradient norm.
std::vector<double> scale_influence(const ScaleSchedule& sched, const WeightingScheme& scheme, std::size_t vocab);

}  // namespace hmar
