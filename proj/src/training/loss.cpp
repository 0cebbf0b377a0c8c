#include "hmar/training/loss.hpp"

#include <cmath>
#include <string>

#include "hmar/numerics/softmax.hpp"

namespace hmar {
namespace {

template <typename T>
std::size_t argmax(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

template <typename T>
void check_alignment(const Tensor<T>& logits, std::size_t targets, const ScaleSchedule& sched, const char* what) {
  if (logits.rank() != 2 || logits.dim(0) != sched.total_tokens() || targets != sched.total_tokens()) {
    throw InvalidArgument(std::string(what) + ": logits " + shape_string(logits.shape()) + " and " +
                          std::to_string(targets) + " targets do not match a " +
                          std::to_string(sched.total_tokens()) + "-token schedule");
  }
}

// Per-scale mean CE and accuracy over rows selected by `use`.
template <typename T>
LossReport per_scale(const Tensor<T>& logits, std::span<const std::int32_t> targets, const ScaleSchedule& sched,
                     std::span<const std::uint8_t> use) {
  LossReport r;
  const std::size_t K = sched.scales();
  r.per_scale_loss.assign(K, 0.0);
  r.per_scale_acc.assign(K, 0.0);
  r.per_scale_count.assign(K, 0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = sched.offset(k); i < sched.offset(k) + sched.tokens(k); ++i) {
      if (!use.empty() && !use[i]) continue;
      const std::size_t t = static_cast<std::size_t>(targets[i]);
      r.per_scale_loss[k] += static_cast<double>(cross_entropy<T>(logits.row(i), t));
      r.per_scale_acc[k] += argmax<T>(logits.row(i)) == t ? 1.0 : 0.0;
      ++r.per_scale_count[k];
    }
    if (r.per_scale_count[k] > 0) {
      r.per_scale_loss[k] /= static_cast<double>(r.per_scale_count[k]);
      r.per_scale_acc[k] /= static_cast<double>(r.per_scale_count[k]);
    }
  }
  return r;
}

}  // namespace

template <typename T>
LossReport loss_nextscale(const Tensor<T>& logits, std::span<const std::int32_t> targets, const ScaleSchedule& sched,
                          const WeightingScheme& scheme) {
  check_alignment(logits, targets.size(), sched, "loss_nextscale");
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    if (sched.tokens(k) == 0) throw InvalidState("loss_nextscale: scale " + std::to_string(k) + " is empty");
  }
  LossReport r = per_scale(logits, targets, sched, {});
  const std::vector<double> w = scale_weights(scheme, sched);
  for (std::size_t k = 0; k < w.size(); ++k) r.total += w[k] * r.per_scale_loss[k];
  return r;
}

template <typename T>
LossReport loss_masked(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                       std::span<const std::uint8_t> flags, const ScaleSchedule& sched) {
  check_alignment(logits, targets.size(), sched, "loss_masked");
  if (flags.size() != targets.size()) throw InvalidArgument("loss_masked: flag count does not match targets");
  LossReport r = per_scale(logits, targets, sched, flags);
  std::size_t n = 0;
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    r.total += r.per_scale_loss[k] * static_cast<double>(r.per_scale_count[k]);
    n += r.per_scale_count[k];
  }
  if (n == 0) throw InvalidArgument("loss_masked: no masked positions");
  r.total /= static_cast<double>(n);
  return r;
}

template <typename T>
typename Tape<T>::Var nextscale_objective(Tape<T>& tape, typename Tape<T>::Var logits,
                                          std::span<const std::int32_t> targets, const ScaleSchedule& sched,
                                          const WeightingScheme& scheme) {
  check_alignment(tape.value(logits), targets.size(), sched, "nextscale_objective");
  const std::vector<double> w = token_weights(scheme, sched);
  const std::vector<T> wt(w.begin(), w.end());
  return ops::cross_entropy(tape, logits, targets, std::span<const T>(wt));
}

template <typename T>
typename Tape<T>::Var masked_objective(Tape<T>& tape, typename Tape<T>::Var logits,
                                       std::span<const std::int32_t> targets, std::span<const std::uint8_t> flags) {
  if (flags.size() != targets.size()) throw InvalidArgument("masked_objective: flag count does not match targets");
  std::size_t n = 0;
  for (auto f : flags) n += f ? 1 : 0;
  if (n == 0) throw InvalidArgument("masked_objective: no masked positions");
  std::vector<T> wt(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) wt[i] = flags[i] ? T{1} / static_cast<T>(n) : T{0};
  return ops::cross_entropy(tape, logits, targets, std::span<const T>(wt));
}

std::size_t masked_count(std::size_t n, double gamma) {
  // The small slack keeps products such as 0.3 * 10 from rounding up.
  const double x = gamma * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(x - 1e-9)));
}

std::vector<std::uint8_t> sample_mask(const ScaleSchedule& sched, double gamma, Rng& rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("sample_mask: gamma must lie in [0, 1]");
  std::vector<std::uint8_t> flags(sched.total_tokens(), 0);
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    const std::size_t n = sched.tokens(k);
    for (std::size_t i : rng.sample_without_replacement(n, masked_count(n, gamma))) flags[sched.offset(k) + i] = 1;
  }
  return flags;
}

std::vector<double> scale_influence(const ScaleSchedule& sched, const WeightingScheme& scheme, std::size_t vocab) {
  Tape<double> tape;
  const auto logits = tape.variable(Tensor<double>({sched.total_tokens(), vocab}));
  const std::vector<std::int32_t> targets(sched.total_tokens(), 0);
  tape.backward(nextscale_objective<double>(tape, logits, targets, sched, scheme));
  const Tensor<double>& g = tape.grad(logits);
  std::vector<double> out(sched.scales(), 0.0);
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    for (std::size_t i = sched.offset(k); i < sched.offset(k) + sched.tokens(k); ++i) {
      double s = 0.0;
      for (double v : g.row(i)) s += v * v;
      out[k] += std::sqrt(s);
    }
  }
  return out;
}

#define HMAR_INSTANTIATE_LOSS(T)                                                                                   \
  template LossReport loss_nextscale<T>(const Tensor<T>&, std::span<const std::int32_t>, const ScaleSchedule&,    \
                                        const WeightingScheme&);                                                  \
  template LossReport loss_masked<T>(const Tensor<T>&, std::span<const std::int32_t>, std::span<const std::uint8_t>, \
                                     const ScaleSchedule&);                                                       \
  template Tape<T>::Var nextscale_objective<T>(Tape<T>&, Tape<T>::Var, std::span<const std::int32_t>,             \
                                               const ScaleSchedule&, const WeightingScheme&);                     \
  template Tape<T>::Var masked_objective<T>(Tape<T>&, Tape<T>::Var, std::span<const std::int32_t>,                \
                                            std::span<const std::uint8_t>);

HMAR_INSTANTIATE_LOSS(float)
HMAR_INSTANTIATE_LOSS(double)

}  // namespace hmar
