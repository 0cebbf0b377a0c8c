#include "hmar/training/weighting.hpp"

#include <numbers>
#include <string>

#include "hmar/error.hpp"

namespace hmar {

std::string_view weighting_name(WeightingKind k) {
  switch (k) {
    case WeightingKind::unweighted: return "unweighted";
    case WeightingKind::equal: return "equal";
    case WeightingKind::linear: return "linear";
    case WeightingKind::sqrt: return "sqrt";
    case WeightingKind::exp_decay: return "exp-decay";
    case WeightingKind::log_normal: return "log-normal";
  }
  return "?";
}

WeightingKind parse_weighting(std::string_view s) {
  for (WeightingKind k : all_weighting_kinds()) {
    if (weighting_name(k) == s) return k;
  }
  throw InvalidArgument("unknown weighting scheme \"" + std::string(s) + "\"");
}

std::vector<WeightingKind> all_weighting_kinds() {
  return {WeightingKind::unweighted, WeightingKind::equal,     WeightingKind::linear,
          WeightingKind::sqrt,       WeightingKind::exp_decay, WeightingKind::log_normal};
}

std::vector<double> scale_weights(const WeightingScheme& scheme, const ScaleSchedule& sched) {
  const std::size_t K = sched.scales();
  if (K == 0) throw InvalidArgument("scale_weights: empty schedule");
  if (scheme.kind == WeightingKind::log_normal && !(scheme.sigma > 0.0)) {
    throw InvalidArgument("scale_weights: log-normal sigma must be > 0");
  }
  std::vector<double> w(K);
  for (std::size_t i = 0; i < K; ++i) {
    const double k = static_cast<double>(i + 1);
    const double rev = static_cast<double>(K - i);
    switch (scheme.kind) {
      case WeightingKind::unweighted: w[i] = static_cast<double>(sched.tokens(i)); break;
      case WeightingKind::equal: w[i] = 1.0; break;
      case WeightingKind::linear: w[i] = rev; break;
      case WeightingKind::sqrt: w[i] = std::sqrt(rev); break;
      case WeightingKind::exp_decay: w[i] = std::exp(-scheme.lambda * (k - 1.0)); break;
      case WeightingKind::log_normal: {
        const double x = k / static_cast<double>(K);
        const double z = (std::log(x) - scheme.mu) / scheme.sigma;
        w[i] = std::exp(-0.5 * z * z) / (x * scheme.sigma * std::sqrt(2.0 * std::numbers::pi));
        break;
      }
    }
  }
  double sum = 0.0;
  for (double v : w) sum += v;
  if (!(sum > 0.0) || !std::isfinite(sum)) throw InvalidArgument("scale_weights: degenerate weights");
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> token_weights(const WeightingScheme& scheme, const ScaleSchedule& sched) {
  const std::vector<double> w = scale_weights(scheme, sched);
  std::vector<double> out(sched.total_tokens());
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    const double per = w[k] / static_cast<double>(sched.tokens(k));
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(sched.offset(k)), sched.tokens(k), per);
  }
  return out;
}

}  // namespace hmar
