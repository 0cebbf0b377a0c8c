#include "hmar/sampling/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hmar/error.hpp"

namespace hmar {

std::vector<double> filter_logits(std::span<const double> logits, std::size_t top_k, double top_p,
                                  double temperature) {
  if (logits.empty()) throw InvalidArgument("filter_logits: empty row");
  if (top_k == 0) throw InvalidArgument("filter_logits: top_k must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("filter_logits: top_p must lie in (0, 1]");
  if (!(temperature > 0.0)) throw InvalidArgument("filter_logits: temperature must be > 0");
  const std::size_t V = logits.size();
  const std::size_t k = std::min(top_k, V);
  std::vector<std::size_t> order(V);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  order.resize(k);
  const double mx = logits[order[0]] / temperature;
  std::vector<double> p(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    p[i] = std::exp(logits[order[i]] / temperature - mx);
    sum += p[i];
  }
  std::size_t keep = k;
  double mass = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mass += p[i] / sum;
    if (mass >= top_p) {
      keep = i + 1;
      break;
    }
  }
  double kept = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept += p[i];
  std::vector<double> out(V, 0.0);
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = p[i] / kept;
  return out;
}

std::vector<double> apply_cfg(std::span<const double> cond, std::span<const double> uncond, double s) {
  if (cond.size() != uncond.size()) throw InvalidArgument("apply_cfg: shape mismatch");
  std::vector<double> out(cond.size());
  for (std::size_t i = 0; i < cond.size(); ++i) out[i] = uncond[i] + s * (cond[i] - uncond[i]);
  return out;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    c += probs[i];
    last = i;
    if (u < c) return i;
  }
  return last;
}

}  // namespace hmar
