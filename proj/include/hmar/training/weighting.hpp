#pragma once

#include <cmath>
#include <string_view>
#include <vector>

#include "hmar/msvq/schedule.hpp"

namespace hmar {

enum class WeightingKind { unweighted, equal, linear, sqrt, exp_decay, log_normal };

std::string_view weighting_name(WeightingKind k);
WeightingKind parse_weighting(std::string_view s);
std::vector<WeightingKind> all_weighting_kinds();

struct WeightingScheme {
  WeightingKind kind = WeightingKind::unweighted;
  double lambda = 0.3;              // exp-decay rate per scale
  double mu = std::log(0.35);       // log-normal location over k / K
  double sigma = 0.8;               // log-normal shape
};

// Per-scale weights w(1..K) summing to one. Linear and sqrt decay toward the
// finest scale, exp-decay falls as e^{-lambda (k-1)}, log-normal follows the
// log-normal density evaluated at k / K. For `unweighted` the result is the
// effective per-scale share n_k / N of a plain token average.
// Throws InvalidArgument when sigma <= 0 (log-normal) or K = 0.
std::vector<double> scale_weights(const WeightingScheme& scheme, const ScaleSchedule& sched);

// Per-token loss weights: w(k) / n_k for every position of scale k.
std::vector<double> token_weights(const WeightingScheme& scheme, const ScaleSchedule& sched);

}  // namespace hmar
