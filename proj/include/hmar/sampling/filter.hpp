#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hmar/numerics/rng.hpp"

namespace hmar {

// Temperature scaling, then the top-k logits, then the smallest prefix of
// the sorted distribution whose mass reaches top_p; renormalized. Returns a
// full-length probability vector with zeros outside the support. Ties in
// ranking keep the lower index first. top_k is clipped to the row length.
// Throws InvalidArgument for top_k = 0, top_p outside (0, 1] or
// temperature <= 0.
std::vector<double> filter_logits(std::span<const double> logits, std::size_t top_k, double top_p,
                                  double temperature);

// uncond + s * (cond - uncond).
std::vector<double> apply_cfg(std::span<const double> cond, std::span<const double> uncond, double s);

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> v);

// Inverse-CDF draw from a probability vector using one uniform variate.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

}  // namespace hmar
