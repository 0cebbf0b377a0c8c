#pragma once

#include <vector>

#include "hmar/msvq/codebook.hpp"
#include "hmar/msvq/pyramid.hpp"
#include "hmar/msvq/schedule.hpp"
#include "hmar/numerics/grid.hpp"

namespace hmar {

struct EncodeResult {
  TokenPyramid tokens;
  // running[k] is the cumulative reconstruction after scales 0..k, at the
  // finest resolution.
  std::vector<LatentGrid> running;
  // residual_energy[0] = ||x||^2; residual_energy[k + 1] is the residual
  // energy after subtracting scale k.
  std::vector<double> residual_energy;
};

// Codebook lookup of scale k's tokens, upsampled to the finest resolution.
LatentGrid upsampled_lookup(std::span<const TokenId> tokens, std::size_t k, const Codebook& cb,
                            const ScaleSchedule& sched);

// Residual multi-scale quantization: per scale, downsample the residual,
// quantize each cell, upsample the looked-up vectors and subtract.
EncodeResult encode(const LatentGrid& x, const Codebook& cb, const ScaleSchedule& sched);

// Sum of upsampled lookups over all scales. Throws InvalidState when any
// token is still flagged [MASK].
LatentGrid decode(const TokenPyramid& tokens, const Codebook& cb, const ScaleSchedule& sched);

// Reconstruction from scales [0, upto) only; zero grid when upto == 0.
LatentGrid decode_prefix(const TokenPyramid& tokens, const Codebook& cb, const ScaleSchedule& sched, std::size_t upto);

}  // namespace hmar
