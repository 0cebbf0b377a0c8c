#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hmar/msvq/codebook.hpp"
#include "hmar/msvq/schedule.hpp"
#include "hmar/numerics/grid.hpp"

namespace hmar {

struct KMeansOptions {
  std::size_t vocab = 32;
  std::size_t iters = 50;
  std::uint64_t seed = 0;
  // Code 0 is fixed at the origin and never moves.
  bool pin_zero = false;
  // Codeword shifts after Lloyd: the code whose removal costs least moves to
  // the farthest member of the highest-distortion cell, kept only when the
  // re-converged distortion drops. Stops at the first rejected shift.
  std::size_t shifts = 0;
};

// Weighted Lloyd's k-means with k-means++ seeding over `samples` (n x dim,
// row-major). Empty weights means unit weights. Deterministic for a given
// seed; a cluster that empties is re-seeded from the sample farthest from its
// current centroid.
Codebook fit_codebook(std::span<const double> samples, std::span<const double> weights, std::size_t dim,
                      const KMeansOptions& opts);

inline Codebook fit_codebook(std::span<const double> samples, std::size_t dim, std::size_t vocab, std::size_t iters,
                             std::uint64_t seed) {
  return fit_codebook(samples, {}, dim, KMeansOptions{vocab, iters, seed, false});
}

struct ResidualSamples {
  std::vector<double> values;   // n x D
  std::vector<double> weights;  // n; n_K / n_k for a sample drawn at scale k
};

// Vectors seen by the per-scale quantizer when encoding `grids`. Without a
// codebook the quantizer is the identity, giving the continuous residual
// pyramid.
ResidualSamples collect_residual_samples(std::span<const LatentGrid> grids, const ScaleSchedule& sched,
                                         const Codebook* cb = nullptr);

struct MultiscaleFitOptions {
  std::size_t vocab = 32;
  std::size_t iters = 40;
  std::size_t rounds = 2;
  std::uint64_t seed = 0;
  // Weight every scale equally instead of every sample equally.
  bool balance_scales = true;
  bool pin_zero = true;
  std::size_t shifts = 32;
};

// Alternates residual collection and k-means for `rounds` rounds.
Codebook fit_multiscale_codebook(std::span<const LatentGrid> grids, const ScaleSchedule& sched,
                                 const MultiscaleFitOptions& opts);

}  // namespace hmar
