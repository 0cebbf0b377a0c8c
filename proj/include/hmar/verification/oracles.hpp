#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmar/model/config.hpp"
#include "hmar/msvq/schedule.hpp"
#include "hmar/verification/attention_oracle.hpp"

namespace hmar::verify {

struct CaseOutcome {
  bool pass = false;
  double deviation = 0.0;  // max observed error, or the violated margin for orderings
  std::string detail;
};

// Sides 1, 2, 4, ... below `side`, then `side` itself.
ScaleSchedule ladder(std::size_t side);

// decode(encode(x)) against encode's cumulative reconstruction, bit for bit.
// Grid i has side 4 + (i mod 13) and D = {1, 4, 8}[i mod 3].
CaseOutcome msvq_roundtrip(std::size_t grids, std::uint64_t seed);

// Codebook::nearest against an exhaustive scan with lowest-index ties. Half
// the queries use integer-lattice codebooks so exact ties occur.
CaseOutcome quantize_brute_force(std::size_t queries, std::uint64_t seed);

struct ContractionCase {
  std::size_t grids = 100;
  std::vector<std::size_t> sides{4, 8, 16};
  std::vector<std::size_t> dims{1, 4, 8};
  std::size_t vocab = 32;
  std::uint64_t seed = 0;
  // Schedule {1, side} instead of the ladder: every resampling pair is then
  // an orthogonal projection.
  bool two_level = false;
};

// Residual energy must not increase from one scale to the next on any grid.
// Grids are white Gaussian fields, grouped by (side, D); each group fits its
// own multi-scale k-means codebook on its grids. Deviation is the largest
// energy increase relative to ||x||^2.
CaseOutcome residual_contraction(const ContractionCase& c);

// AttentionMask::nnz and the sparsity report against pairwise enumeration of
// allowed(), for every mask kind. With `expect_var256` the quoted counts for
// the 10-scale preset are checked too.
CaseOutcome mask_nnz(const ScaleSchedule& sched, bool expect_var256);

// Tiled (32-bit) vs dense (64-bit) max abs deviation below `tol`. The detail
// names the worst (head, query, dim).
CaseOutcome dense_attention(const AttentionCase& c, double tol);
// Tiled backward against finite differences, 64-bit.
CaseOutcome attention_backward(const AttentionCase& c, double tol);
// N = 1: output equals the value row exactly, both precisions.
CaseOutcome attention_single_token(std::uint64_t seed);
// Perturbing block j leaves every block the mask does not connect to j
// bit-identical.
CaseOutcome attention_locality(const ScaleSchedule& sched, MaskKind kind, std::uint64_t seed);

// Full-model gradient check (64-bit) over both heads: a weighted next-scale
// loss plus a masked loss on randomized parameters.
CaseOutcome model_grad_check(const ModelConfig& cfg, std::size_t coords_per_tensor, double tol, std::uint64_t seed);

// Sum to one and stay in [0, 1] for all six schemes and K in [1, max_scales].
CaseOutcome weighting_constraints(std::size_t max_scales, double tol);

// Unweighted gradient-norm probe: influence(finest) / influence(first) must
// equal n_K / n_1 (256 for the 10-scale preset).
CaseOutcome fine_scale_dominance(const ScaleSchedule& sched, double expected_ratio, double tol);

// sample_mask flags exactly ceil(gamma * n_k) positions per scale.
CaseOutcome mask_cardinality(std::size_t trials, std::uint64_t seed);

}  // namespace hmar::verify
