#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmar/model/checkpoint.hpp"
#include "hmar/msvq/codebook.hpp"
#include "hmar/msvq/pyramid.hpp"
#include "hmar/numerics/grid.hpp"

namespace hmar {

struct SampleSchedule {
  std::vector<std::size_t> steps;  // M_k per scale; missing entries are 0
  double temperature = 1.0;
  std::size_t top_k = 900;  // clipped to the vocabulary
  double top_p = 0.96;
  double guidance = 1.5;
  bool allow_remask = false;
  bool greedy = false;  // argmax of the filtered distribution instead of sampling

  // One extra step at the second through fifth scales.
  static SampleSchedule defaults(std::size_t scales);

  // Refinement steps actually run at a scale of n tokens: min(M_k, n - 1).
  std::size_t effective_steps(std::size_t k, std::size_t n) const;
  // K + sum_k effective_steps.
  std::size_t invocations(const ScaleSchedule& sched) const;
};

// Positions still masked after each stage when resolving n positions with
// `rounds` masked-head rounds following a cosine curve: entry 0 is after the
// proposal, entry j after round j, the last entry is 0. Strictly
// decreasing, so every stage resolves at least one position; rounds = n - 1
// resolves exactly one per stage. Throws InvalidArgument when rounds >= n.
std::vector<std::size_t> masking_schedule(std::size_t n, std::size_t rounds);

struct TraceStep {
  std::size_t scale = 0;
  std::size_t step = 0;              // 0 = next-scale proposal
  std::vector<std::size_t> masked;     // positions (within the scale) fed as [MASK]
  std::vector<std::size_t> finalized;  // positions finalized by this step
};

struct GenerateResult {
  TokenPyramid tokens;
  LatentGrid grid;                  // decode of the full pyramid
  std::vector<LatentGrid> running;  // incremental reconstruction after each scale
  std::size_t invocations = 0;      // model steps (a guided step counts once)
  std::size_t forward_passes = 0;   // transformer evaluations, both guidance branches
  std::vector<std::size_t> finalize_count;  // per sequence position
  std::vector<TraceStep> trace;
  std::vector<std::string> warnings;
};

// Two-stage sampling per scale: the next-scale head proposes every token,
// then each refinement round repredicts the least confident unresolved
// tokens with the masked head and finalizes the most confident of them.
// Confidence is the sampled token's probability under the filtered
// distribution. Deterministic given the seed. Throws InvalidState when a
// refinement step is requested and the checkpoint has not completed the
// masked phase.
GenerateResult generate(const Checkpoint& model, const Codebook& cb, std::size_t class_id,
                        const SampleSchedule& schedule, std::uint64_t seed);

// Scales below `start` (1-based, in [1, K+1]) are copied from the ground
// truth; the rest are generated.
struct TeacherForceResult {
  GenerateResult generated;
  double error = 0.0;  // ||decode(generated) - decode(truth)||^2
};
TeacherForceResult teacher_force(const Checkpoint& model, const Codebook& cb, const TokenPyramid& truth,
                                 std::size_t class_id, std::size_t start, const SampleSchedule& schedule,
                                 std::uint64_t seed);

// Regenerates flagged positions with the masked head, max(1, M_k) rounds per
// scale, conditioned on the pinned source tokens and the running
// reconstruction. Unflagged positions keep the source token at every scale.
// An empty region returns the source with a warning.
GenerateResult edit(const Checkpoint& model, const Codebook& cb, const TokenPyramid& source,
                    const std::vector<std::uint8_t>& region, std::size_t class_id, const SampleSchedule& schedule,
                    std::uint64_t seed);

}  // namespace hmar
