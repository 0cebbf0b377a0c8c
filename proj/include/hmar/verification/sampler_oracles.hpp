#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmar/model/checkpoint.hpp"
#include "hmar/msvq/codebook.hpp"
#include "hmar/sampling/generate.hpp"
#include "hmar/verification/oracles.hpp"

namespace hmar::verify {

struct TinyModel {
  Checkpoint ck;
  Codebook cb;
};

// Randomized model plus Gaussian codebook matching `cfg`, marked as
// having completed `phase`.
TinyModel tiny_model(const ModelConfig& cfg, std::uint32_t phase, std::uint64_t seed, double noise = 0.5);

struct FactorizationCase {
  std::size_t vocab = 3;
  std::string schedule = "1,2";  // ScaleSchedule::parse syntax
  Conditioning conditioning = Conditioning::markovian;
  double guidance = 1.5;
  std::uint64_t seed = 0;
};

// Greedy decoding against a hand-stepped replay. With M_k = n_k - 1 every
// step must finalize the most confident pending token, and that token must
// be the argmax of a direct forward pass over exactly the replayed masked
// set. With M_k = 0 every token must be the per-position argmax of one joint
// forward pass, and (by enumeration) the maximizer of the product of those
// marginals. A 1x1 scale must ignore M. Requires V <= 4 and n_k <= 4.
CaseOutcome oracle_factorization(const FactorizationCase& c);

// Invocation count under several schedules, single finalization without
// re-masking, one token per step at M_k = n_k - 1, the M = 0 parallel
// boundary, determinism at a fixed seed and decode consistency of the
// running reconstruction (1e-6).
CaseOutcome sampler_contracts(const TinyModel& m, std::uint64_t seed);

struct TeacherForceSweep {
  double error_first = 0.0;  // mean error, start scale 1
  double error_last = 0.0;   // mean error, start scale K
  std::size_t samples = 0;
};

TeacherForceSweep teacher_force_sweep(const TinyModel& m, const std::vector<TokenPyramid>& truth,
                                      const std::vector<std::size_t>& labels, const SampleSchedule& sched,
                                      std::uint64_t seed);
// Mean error at start scale K must not exceed the mean at start scale 1.
CaseOutcome teacher_force_ordering(const TinyModel& m, const std::vector<TokenPyramid>& truth,
                                   const std::vector<std::size_t>& labels, const SampleSchedule& sched,
                                   std::uint64_t seed);

// Inpaint (left half), outpaint (border) and class-change edits keep every
// unflagged token bit-identical at every scale; an empty region returns the
// source with no model call. Deviation counts altered pinned tokens.
CaseOutcome edit_pinning(const TinyModel& m, const std::vector<TokenPyramid>& sources,
                         const std::vector<std::size_t>& labels, const SampleSchedule& sched, std::uint64_t seed);

// Encodes `count` Gaussian fields with the model's codebook.
std::vector<TokenPyramid> random_pyramids(const TinyModel& m, std::size_t count, std::uint64_t seed);

}  // namespace hmar::verify
