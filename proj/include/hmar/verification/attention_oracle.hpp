#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmar/attention/attention.hpp"

namespace hmar::verify {

struct AttentionCase {
  std::string schedule;  // ScaleSchedule::parse syntax
  MaskKind kind = MaskKind::block_diagonal;
  std::size_t heads = 1;
  std::size_t head_dim = 8;
  TilingOptions tiling;
  std::uint64_t seed = 0;
  std::string name() const;
};

struct Deviation {
  double max_abs = 0.0;
  std::size_t head = 0, query = 0, dim = 0;
};

template <typename T>
struct AttentionInputs {
  Tensor<T> q, k, v;
  AttentionMask mask;
};

template <typename T>
AttentionInputs<T> make_inputs(const AttentionCase& c);

// Tiled kernel in precision T against the 64-bit dense reference.
template <typename T>
Deviation tiled_vs_dense(const AttentionCase& c);

// Max relative error of the tiled backward (64-bit) against central finite
// differences of a random linear read-out taken through the dense reference.
double backward_vs_finite_differences(const AttentionCase& c, double eps = 1e-6);

// The 50-configuration sweep over N in {5, 21, 85, 680}, heads in {1, 4},
// d in {8, 64}, all three mask kinds and both tile layouts.
std::vector<AttentionCase> equivalence_sweep();

// Small configurations for the finite-difference check.
std::vector<AttentionCase> backward_cases();

}  // namespace hmar::verify
