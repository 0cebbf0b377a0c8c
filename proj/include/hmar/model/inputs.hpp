#pragma once

#include <cstdint>
#include <vector>

#include "hmar/attnmask/mask.hpp"
#include "hmar/model/config.hpp"
#include "hmar/msvq/pyramid.hpp"
#include "hmar/numerics/grid.hpp"
#include "hmar/numerics/tensor.hpp"

namespace hmar {

// Embedding recipe for a contiguous window of scales [first_scale,
// last_scale]. Training uses every scale; Markovian inference can run a
// single scale on its own because block-diagonal attention never mixes
// scales.
struct SequenceInputs {
  std::size_t first_scale = 0, last_scale = 0;
  std::vector<std::int64_t> positions;  // global sequence index per row
  std::vector<std::int64_t> scale_ids;
  std::int64_t class_id = 0;
  // Per-row conditioning content interpolate(x~_{1:k-1}, H_k, W_k) in
  // latent space; zero rows for the first scale.
  Tensor<double> content;  // [n, D]
  bool masked_mode = false;
  std::vector<std::int64_t> token_ids;  // masked mode: token of unmasked rows, -1 at [MASK]
  std::vector<std::int64_t> mask_ids;   // masked mode: 0 at [MASK], -1 elsewhere
  Tensor<double> token_content;         // masked mode: code vector of unmasked rows, zero at [MASK]
  std::vector<std::int32_t> targets;    // ground-truth token per row
  std::vector<std::uint8_t> predict;    // rows that carry a loss or a prediction
  AttentionMask mask;

  std::size_t rows() const noexcept { return positions.size(); }
  // Row range of scale k inside this window.
  std::size_t row_begin(std::size_t k, const ScaleSchedule& s) const { return s.offset(k) - s.offset(first_scale); }
};

// Conditioning content of scale k from the cumulative reconstruction of
// scales < k, resampled to H_k x W_k. All-zero grid for k = 0.
LatentGrid conditioning_content(const LatentGrid& running_prev, std::size_t k, const ScaleSchedule& sched);

// `running[k]` is the full-resolution reconstruction after scale k, as
// returned by encode(). Only running[first-1 .. last-1] are read. `targets`
// may be a default-constructed pyramid at inference time.
SequenceInputs build_inputs_nextscale(const std::vector<LatentGrid>& running, const TokenPyramid& targets,
                                      std::size_t class_id, const ModelConfig& cfg, std::size_t first_scale = 0,
                                      std::size_t last_scale = SIZE_MAX);

// Positions flagged in tokens.mask_flags() embed [MASK]; the rest embed
// their token index and code vector. predict[] marks the flagged positions.
// Always block-diagonal.
SequenceInputs build_inputs_masked(const TokenPyramid& tokens, const std::vector<LatentGrid>& running,
                                   std::size_t class_id, const ModelConfig& cfg, const Codebook& cb,
                                   std::size_t first_scale = 0,
                                   std::size_t last_scale = SIZE_MAX);

}  // namespace hmar
