#pragma once

#include <cstdint>
#include <string>

#include "hmar/attention/attention.hpp"
#include "hmar/attnmask/mask.hpp"
#include "hmar/msvq/schedule.hpp"

namespace hmar {

enum class Conditioning { markovian, full_prefix };

std::string_view conditioning_name(Conditioning c);
Conditioning parse_conditioning(std::string_view s);

struct ModelConfig {
  std::size_t depth = 2;
  std::size_t width = 32;
  std::size_t heads = 4;
  std::size_t vocab = 32;
  std::size_t num_classes = 2;
  std::size_t latent_dim = 3;  // D, channels of the latent grid
  std::size_t mlp_ratio = 4;
  ScaleSchedule schedule = ScaleSchedule::toy();
  Conditioning conditioning = Conditioning::markovian;
  TilingOptions tiling{};

  // Blocks copied into the refinement stack for the masked head: ceil(depth / 2).
  std::size_t refine_depth() const noexcept { return (depth + 1) / 2; }
  std::size_t head_dim() const noexcept { return width / heads; }
  // Index of the null class used for the unconditional branch.
  std::size_t null_class() const noexcept { return num_classes; }
  MaskKind mask_kind() const noexcept {
    return conditioning == Conditioning::markovian ? MaskKind::block_diagonal : MaskKind::block_causal;
  }

  // Throws InvalidArgument on inconsistent settings.
  void validate() const;

  // "model.key = value" lines, parseable by from_text.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  // Closed-form trainable parameter count, including the refinement stack.
  std::size_t parameter_count() const;

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) { return a.to_text() == b.to_text(); }
};

}  // namespace hmar
