#include "hmar/model/config.hpp"

#include <fmt/format.h>

#include "hmar/common/kv.hpp"
#include "hmar/error.hpp"

namespace hmar {

std::string_view conditioning_name(Conditioning c) {
  return c == Conditioning::markovian ? "markovian" : "full-prefix";
}

Conditioning parse_conditioning(std::string_view s) {
  if (s == "markovian") return Conditioning::markovian;
  if (s == "full-prefix") return Conditioning::full_prefix;
  throw InvalidArgument("model.conditioning: expected markovian or full-prefix, got \"" + std::string(s) + "\"");
}

void ModelConfig::validate() const {
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw InvalidArgument(fmt::format("model: width {} is not divisible by heads {}", width, heads));
  }
  if (vocab < 2) throw InvalidArgument("model.vocab must be >= 2");
  if (num_classes < 1) throw InvalidArgument("model.classes must be >= 1");
  if (latent_dim < 1) throw InvalidArgument("model.latent_dim must be >= 1");
  if (mlp_ratio < 1) throw InvalidArgument("model.mlp_ratio must be >= 1");
  if (tiling.tile < 1) throw InvalidArgument("model.tile must be >= 1");
}

std::string ModelConfig::to_text() const {
  return fmt::format(
      "model.depth = {}\nmodel.width = {}\nmodel.heads = {}\nmodel.vocab = {}\nmodel.classes = {}\n"
      "model.latent_dim = {}\nmodel.mlp_ratio = {}\nmodel.schedule = {}\nmodel.conditioning = {}\n"
      "model.tile = {}\nmodel.tile_layout = {}\n",
      depth, width, heads, vocab, num_classes, latent_dim, mlp_ratio, schedule.to_string(),
      conditioning_name(conditioning), tiling.tile, tiling.layout == TileLayout::uniform ? "uniform" : "block-aligned");
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  for (const auto& kv : parse_key_values(text, "model config")) {
    const std::string& k = kv.key;
    if (k == "model.depth") {
      c.depth = parse_size(kv.value, k);
    } else if (k == "model.width") {
      c.width = parse_size(kv.value, k);
    } else if (k == "model.heads") {
      c.heads = parse_size(kv.value, k);
    } else if (k == "model.vocab") {
      c.vocab = parse_size(kv.value, k);
    } else if (k == "model.classes") {
      c.num_classes = parse_size(kv.value, k);
    } else if (k == "model.latent_dim") {
      c.latent_dim = parse_size(kv.value, k);
    } else if (k == "model.mlp_ratio") {
      c.mlp_ratio = parse_size(kv.value, k);
    } else if (k == "model.schedule") {
      c.schedule = ScaleSchedule::parse(kv.value);
    } else if (k == "model.conditioning") {
      c.conditioning = parse_conditioning(kv.value);
    } else if (k == "model.tile") {
      c.tiling.tile = parse_size(kv.value, k);
    } else if (k == "model.tile_layout") {
      if (kv.value == "uniform") {
        c.tiling.layout = TileLayout::uniform;
      } else if (kv.value == "block-aligned") {
        c.tiling.layout = TileLayout::block_aligned;
      } else {
        throw InvalidArgument("model.tile_layout: expected block-aligned or uniform");
      }
    } else {
      throw InvalidArgument("unknown config key \"" + k + "\"");
    }
  }
  c.validate();
  return c;
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t w = width, V = vocab, K = schedule.scales(), N = schedule.total_tokens();
  const std::size_t hidden = mlp_ratio * w;
  const std::size_t block = 2 * 2 * w            // two layer norms
                            + 4 * (w * w + w)    // q, k, v, output projections
                            + (w * hidden + hidden) + (hidden * w + w);
  const std::size_t embeddings = V * w + (num_classes + 1) * w + K * w + N * w + w + 2 * latent_dim * w;
  const std::size_t head = w * V + V;
  return embeddings + depth * block + 2 * w + head    // next-scale path
         + refine_depth() * block + 2 * w + head;     // refinement stack and masked head
}

}  // namespace hmar
