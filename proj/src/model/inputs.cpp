#include "hmar/model/inputs.hpp"

#include "hmar/error.hpp"
#include "hmar/numerics/interpolate.hpp"

namespace hmar {
namespace {

SequenceInputs skeleton(const std::vector<LatentGrid>& running, std::size_t class_id, const ModelConfig& cfg,
                        std::size_t first, std::size_t last, MaskKind kind) {
  const ScaleSchedule& s = cfg.schedule;
  if (last == SIZE_MAX) last = s.scales() - 1;
  if (first > last || last >= s.scales()) throw InvalidArgument("model inputs: bad scale window");
  if (class_id > cfg.num_classes) {
    throw InvalidArgument("model inputs: class " + std::to_string(class_id) + " outside [0, " +
                          std::to_string(cfg.num_classes) + "]");
  }
  if (last > 0 && running.size() < last) throw InvalidArgument("model inputs: missing running reconstructions");
  SequenceInputs in;
  in.first_scale = first;
  in.last_scale = last;
  in.class_id = static_cast<std::int64_t>(class_id);
  const std::size_t n = s.offset(last) + s.tokens(last) - s.offset(first);
  in.content = Tensor<double>({n, cfg.latent_dim});
  std::vector<std::size_t> blocks;
  for (std::size_t k = first; k <= last; ++k) {
    blocks.push_back(s.tokens(k));
    std::size_t row = s.offset(k) - s.offset(first);
    if (k > 0) {
      const LatentGrid& prev = running[k - 1];
      if (prev.channels() != cfg.latent_dim || prev.height() != s.finest().h || prev.width() != s.finest().w) {
        throw InvalidArgument("model inputs: running reconstruction does not match the model's latent grid");
      }
      const LatentGrid c = conditioning_content(prev, k, s);
      std::copy(c.values().begin(), c.values().end(), in.content.data().begin() + row * cfg.latent_dim);
    }
    for (std::size_t i = 0; i < s.tokens(k); ++i, ++row) {
      in.positions.push_back(static_cast<std::int64_t>(s.offset(k) + i));
      in.scale_ids.push_back(static_cast<std::int64_t>(k));
    }
  }
  in.mask = AttentionMask(kind, blocks);
  return in;
}

void fill_targets(SequenceInputs& in, const TokenPyramid& targets) {
  in.targets.assign(in.rows(), 0);
  if (targets.scales() == 0) return;
  for (std::size_t r = 0; r < in.rows(); ++r) in.targets[r] = static_cast<std::int32_t>(targets.tokens()[in.positions[r]]);
}

}  // namespace

LatentGrid conditioning_content(const LatentGrid& running_prev, std::size_t k, const ScaleSchedule& sched) {
  const Resolution r = sched.resolution(k);
  if (k == 0) return LatentGrid(r.h, r.w, running_prev.channels());
  return interpolate(running_prev, r.h, r.w);
}

SequenceInputs build_inputs_nextscale(const std::vector<LatentGrid>& running, const TokenPyramid& targets,
                                      std::size_t class_id, const ModelConfig& cfg, std::size_t first_scale,
                                      std::size_t last_scale) {
  SequenceInputs in = skeleton(running, class_id, cfg, first_scale, last_scale, cfg.mask_kind());
  fill_targets(in, targets);
  in.predict.assign(in.rows(), 1);
  return in;
}

SequenceInputs build_inputs_masked(const TokenPyramid& tokens, const std::vector<LatentGrid>& running,
                                   std::size_t class_id, const ModelConfig& cfg, const Codebook& cb,
                                   std::size_t first_scale, std::size_t last_scale) {
  if (!(tokens.schedule() == cfg.schedule)) throw InvalidArgument("model inputs: pyramid schedule mismatch");
  if (cb.vocab() != cfg.vocab || cb.dim() != cfg.latent_dim) {
    throw InvalidArgument("model inputs: codebook is " + std::to_string(cb.vocab()) + "x" + std::to_string(cb.dim()) +
                          ", model expects " + std::to_string(cfg.vocab) + "x" + std::to_string(cfg.latent_dim));
  }
  SequenceInputs in = skeleton(running, class_id, cfg, first_scale, last_scale, MaskKind::block_diagonal);
  in.masked_mode = true;
  fill_targets(in, tokens);
  in.token_ids.resize(in.rows());
  in.mask_ids.resize(in.rows());
  in.predict.resize(in.rows());
  in.token_content = Tensor<double>({in.rows(), cfg.latent_dim});
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const bool masked = tokens.mask_flags()[in.positions[r]] != 0;
    const TokenId t = tokens.tokens()[in.positions[r]];
    if (!masked && t >= cfg.vocab) throw InvalidArgument("model inputs: token outside vocabulary");
    in.token_ids[r] = masked ? -1 : static_cast<std::int64_t>(t);
    in.mask_ids[r] = masked ? 0 : -1;
    in.predict[r] = masked ? 1 : 0;
    if (!masked) std::copy(cb.row(t).begin(), cb.row(t).end(), in.token_content.row(r).begin());
  }
  return in;
}

}  // namespace hmar
