#include "hmar/model/params.hpp"

#include "hmar/numerics/rng.hpp"

namespace hmar {
namespace {

void add_block(std::vector<std::pair<std::string, Shape>>& out, const std::string& p, const ModelConfig& c) {
  const std::size_t w = c.width, h = c.mlp_ratio * c.width;
  out.push_back({p + "ln1.g", {w}});
  out.push_back({p + "ln1.b", {w}});
  for (const char* m : {"wq", "wk", "wv", "wo"}) {
    out.push_back({p + "attn." + m, {w, w}});
    out.push_back({p + "attn.b" + std::string(m + 1), {w}});
  }
  out.push_back({p + "ln2.g", {w}});
  out.push_back({p + "ln2.b", {w}});
  out.push_back({p + "mlp.fc1.w", {w, h}});
  out.push_back({p + "mlp.fc1.b", {h}});
  out.push_back({p + "mlp.fc2.w", {h, w}});
  out.push_back({p + "mlp.fc2.b", {w}});
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::string block_prefix(std::size_t layer) { return "blocks." + std::to_string(layer) + "."; }
std::string refine_prefix(std::size_t layer) { return "refine." + std::to_string(layer) + "."; }

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
  c.validate();
  const std::size_t w = c.width;
  std::vector<std::pair<std::string, Shape>> out = {
      {"token_emb", {c.vocab, w}},
      {"class_emb", {c.num_classes + 1, w}},
      {"scale_emb", {c.schedule.scales(), w}},
      {"pos_emb", {c.schedule.total_tokens(), w}},
      {"mask_emb", {1, w}},
      {"in_proj.w", {c.latent_dim, w}},
      {"tok_proj.w", {c.latent_dim, w}},
  };
  for (std::size_t l = 0; l < c.depth; ++l) add_block(out, block_prefix(l), c);
  out.push_back({"ln_f.g", {w}});
  out.push_back({"ln_f.b", {w}});
  out.push_back({"head_next.w", {w, c.vocab}});
  out.push_back({"head_next.b", {c.vocab}});
  for (std::size_t l = 0; l < c.refine_depth(); ++l) add_block(out, refine_prefix(l), c);
  out.push_back({"ln_r.g", {w}});
  out.push_back({"ln_r.b", {w}});
  out.push_back({"head_masked.w", {w, c.vocab}});
  out.push_back({"head_masked.b", {c.vocab}});
  return out;
}

template <typename T>
ParamTable<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "init");
  ParamTable<T> p;
  for (auto& [name, shape] : parameter_layout(cfg)) {
    Tensor<T> t(shape);
    const bool gain = ends_with(name, ".g");
    const bool head = name.rfind("head_", 0) == 0;
    const bool bias = shape.size() == 1 && !gain;
    if (gain) {
      t.fill(T{1});
    } else if (!bias && !head) {
      for (auto& v : t.data()) v = static_cast<T>(0.02 * rng.normal());
    }
    p.add(name, std::move(t));
  }
  seed_refinement_from_trunk(p, cfg);
  // The masked head stays zero until phase 2 seeds it.
  p.at("head_masked.w").fill(T{0});
  p.at("head_masked.b").fill(T{0});
  return p;
}

template <typename T>
void validate_params(const ParamTable<T>& params, const ModelConfig& cfg) {
  const auto layout = parameter_layout(cfg);
  for (const auto& [name, shape] : layout) {
    if (!params.contains(name)) throw FormatError("checkpoint: missing tensor \"" + name + "\"");
    if (params.at(name).shape() != shape) {
      throw FormatError("checkpoint: tensor \"" + name + "\" has shape " + shape_string(params.at(name).shape()) +
                        ", expected " + shape_string(shape));
    }
  }
  if (params.size() != layout.size()) {
    for (const auto& n : params.names()) {
      bool known = false;
      for (const auto& l : layout) known = known || l.first == n;
      if (!known) throw FormatError("checkpoint: unexpected tensor \"" + n + "\"");
    }
  }
}

template <typename T>
void seed_refinement_from_trunk(ParamTable<T>& params, const ModelConfig& cfg) {
  const std::size_t R = cfg.refine_depth();
  for (std::size_t r = 0; r < R; ++r) {
    const std::string src = block_prefix(cfg.depth - R + r), dst = refine_prefix(r);
    for (const auto& name : params.names()) {
      if (name.rfind(dst, 0) == 0) params.at(name) = params.at(src + name.substr(dst.size()));
    }
  }
  params.at("tok_proj.w") = params.at("in_proj.w");
  params.at("ln_r.g") = params.at("ln_f.g");
  params.at("ln_r.b") = params.at("ln_f.b");
  params.at("head_masked.w") = params.at("head_next.w");
  params.at("head_masked.b") = params.at("head_next.b");
}

#define HMAR_INSTANTIATE_PARAMS(T)                                                  \
  template ParamTable<T> init_params<T>(const ModelConfig&, std::uint64_t);        \
  template void validate_params<T>(const ParamTable<T>&, const ModelConfig&);      \
  template void seed_refinement_from_trunk<T>(ParamTable<T>&, const ModelConfig&);

HMAR_INSTANTIATE_PARAMS(float)
HMAR_INSTANTIATE_PARAMS(double)

}  // namespace hmar
