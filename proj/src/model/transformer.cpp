#include "hmar/model/transformer.hpp"

#include "hmar/attention/tape_op.hpp"

namespace hmar {
namespace {

bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

template <typename T>
using Var = typename Tape<T>::Var;

template <typename T>
Var<T> linear(Tape<T>& t, Var<T> x, Var<T> w, Var<T> b) {
  return ops::add_bias(t, ops::matmul(t, x, w), b);
}

template <typename T>
Var<T> block(Tape<T>& t, const BoundParams<T>& p, const std::string& pre, const ModelConfig& cfg,
             const AttentionMask& mask, Var<T> x) {
  const Var<T> h = ops::layernorm(t, x, p[pre + "ln1.g"], p[pre + "ln1.b"]);
  const Var<T> q = linear(t, h, p[pre + "attn.wq"], p[pre + "attn.bq"]);
  const Var<T> k = linear(t, h, p[pre + "attn.wk"], p[pre + "attn.bk"]);
  const Var<T> v = linear(t, h, p[pre + "attn.wv"], p[pre + "attn.bv"]);
  const Var<T> a = ops::attention(t, q, k, v, cfg.heads, mask, cfg.tiling);
  x = ops::add(t, x, linear(t, a, p[pre + "attn.wo"], p[pre + "attn.bo"]));
  const Var<T> h2 = ops::layernorm(t, x, p[pre + "ln2.g"], p[pre + "ln2.b"]);
  const Var<T> m = ops::gelu(t, linear(t, h2, p[pre + "mlp.fc1.w"], p[pre + "mlp.fc1.b"]));
  return ops::add(t, x, linear(t, m, p[pre + "mlp.fc2.w"], p[pre + "mlp.fc2.b"]));
}

template <typename T>
void check(const Tape<T>& t, Var<T> x, int layer) {
  require_finite(t.value(x), "activations", layer);
}

}  // namespace

bool trainable_phase1(const std::string& n) {
  return !(starts_with(n, "refine.") || starts_with(n, "ln_r.") || starts_with(n, "head_masked.") ||
           starts_with(n, "tok_proj.") || n == "token_emb" || n == "mask_emb");
}

bool trainable_phase2(const std::string& n) {
  return starts_with(n, "refine.") || starts_with(n, "ln_r.") || starts_with(n, "head_masked.") ||
         starts_with(n, "tok_proj.") || n == "token_emb" || n == "mask_emb";
}

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamTable<T>& params, const TrainableFn& trainable) {
  BoundParams<T> b;
  b.table = &params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool train = trainable && trainable(params.names()[i]);
    b.vars.push_back(train ? tape.variable(params.at(i)) : tape.constant(params.at(i)));
  }
  return b;
}

template <typename T>
Var<T> embed(Tape<T>& t, const BoundParams<T>& p, const ModelConfig& cfg, const SequenceInputs& in) {
  const std::size_t n = in.rows();
  const std::vector<std::int64_t> cls(n, in.class_id);
  Var<T> x = ops::embedding(t, p["pos_emb"], std::span<const std::int64_t>(in.positions));
  x = ops::add(t, x, ops::embedding(t, p["scale_emb"], std::span<const std::int64_t>(in.scale_ids)));
  x = ops::add(t, x, ops::embedding(t, p["class_emb"], std::span<const std::int64_t>(cls)));
  if (in.last_scale > 0) {
    const Var<T> c = t.constant(in.content.template cast<T>());
    x = ops::add(t, x, ops::matmul(t, c, p["in_proj.w"]));
  }
  if (in.masked_mode) {
    x = ops::add(t, x, ops::embedding(t, p["token_emb"], std::span<const std::int64_t>(in.token_ids)));
    x = ops::add(t, x, ops::embedding(t, p["mask_emb"], std::span<const std::int64_t>(in.mask_ids)));
    x = ops::add(t, x, ops::matmul(t, t.constant(in.token_content.template cast<T>()), p["tok_proj.w"]));
  }
  (void)cfg;
  return x;
}

template <typename T>
Var<T> forward(Tape<T>& t, const BoundParams<T>& p, const ModelConfig& cfg, const SequenceInputs& in) {
  Var<T> x = embed(t, p, cfg, in);
  check(t, x, 0);
  if (!in.masked_mode) {
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      x = block(t, p, block_prefix(l), cfg, in.mask, x);
      check(t, x, static_cast<int>(l + 1));
    }
    x = ops::layernorm(t, x, p["ln_f.g"], p["ln_f.b"]);
    const Var<T> logits = linear(t, x, p["head_next.w"], p["head_next.b"]);
    check(t, logits, static_cast<int>(cfg.depth + 1));
    return logits;
  }
  const std::size_t shared = cfg.depth - cfg.refine_depth();
  for (std::size_t l = 0; l < shared; ++l) {
    x = block(t, p, block_prefix(l), cfg, in.mask, x);
    check(t, x, static_cast<int>(l + 1));
  }
  for (std::size_t r = 0; r < cfg.refine_depth(); ++r) {
    x = block(t, p, refine_prefix(r), cfg, in.mask, x);
    check(t, x, static_cast<int>(shared + r + 1));
  }
  x = ops::layernorm(t, x, p["ln_r.g"], p["ln_r.b"]);
  const Var<T> logits = linear(t, x, p["head_masked.w"], p["head_masked.b"]);
  check(t, logits, static_cast<int>(cfg.depth + 1));
  return logits;
}

template <typename T>
Tensor<T> forward_logits(const ParamTable<T>& params, const ModelConfig& cfg, const SequenceInputs& in) {
  Tape<T> tape;
  const BoundParams<T> p = bind_params(tape, params, TrainableFn{});
  return tape.value(forward(tape, p, cfg, in));
}

#define HMAR_INSTANTIATE_MODEL(T)                                                                                   \
  template BoundParams<T> bind_params<T>(Tape<T>&, const ParamTable<T>&, const TrainableFn&);                     \
  template Tape<T>::Var embed<T>(Tape<T>&, const BoundParams<T>&, const ModelConfig&, const SequenceInputs&);     \
  template Tape<T>::Var forward<T>(Tape<T>&, const BoundParams<T>&, const ModelConfig&, const SequenceInputs&);   \
  template Tensor<T> forward_logits<T>(const ParamTable<T>&, const ModelConfig&, const SequenceInputs&);

HMAR_INSTANTIATE_MODEL(float)
HMAR_INSTANTIATE_MODEL(double)

}  // namespace hmar
