#include "hmar/attention/tape_op.hpp"

#include <memory>

#include "hmar/error.hpp"

namespace hmar {

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  if (x.rank() != 2 || heads == 0 || x.dim(1) % heads != 0) {
    throw InvalidArgument("split_heads: width " + shape_string(x.shape()) + " not divisible into " +
                          std::to_string(heads) + " heads");
  }
  const std::size_t N = x.dim(0), d = x.dim(1) / heads;
  Tensor<T> out({heads, N, d});
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t e = 0; e < d; ++e) out.at(h, i, e) = x.at(i, h * d + e);
    }
  }
  return out;
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const std::size_t H = x.dim(0), N = x.dim(1), d = x.dim(2);
  Tensor<T> out({N, H * d});
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t e = 0; e < d; ++e) out.at(i, h * d + e) = x.at(h, i, e);
    }
  }
  return out;
}

namespace ops {

template <typename T>
typename Tape<T>::Var attention(Tape<T>& tape, typename Tape<T>::Var q, typename Tape<T>::Var k,
                                typename Tape<T>::Var v, std::size_t heads, const AttentionMask& mask,
                                const TilingOptions& tiling) {
  const Tensor<T>& qv = tape.value(q);
  const std::size_t d = qv.rank() == 2 ? qv.dim(1) / std::max<std::size_t>(heads, 1) : 0;
  auto state = std::make_shared<AttentionState<T>>();
  Tensor<T> out = attention_tiled(split_heads(qv, heads), split_heads(tape.value(k), heads),
                                  split_heads(tape.value(v), heads), mask, default_scale<T>(d), tiling,
                                  tape.requires_grad(q) || tape.requires_grad(k) || tape.requires_grad(v)
                                      ? state.get()
                                      : nullptr);
  return tape.record(merge_heads(out), {q, k, v}, [=](Tape<T>& tp, typename Tape<T>::Var o) {
    const AttentionGrads<T> g = attention_backward(*state, split_heads(tp.grad(o), heads));
    tp.accumulate(q, merge_heads(g.dq).data());
    tp.accumulate(k, merge_heads(g.dk).data());
    tp.accumulate(v, merge_heads(g.dv).data());
  });
}

}  // namespace ops

#define HMAR_INSTANTIATE_ATTENTION_OP(T)                                                                           \
  template Tensor<T> split_heads<T>(const Tensor<T>&, std::size_t);                                              \
  template Tensor<T> merge_heads<T>(const Tensor<T>&);                                                           \
  template Tape<T>::Var ops::attention<T>(Tape<T>&, Tape<T>::Var, Tape<T>::Var, Tape<T>::Var, std::size_t,       \
                                          const AttentionMask&, const TilingOptions&);

HMAR_INSTANTIATE_ATTENTION_OP(float)
HMAR_INSTANTIATE_ATTENTION_OP(double)

}  // namespace hmar
