#pragma once

#include "hmar/attention/attention.hpp"
#include "hmar/numerics/tape.hpp"

namespace hmar {

// Splits [N, heads*d] into [heads, N, d] and back.
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads);
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x);

namespace ops {

// Multi-head masked attention on [N, width] operands with softmax scale
// 1/sqrt(width/heads). Backward runs the tiled kernel's recompute pass.
template <typename T>
typename Tape<T>::Var attention(Tape<T>& tape, typename Tape<T>::Var q, typename Tape<T>::Var k,
                                typename Tape<T>::Var v, std::size_t heads, const AttentionMask& mask,
                                const TilingOptions& tiling = {});

}  // namespace ops
}  // namespace hmar
