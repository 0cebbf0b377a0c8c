#pragma once

#include <cstdint>
#include <vector>

#include "hmar/attnmask/mask.hpp"
#include "hmar/numerics/tensor.hpp"

namespace hmar {

// Q, K, V and outputs are [heads, N, d] throughout this header.

// Materialized-score reference, computed in 64-bit regardless of T.
template <typename T>
Tensor<double> attention_dense_ref(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                   const AttentionMask& mask, double scale);

enum class TileLayout {
  // Tiles never straddle a block boundary; each block is cut into
  // ceil(n_k / T) tiles, so no visited tile needs an element mask.
  block_aligned,
  // Fixed T-row tiles over the whole sequence; tiles straddling block edges
  // carry an element mask.
  uniform,
};

struct TilingOptions {
  std::size_t tile = 64;
  TileLayout layout = TileLayout::block_aligned;
};

struct TileStats {
  std::uint64_t visited_pairs = 0;  // (query tile, key tile) pairs computed, summed over heads
  std::uint64_t skipped_pairs = 0;  // pairs wholly disallowed and never touched
  std::uint64_t partial_pairs = 0;  // visited pairs that needed an element mask
  std::uint64_t scored = 0;         // score entries evaluated, including masked-off padding
  void reset() { *this = TileStats{}; }
};

struct Tile {
  std::size_t begin, end;
};

std::vector<Tile> make_tiles(const AttentionMask& mask, const TilingOptions& opts);

// Key tiles each query tile must visit, in traversal order.
struct TilePlan {
  struct Visit {
    std::size_t key_tile;
    bool partial;
  };
  std::vector<Tile> tiles;
  std::vector<std::vector<Visit>> visits;  // indexed by query tile
  std::uint64_t visited() const noexcept;
  std::uint64_t partial() const noexcept;
  std::uint64_t scored() const noexcept;  // sum of visited tile areas
};

TilePlan plan_tiles(const AttentionMask& mask, const TilingOptions& opts);

// Everything the backward pass needs; probabilities are recomputed from the
// saved log-sum-exp rather than stored.
template <typename T>
struct AttentionState {
  Tensor<T> q, k, v, out;
  Tensor<T> lse;  // [heads, N]
  AttentionMask mask;
  TilingOptions tiling;
  T scale{0};
  bool empty() const noexcept { return out.empty(); }
  void release() { *this = AttentionState{}; }
};

template <typename T>
struct AttentionGrads {
  Tensor<T> dq, dk, dv;
};

// IO-aware tiled forward with online softmax. Wholly masked tile pairs are
// skipped; traversal order is fixed, so results are bit-reproducible.
template <typename T>
Tensor<T> attention_tiled(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const AttentionMask& mask,
                          T scale, const TilingOptions& opts = {}, AttentionState<T>* state = nullptr,
                          TileStats* stats = nullptr);

// Recomputes P tile by tile from the saved statistics. Throws InvalidState
// when the state is empty or dout does not match the saved output.
template <typename T>
AttentionGrads<T> attention_backward(const AttentionState<T>& state, const Tensor<T>& dout,
                                     TileStats* stats = nullptr);

template <typename T>
T default_scale(std::size_t head_dim) {
  return static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
}

}  // namespace hmar
