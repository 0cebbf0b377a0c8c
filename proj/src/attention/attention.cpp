#include "hmar/attention/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hmar/error.hpp"

namespace hmar {
namespace {

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const AttentionMask& mask) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw InvalidArgument("attention: Q, K, V must share one [heads, N, d] shape, got " + shape_string(q.shape()) +
                          ", " + shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  if (q.dim(1) != mask.size()) {
    throw InvalidArgument("attention: sequence length " + std::to_string(q.dim(1)) + " does not match mask size " +
                          std::to_string(mask.size()));
  }
  if (q.dim(2) == 0) throw InvalidArgument("attention: zero head dimension");
}

// Per-row permitted key range for rows [begin, end).
void row_ranges(const AttentionMask& mask, const Tile& t, std::vector<std::size_t>& lo, std::vector<std::size_t>& hi) {
  lo.resize(t.end - t.begin);
  hi.resize(t.end - t.begin);
  std::size_t b = mask.block_of(t.begin);
  for (std::size_t r = t.begin; r < t.end; ++r) {
    while (r >= mask.block_end(b)) ++b;
    const auto [a, e] = mask.key_range(b);
    lo[r - t.begin] = a;
    hi[r - t.begin] = e;
  }
}

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

std::vector<Tile> make_tiles(const AttentionMask& mask, const TilingOptions& opts) {
  if (opts.tile == 0) throw InvalidArgument("attention: tile size must be >= 1");
  std::vector<Tile> tiles;
  if (opts.layout == TileLayout::uniform) {
    for (std::size_t b = 0; b < mask.size(); b += opts.tile) tiles.push_back({b, std::min(mask.size(), b + opts.tile)});
    return tiles;
  }
  for (std::size_t blk = 0; blk < mask.block_count(); ++blk) {
    for (std::size_t b = mask.block_begin(blk); b < mask.block_end(blk); b += opts.tile) {
      tiles.push_back({b, std::min(mask.block_end(blk), b + opts.tile)});
    }
  }
  return tiles;
}

std::uint64_t TilePlan::visited() const noexcept {
  std::uint64_t n = 0;
  for (const auto& v : visits) n += v.size();
  return n;
}

std::uint64_t TilePlan::partial() const noexcept {
  std::uint64_t n = 0;
  for (const auto& v : visits) {
    for (const auto& x : v) n += x.partial;
  }
  return n;
}

std::uint64_t TilePlan::scored() const noexcept {
  std::uint64_t n = 0;
  for (std::size_t qt = 0; qt < visits.size(); ++qt) {
    const std::uint64_t rows = tiles[qt].end - tiles[qt].begin;
    for (const auto& x : visits[qt]) n += rows * (tiles[x.key_tile].end - tiles[x.key_tile].begin);
  }
  return n;
}

TilePlan plan_tiles(const AttentionMask& mask, const TilingOptions& opts) {
  TilePlan plan;
  plan.tiles = make_tiles(mask, opts);
  plan.visits.resize(plan.tiles.size());
  std::vector<std::size_t> lo, hi;
  for (std::size_t qt = 0; qt < plan.tiles.size(); ++qt) {
    row_ranges(mask, plan.tiles[qt], lo, hi);
    const std::size_t umin = *std::min_element(lo.begin(), lo.end());
    const std::size_t umax = *std::max_element(hi.begin(), hi.end());
    for (std::size_t kt = 0; kt < plan.tiles.size(); ++kt) {
      const Tile& t = plan.tiles[kt];
      if (t.end <= umin || t.begin >= umax) continue;
      bool any = false, all = true;
      for (std::size_t r = 0; r < lo.size(); ++r) {
        const bool touches = lo[r] < t.end && hi[r] > t.begin;
        const bool covers = lo[r] <= t.begin && hi[r] >= t.end;
        any = any || touches;
        all = all && covers;
      }
      if (any) plan.visits[qt].push_back({kt, !all});
    }
  }
  return plan;
}

template <typename T>
Tensor<double> attention_dense_ref(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                   const AttentionMask& mask, double scale) {
  check_qkv(q, k, v, mask);
  const std::size_t H = q.dim(0), N = q.dim(1), d = q.dim(2);
  Tensor<double> out({H, N, d});
  std::vector<double> s(N);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < N; ++i) {
      const auto [lo, hi] = mask.key_range(mask.block_of(i));
      double mx = kNegInf;
      for (std::size_t j = 0; j < N; ++j) {
        if (j < lo || j >= hi) {
          s[j] = kNegInf;
          continue;
        }
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          acc += static_cast<double>(q.at(h, i, c)) * static_cast<double>(k.at(h, j, c));
        }
        s[j] = acc * scale;
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < N; ++j) {
        s[j] = s[j] == kNegInf ? 0.0 : std::exp(s[j] - mx);
        z += s[j];
      }
      for (std::size_t j = 0; j < N; ++j) {
        if (s[j] == 0.0) continue;
        const double p = s[j] / z;
        for (std::size_t c = 0; c < d; ++c) out.at(h, i, c) += p * static_cast<double>(v.at(h, j, c));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> attention_tiled(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const AttentionMask& mask,
                          T scale, const TilingOptions& opts, AttentionState<T>* state, TileStats* stats) {
  check_qkv(q, k, v, mask);
  const std::size_t H = q.dim(0), N = q.dim(1), d = q.dim(2);
  const TilePlan plan = plan_tiles(mask, opts);
  const T ninf = -std::numeric_limits<T>::infinity();
  Tensor<T> out({H, N, d});
  Tensor<T> lse({H, N});
  std::vector<T> m, l, acc, s;
  std::vector<std::size_t> lo, hi;
  for (std::size_t h = 0; h < H; ++h) {
    const T* Q = q.data().data() + h * N * d;
    const T* K = k.data().data() + h * N * d;
    const T* Vv = v.data().data() + h * N * d;
    T* O = out.data().data() + h * N * d;
    for (std::size_t qt = 0; qt < plan.tiles.size(); ++qt) {
      const Tile qtile = plan.tiles[qt];
      const std::size_t tq = qtile.end - qtile.begin;
      m.assign(tq, ninf);
      l.assign(tq, T{0});
      acc.assign(tq * d, T{0});
      row_ranges(mask, qtile, lo, hi);
      for (const auto& visit : plan.visits[qt]) {
        const Tile kt = plan.tiles[visit.key_tile];
        const std::size_t tk = kt.end - kt.begin;
        s.resize(tq * tk);
        for (std::size_t r = 0; r < tq; ++r) {
          const T* qi = Q + (qtile.begin + r) * d;
          for (std::size_t c = 0; c < tk; ++c) {
            const T* kj = K + (kt.begin + c) * d;
            T dot{0};
            for (std::size_t e = 0; e < d; ++e) dot += qi[e] * kj[e];
            s[r * tk + c] = dot * scale;
          }
        }
        if (visit.partial) {
          for (std::size_t r = 0; r < tq; ++r) {
            for (std::size_t c = 0; c < tk; ++c) {
              const std::size_t key = kt.begin + c;
              if (key < lo[r] || key >= hi[r]) s[r * tk + c] = ninf;
            }
          }
        }
        for (std::size_t r = 0; r < tq; ++r) {
          T* srow = s.data() + r * tk;
          T rmax = ninf;
          for (std::size_t c = 0; c < tk; ++c) rmax = std::max(rmax, srow[c]);
          if (rmax == ninf) continue;
          const T mnew = std::max(m[r], rmax);
          const T alpha = m[r] == ninf ? T{0} : std::exp(m[r] - mnew);
          T* a = acc.data() + r * d;
          if (alpha != T{1}) {
            l[r] *= alpha;
            for (std::size_t e = 0; e < d; ++e) a[e] *= alpha;
          }
          m[r] = mnew;
          for (std::size_t c = 0; c < tk; ++c) {
            if (srow[c] == ninf) continue;
            const T p = std::exp(srow[c] - mnew);
            l[r] += p;
            const T* vj = Vv + (kt.begin + c) * d;
            for (std::size_t e = 0; e < d; ++e) a[e] += p * vj[e];
          }
        }
      }
      for (std::size_t r = 0; r < tq; ++r) {
        const std::size_t i = qtile.begin + r;
        const T inv = T{1} / l[r];
        for (std::size_t e = 0; e < d; ++e) O[i * d + e] = acc[r * d + e] * inv;
        lse.at(h, i) = m[r] + std::log(l[r]);
      }
    }
  }
  if (stats) {
    const std::uint64_t all = static_cast<std::uint64_t>(plan.tiles.size()) * plan.tiles.size();
    stats->visited_pairs += H * plan.visited();
    stats->skipped_pairs += H * (all - plan.visited());
    stats->partial_pairs += H * plan.partial();
    stats->scored += H * plan.scored();
  }
  if (state) {
    state->q = q;
    state->k = k;
    state->v = v;
    state->out = out;
    state->lse = std::move(lse);
    state->mask = mask;
    state->tiling = opts;
    state->scale = scale;
  }
  return out;
}

template <typename T>
AttentionGrads<T> attention_backward(const AttentionState<T>& st, const Tensor<T>& dout, TileStats* stats) {
  if (st.empty()) throw InvalidState("attention backward: no saved forward state");
  if (dout.shape() != st.out.shape()) {
    throw InvalidState("attention backward: saved output " + shape_string(st.out.shape()) +
                       " does not match upstream gradient " + shape_string(dout.shape()));
  }
  const std::size_t H = st.q.dim(0), N = st.q.dim(1), d = st.q.dim(2);
  const TilePlan plan = plan_tiles(st.mask, st.tiling);
  const T scale = st.scale;
  AttentionGrads<T> g{Tensor<T>(st.q.shape()), Tensor<T>(st.k.shape()), Tensor<T>(st.v.shape())};
  std::vector<T> p, dp, D(N);
  std::vector<std::size_t> lo, hi;
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t base = h * N * d;
    const T* Q = st.q.data().data() + base;
    const T* K = st.k.data().data() + base;
    const T* Vv = st.v.data().data() + base;
    const T* O = st.out.data().data() + base;
    const T* dO = dout.data().data() + base;
    T* dQ = g.dq.data().data() + base;
    T* dK = g.dk.data().data() + base;
    T* dV = g.dv.data().data() + base;
    for (std::size_t i = 0; i < N; ++i) {
      T s{0};
      for (std::size_t e = 0; e < d; ++e) s += dO[i * d + e] * O[i * d + e];
      D[i] = s;
    }
    for (std::size_t qt = 0; qt < plan.tiles.size(); ++qt) {
      const Tile qtile = plan.tiles[qt];
      const std::size_t tq = qtile.end - qtile.begin;
      row_ranges(st.mask, qtile, lo, hi);
      for (const auto& visit : plan.visits[qt]) {
        const Tile kt = plan.tiles[visit.key_tile];
        const std::size_t tk = kt.end - kt.begin;
        p.assign(tq * tk, T{0});
        dp.resize(tq * tk);
        for (std::size_t r = 0; r < tq; ++r) {
          const std::size_t i = qtile.begin + r;
          const T li = st.lse.at(h, i);
          for (std::size_t c = 0; c < tk; ++c) {
            const std::size_t j = kt.begin + c;
            if (visit.partial && (j < lo[r] || j >= hi[r])) continue;
            T dot{0};
            for (std::size_t e = 0; e < d; ++e) dot += Q[i * d + e] * K[j * d + e];
            p[r * tk + c] = std::exp(dot * scale - li);
          }
        }
        for (std::size_t r = 0; r < tq; ++r) {
          const std::size_t i = qtile.begin + r;
          for (std::size_t c = 0; c < tk; ++c) {
            const std::size_t j = kt.begin + c;
            const T pij = p[r * tk + c];
            T dpij{0};
            for (std::size_t e = 0; e < d; ++e) {
              dV[j * d + e] += pij * dO[i * d + e];
              dpij += dO[i * d + e] * Vv[j * d + e];
            }
            dp[r * tk + c] = pij * (dpij - D[i]) * scale;
          }
        }
        for (std::size_t r = 0; r < tq; ++r) {
          const std::size_t i = qtile.begin + r;
          for (std::size_t c = 0; c < tk; ++c) {
            const std::size_t j = kt.begin + c;
            const T ds = dp[r * tk + c];
            if (ds == T{0}) continue;
            for (std::size_t e = 0; e < d; ++e) {
              dQ[i * d + e] += ds * K[j * d + e];
              dK[j * d + e] += ds * Q[i * d + e];
            }
          }
        }
      }
    }
  }
  if (stats) {
    const std::uint64_t all = static_cast<std::uint64_t>(plan.tiles.size()) * plan.tiles.size();
    stats->visited_pairs += H * plan.visited();
    stats->skipped_pairs += H * (all - plan.visited());
    stats->partial_pairs += H * plan.partial();
    stats->scored += H * plan.scored();
  }
  return g;
}

#define HMAR_INSTANTIATE_ATTENTION(T)                                                                              \
  template Tensor<double> attention_dense_ref<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                                 const AttentionMask&, double);                                  \
  template Tensor<T> attention_tiled<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                        const AttentionMask&, T, const TilingOptions&, AttentionState<T>*,       \
                                        TileStats*);                                                             \
  template AttentionGrads<T> attention_backward<T>(const AttentionState<T>&, const Tensor<T>&, TileStats*);

HMAR_INSTANTIATE_ATTENTION(float)
HMAR_INSTANTIATE_ATTENTION(double)

}  // namespace hmar
