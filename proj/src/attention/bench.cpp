#include "hmar/attention/bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <json.hpp>
#include <numeric>

#include "hmar/error.hpp"
#include "hmar/numerics/rng.hpp"

namespace hmar {
namespace {

template <typename T>
Tensor<T> random_qkv(std::size_t h, std::size_t n, std::size_t d, Rng& rng) {
  Tensor<T> t({h, n, d});
  for (auto& v : t.data()) v = static_cast<T>(rng.normal());
  return t;
}

template <typename F>
std::vector<double> time_runs(std::size_t warmup, std::size_t repeats, F&& f) {
  for (std::size_t i = 0; i < warmup; ++i) f();
  std::vector<double> ms;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return ms;
}

template <typename T>
void bench_one(const BenchSchedule& bs, const std::vector<MaskKind>& kinds, const BenchOptions& o,
               std::vector<BenchRow>& rows) {
  Rng rng = Rng::substream(o.seed, "bench", fnv1a(bs.name));
  const std::size_t N = bs.schedule.total_tokens();
  const auto q = random_qkv<T>(o.heads, N, o.head_dim, rng);
  const auto k = random_qkv<T>(o.heads, N, o.head_dim, rng);
  const auto v = random_qkv<T>(o.heads, N, o.head_dim, rng);
  const T scale = default_scale<T>(o.head_dim);
  const Tensor<T> dout = random_qkv<T>(o.heads, N, o.head_dim, rng);

  auto base = [&](std::string kind, std::string impl) {
    BenchRow r;
    r.schedule = bs.name;
    r.kind = std::move(kind);
    r.impl = std::move(impl);
    r.config = bs.name + "/" + r.kind + "/" + r.impl;
    r.n = N;
    r.heads = o.heads;
    r.head_dim = o.head_dim;
    r.tile = o.tile;
    r.precision = sizeof(T) == 8 ? "f64" : "f32";
    r.repeats = o.repeats;
    return r;
  };

  const std::size_t first = rows.size();
  {
    const auto mask = AttentionMask::build(bs.schedule, MaskKind::dense);
    BenchRow r = base("dense", "dense-ref");
    const auto t = summarize_timings(time_runs(o.warmup, o.repeats, [&] {
      volatile double sink = attention_dense_ref(q, k, v, mask, static_cast<double>(scale))[0];
      (void)sink;
    }));
    r.mean_ms = t.mean;
    r.p50_ms = t.p50;
    r.min_ms = t.min;
    r.nnz = mask.nnz();
    r.scored = r.nnz * o.heads;
    r.flops = 4 * o.head_dim * r.scored;
    rows.push_back(r);
  }
  const TilingOptions tiling{o.tile, TileLayout::block_aligned};
  for (MaskKind kind : kinds) {
    const auto mask = AttentionMask::build(bs.schedule, kind);
    BenchRow r = base(std::string(mask_kind_name(kind)), o.backward ? "tiled-fwd-bwd" : "tiled");
    TileStats stats;
    attention_tiled(q, k, v, mask, scale, tiling, static_cast<AttentionState<T>*>(nullptr), &stats);
    const auto t = summarize_timings(time_runs(o.warmup, o.repeats, [&] {
      if (o.backward) {
        AttentionState<T> st;
        attention_tiled(q, k, v, mask, scale, tiling, &st);
        volatile T sink = attention_backward(st, dout).dq[0];
        (void)sink;
      } else {
        volatile T sink = attention_tiled(q, k, v, mask, scale, tiling)[0];
        (void)sink;
      }
    }));
    r.mean_ms = t.mean;
    r.p50_ms = t.p50;
    r.min_ms = t.min;
    r.nnz = mask.nnz();
    r.visited_pairs = stats.visited_pairs;
    r.scored = stats.scored;
    r.flops = 4 * o.head_dim * stats.scored;
    rows.push_back(r);
  }
  const double dense_ms = rows[first].mean_ms;
  double causal_ms = 0.0;
  for (std::size_t i = first; i < rows.size(); ++i) {
    if (rows[i].impl != "dense-ref" && rows[i].kind == "block-causal") causal_ms = rows[i].mean_ms;
  }
  for (std::size_t i = first; i < rows.size(); ++i) {
    rows[i].speedup_vs_dense = dense_ms / rows[i].mean_ms;
    rows[i].speedup_vs_causal = causal_ms > 0.0 && rows[i].impl != "dense-ref" ? causal_ms / rows[i].mean_ms : 0.0;
  }
}

}  // namespace

TimingSummary summarize_timings(std::vector<double> ms) {
  if (ms.empty()) return {};
  TimingSummary s;
  s.mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  s.p50 = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  s.min = ms.front();
  return s;
}

std::vector<BenchRow> bench_attention(const std::vector<BenchSchedule>& schedules, const std::vector<MaskKind>& kinds,
                                      const BenchOptions& opts) {
  if (opts.repeats < 3) throw InvalidArgument("bench_attention: repeats must be >= 3");
  if (opts.heads == 0 || opts.head_dim == 0) throw InvalidArgument("bench_attention: heads and head_dim must be >= 1");
  std::vector<BenchRow> rows;
  for (const auto& s : schedules) {
    if (opts.f64) {
      bench_one<double>(s, kinds, opts, rows);
    } else {
      bench_one<float>(s, kinds, opts, rows);
    }
  }
  return rows;
}

std::string bench_json_line(const BenchRow& r) {
  nlohmann::ordered_json j;
  j["config"] = r.config;
  j["mean_ms"] = r.mean_ms;
  j["p50_ms"] = r.p50_ms;
  j["speedup_vs_dense"] = r.speedup_vs_dense;
  j["speedup_vs_causal"] = r.speedup_vs_causal;
  j["min_ms"] = r.min_ms;
  j["schedule"] = r.schedule;
  j["kind"] = r.kind;
  j["impl"] = r.impl;
  j["n"] = r.n;
  j["heads"] = r.heads;
  j["head_dim"] = r.head_dim;
  j["tile"] = r.tile;
  j["precision"] = r.precision;
  j["repeats"] = r.repeats;
  j["nnz"] = r.nnz;
  j["visited_pairs"] = r.visited_pairs;
  j["flops"] = r.flops;
  return j.dump();
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::string out = fmt::format("{:<44} {:>6} {:>10} {:>10} {:>9} {:>9} {:>9}\n", "config", "N", "mean_ms", "p50_ms",
                                "vs_dense", "vs_causal", "visited");
  for (const auto& r : rows) {
    out += fmt::format("{:<44} {:>6} {:>10.3f} {:>10.3f} {:>9.2f} {:>9.2f} {:>9}\n", r.config, r.n, r.mean_ms, r.p50_ms,
                       r.speedup_vs_dense, r.speedup_vs_causal, r.visited_pairs);
  }
  return out;
}

}  // namespace hmar
