#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmar/attention/attention.hpp"
#include "hmar/msvq/schedule.hpp"

namespace hmar {

struct BenchSchedule {
  std::string name;
  ScaleSchedule schedule;
};

struct BenchOptions {
  std::size_t repeats = 25;
  std::size_t warmup = 2;
  std::size_t heads = 4;
  std::size_t head_dim = 64;
  std::size_t tile = 64;
  bool f64 = false;
  bool backward = false;  // time forward + backward instead of forward only
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string config;  // e.g. "var256/block-diagonal/tiled"
  std::string schedule;
  std::string kind;
  std::string impl;  // "dense-ref" or "tiled"
  std::size_t n = 0, heads = 0, head_dim = 0, tile = 0;
  std::string precision;
  std::size_t repeats = 0;
  double mean_ms = 0.0, p50_ms = 0.0, min_ms = 0.0;
  double speedup_vs_dense = 0.0;
  double speedup_vs_causal = 0.0;  // 0 when no tiled block-causal row exists
  std::uint64_t nnz = 0;
  std::uint64_t visited_pairs = 0;
  std::uint64_t scored = 0;
  std::uint64_t flops = 0;  // 4 * d * scored per head (QK^T and PV), forward only
};

// Times the dense reference once per schedule and the tiled kernel for each
// kind on identical seeded inputs. Warm-up runs are excluded from timing.
std::vector<BenchRow> bench_attention(const std::vector<BenchSchedule>& schedules, const std::vector<MaskKind>& kinds,
                                      const BenchOptions& opts);

std::string bench_json_line(const BenchRow& row);
std::string bench_table(const std::vector<BenchRow>& rows);

struct TimingSummary {
  double mean = 0.0, p50 = 0.0, min = 0.0;
};
TimingSummary summarize_timings(std::vector<double> ms);

}  // namespace hmar
