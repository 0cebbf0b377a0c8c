#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hmar/msvq/pyramid.hpp"

namespace hmar {

struct ScaleUsage {
  std::vector<std::uint64_t> counts;  // length V
  double utilization = 0.0;           // fraction of codes used at least once
  double entropy_bits = 0.0;
};

// Per-scale code histograms over a corpus of pyramids sharing one schedule.
std::vector<ScaleUsage> codebook_utilization(std::span<const TokenPyramid> pyramids, std::size_t vocab);

}  // namespace hmar
