#include "hmar/msvq/utilization.hpp"

#include <cmath>

#include "hmar/error.hpp"

namespace hmar {

std::vector<ScaleUsage> codebook_utilization(std::span<const TokenPyramid> pyramids, std::size_t vocab) {
  if (pyramids.empty()) throw InvalidArgument("codebook_utilization: empty collection");
  if (vocab == 0) throw InvalidArgument("codebook_utilization: vocabulary must be >= 1");
  const ScaleSchedule& sched = pyramids.front().schedule();
  std::vector<ScaleUsage> out(sched.scales());
  for (auto& u : out) u.counts.assign(vocab, 0);
  for (const TokenPyramid& p : pyramids) {
    if (!(p.schedule() == sched)) throw InvalidArgument("codebook_utilization: pyramids use different schedules");
    p.validate(vocab);
    for (std::size_t k = 0; k < sched.scales(); ++k) {
      for (TokenId t : p.scale(k)) ++out[k].counts[t];
    }
  }
  for (auto& u : out) {
    std::uint64_t total = 0, used = 0;
    for (auto c : u.counts) {
      total += c;
      used += c > 0;
    }
    u.utilization = static_cast<double>(used) / static_cast<double>(vocab);
    double h = 0.0;
    for (auto c : u.counts) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / static_cast<double>(total);
      h -= p * std::log2(p);
    }
    u.entropy_bits = h == 0.0 ? 0.0 : h;
  }
  return out;
}

}  // namespace hmar
