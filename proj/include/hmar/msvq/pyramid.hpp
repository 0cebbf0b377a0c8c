#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "hmar/msvq/codebook.hpp"
#include "hmar/msvq/schedule.hpp"

namespace hmar {

// Per-scale token maps plus [MASK] flags, laid out scale-concatenated in
// sequence order (scale k occupies schedule.offset(k) .. + tokens(k)).
class TokenPyramid {
 public:
  TokenPyramid() = default;
  explicit TokenPyramid(const ScaleSchedule& sched)
      : sched_(sched), tokens_(sched.total_tokens(), 0), masked_(sched.total_tokens(), 0) {}

  const ScaleSchedule& schedule() const noexcept { return sched_; }
  std::size_t scales() const noexcept { return sched_.scales(); }

  std::span<TokenId> scale(std::size_t k) { return std::span<TokenId>(tokens_).subspan(sched_.offset(k), sched_.tokens(k)); }
  std::span<const TokenId> scale(std::size_t k) const {
    return std::span<const TokenId>(tokens_).subspan(sched_.offset(k), sched_.tokens(k));
  }
  std::span<std::uint8_t> mask(std::size_t k) {
    return std::span<std::uint8_t>(masked_).subspan(sched_.offset(k), sched_.tokens(k));
  }
  std::span<const std::uint8_t> mask(std::size_t k) const {
    return std::span<const std::uint8_t>(masked_).subspan(sched_.offset(k), sched_.tokens(k));
  }

  std::span<const TokenId> tokens() const noexcept { return tokens_; }
  std::span<TokenId> tokens() noexcept { return tokens_; }
  std::span<const std::uint8_t> mask_flags() const noexcept { return masked_; }
  std::span<std::uint8_t> mask_flags() noexcept { return masked_; }

  bool any_masked() const noexcept {
    for (auto m : masked_) {
      if (m) return true;
    }
    return false;
  }
  void clear_mask() { std::fill(masked_.begin(), masked_.end(), std::uint8_t{0}); }

  // Throws InvalidArgument when a token is outside [0, vocab).
  void validate(std::size_t vocab) const;

  friend bool operator==(const TokenPyramid&, const TokenPyramid&) = default;

 private:
  ScaleSchedule sched_;
  std::vector<TokenId> tokens_;
  std::vector<std::uint8_t> masked_;
};

}  // namespace hmar
