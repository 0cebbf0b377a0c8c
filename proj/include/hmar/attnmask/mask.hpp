#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hmar/msvq/schedule.hpp"

namespace hmar {

enum class MaskKind : std::uint32_t { block_causal = 0, block_diagonal = 1, dense = 2 };

std::string_view mask_kind_name(MaskKind k);
MaskKind parse_mask_kind(std::string_view name);

// Block-structured attention pattern over a scale-concatenated sequence.
// Every query's permitted keys form one contiguous range, so the pattern is
// stored as block sizes only and never materialized as N x N booleans.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(MaskKind kind, std::vector<std::size_t> blocks);
  static AttentionMask build(const ScaleSchedule& sched, MaskKind kind);

  MaskKind kind() const noexcept { return kind_; }
  const std::vector<std::size_t>& blocks() const noexcept { return blocks_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  std::size_t block_begin(std::size_t b) const { return offsets_.at(b); }
  std::size_t block_end(std::size_t b) const { return offsets_.at(b + 1); }
  std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t block_of(std::size_t pos) const;

  // Permitted keys for every query in block b: [first, second).
  std::pair<std::size_t, std::size_t> key_range(std::size_t b) const;
  bool allowed(std::size_t query, std::size_t key) const;

  // Closed-form count of permitted (query, key) pairs.
  std::uint64_t nnz() const;

  std::string to_bytes() const;
  static AttentionMask from_bytes(const std::string& bytes);

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  MaskKind kind_ = MaskKind::dense;
  std::vector<std::size_t> blocks_;
  std::vector<std::size_t> offsets_;
};

struct SparsityReport {
  std::size_t n = 0;
  std::uint64_t nnz = 0;
  double density = 0.0;
  std::uint64_t nnz_block_causal = 0;
  std::uint64_t nnz_block_diagonal = 0;
  double density_block_causal = 0.0;
  double density_block_diagonal = 0.0;
  // nnz(block-causal) / nnz(block-diagonal) for the same blocks.
  double multiplier = 0.0;
  // N^2 / nnz(this mask).
  double vs_dense = 0.0;
};

SparsityReport sparsity_report(const AttentionMask& mask);

struct SequenceLength {
  std::size_t total = 0;    // N
  std::size_t finest = 0;   // n_K, the next-token sequence length
  double ratio = 0.0;       // N / n_K
};

SequenceLength sequence_length(const ScaleSchedule& sched);

}  // namespace hmar
