#include "hmar/attnmask/mask.hpp"

#include <algorithm>

#include "hmar/common/binary_io.hpp"
#include "hmar/error.hpp"

namespace hmar {

std::string_view mask_kind_name(MaskKind k) {
  switch (k) {
    case MaskKind::block_causal: return "block-causal";
    case MaskKind::block_diagonal: return "block-diagonal";
    case MaskKind::dense: return "dense";
  }
  return "unknown";
}

MaskKind parse_mask_kind(std::string_view name) {
  if (name == "block-causal" || name == "causal") return MaskKind::block_causal;
  if (name == "block-diagonal" || name == "diagonal") return MaskKind::block_diagonal;
  if (name == "dense") return MaskKind::dense;
  throw InvalidArgument("unknown mask kind \"" + std::string(name) + "\"");
}

AttentionMask::AttentionMask(MaskKind kind, std::vector<std::size_t> blocks) : kind_(kind), blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw InvalidArgument("attention mask: no blocks");
  offsets_.assign(1, 0);
  for (std::size_t n : blocks_) {
    if (n == 0) throw InvalidArgument("attention mask: empty block");
    offsets_.push_back(offsets_.back() + n);
  }
}

AttentionMask AttentionMask::build(const ScaleSchedule& sched, MaskKind kind) {
  return AttentionMask(kind, sched.block_sizes());
}

std::size_t AttentionMask::block_of(std::size_t pos) const {
  if (pos >= size()) throw InvalidArgument("attention mask: position out of range");
  return static_cast<std::size_t>(std::upper_bound(offsets_.begin(), offsets_.end(), pos) - offsets_.begin()) - 1;
}

std::pair<std::size_t, std::size_t> AttentionMask::key_range(std::size_t b) const {
  switch (kind_) {
    case MaskKind::block_causal: return {0, block_end(b)};
    case MaskKind::block_diagonal: return {block_begin(b), block_end(b)};
    case MaskKind::dense: break;
  }
  return {0, size()};
}

bool AttentionMask::allowed(std::size_t query, std::size_t key) const {
  if (key >= size()) throw InvalidArgument("attention mask: key out of range");
  const auto [lo, hi] = key_range(block_of(query));
  return key >= lo && key < hi;
}

std::uint64_t AttentionMask::nnz() const {
  std::uint64_t total = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto [lo, hi] = key_range(b);
    total += static_cast<std::uint64_t>(blocks_[b]) * (hi - lo);
  }
  return total;
}

std::string AttentionMask::to_bytes() const {
  io::ByteWriter w;
  w.magic("AMSK");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(kind_));
  w.u32(static_cast<std::uint32_t>(blocks_.size()));
  for (std::size_t n : blocks_) w.u32(static_cast<std::uint32_t>(n));
  return w.bytes();
}

AttentionMask AttentionMask::from_bytes(const std::string& bytes) {
  io::ByteReader r(bytes, "attention mask");
  r.expect_magic("AMSK");
  r.expect_version(1);
  const std::uint32_t kind = r.u32();
  if (kind > 2) throw FormatError("attention mask: unknown kind " + std::to_string(kind));
  const std::uint32_t count = r.u32();
  std::vector<std::size_t> blocks(count);
  for (auto& n : blocks) n = r.u32();
  if (!r.at_end()) throw FormatError("attention mask: trailing bytes");
  try {
    return AttentionMask(static_cast<MaskKind>(kind), std::move(blocks));
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("attention mask: ") + e.what());
  }
}

SparsityReport sparsity_report(const AttentionMask& mask) {
  SparsityReport r;
  r.n = mask.size();
  const double n2 = static_cast<double>(r.n) * static_cast<double>(r.n);
  r.nnz = mask.nnz();
  r.density = static_cast<double>(r.nnz) / n2;
  r.nnz_block_causal = AttentionMask(MaskKind::block_causal, mask.blocks()).nnz();
  r.nnz_block_diagonal = AttentionMask(MaskKind::block_diagonal, mask.blocks()).nnz();
  r.density_block_causal = static_cast<double>(r.nnz_block_causal) / n2;
  r.density_block_diagonal = static_cast<double>(r.nnz_block_diagonal) / n2;
  r.multiplier = static_cast<double>(r.nnz_block_causal) / static_cast<double>(r.nnz_block_diagonal);
  r.vs_dense = n2 / static_cast<double>(r.nnz);
  return r;
}

SequenceLength sequence_length(const ScaleSchedule& sched) {
  SequenceLength s;
  s.total = sched.total_tokens();
  s.finest = sched.finest().cells();
  s.ratio = static_cast<double>(s.total) / static_cast<double>(s.finest);
  return s;
}

}  // namespace hmar
