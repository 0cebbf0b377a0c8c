#include <gtest/gtest.h>

#include <vector>

#include "hmar/attnmask/mask.hpp"
#include "hmar/error.hpp"
#include "hmar/numerics/rng.hpp"

namespace hmar {
namespace {

// N x N materialization straight from the definitions.
std::vector<std::vector<bool>> enumerate(const std::vector<std::size_t>& blocks, MaskKind kind) {
  std::vector<std::size_t> owner;
  for (std::size_t b = 0; b < blocks.size(); ++b) owner.insert(owner.end(), blocks[b], b);
  const std::size_t n = owner.size();
  std::vector<std::vector<bool>> m(n, std::vector<bool>(n));
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = 0; k < n; ++k) {
      switch (kind) {
        case MaskKind::dense: m[q][k] = true; break;
        case MaskKind::block_causal: m[q][k] = owner[k] <= owner[q]; break;
        case MaskKind::block_diagonal: m[q][k] = owner[k] == owner[q]; break;
      }
    }
  }
  return m;
}

std::uint64_t count(const std::vector<std::vector<bool>>& m) {
  std::uint64_t c = 0;
  for (const auto& row : m) {
    for (bool b : row) c += b;
  }
  return c;
}

TEST(AttnMask, TwoScaleCounts) {
  const auto s = ScaleSchedule::from_sides({1, 2});
  EXPECT_EQ(AttentionMask::build(s, MaskKind::block_diagonal).nnz(), 17u);
  EXPECT_EQ(AttentionMask::build(s, MaskKind::block_causal).nnz(), 21u);
  EXPECT_NEAR(sparsity_report(AttentionMask::build(s, MaskKind::block_diagonal)).multiplier, 21.0 / 17.0, 1e-12);
}

TEST(AttnMask, SingleScaleKindsCoincide) {
  const auto s = ScaleSchedule::from_sides({3});
  for (auto kind : {MaskKind::block_causal, MaskKind::block_diagonal}) {
    EXPECT_EQ(AttentionMask::build(s, kind).nnz(), 81u);
    EXPECT_EQ(AttentionMask::build(s, kind).key_range(0), AttentionMask::build(s, MaskKind::dense).key_range(0));
  }
}

TEST(AttnMask, Var256Counts) {
  const auto s = ScaleSchedule::var256();
  const auto diag = AttentionMask::build(s, MaskKind::block_diagonal);
  const auto causal = AttentionMask::build(s, MaskKind::block_causal);
  EXPECT_EQ(diag.size(), 680u);
  EXPECT_EQ(diag.nnz(), 110468u);
  EXPECT_EQ(causal.nnz(), 286434u);
  EXPECT_EQ(count(enumerate(s.block_sizes(), MaskKind::block_diagonal)), 110468u);
  EXPECT_EQ(count(enumerate(s.block_sizes(), MaskKind::block_causal)), 286434u);
  const auto r = sparsity_report(diag);
  EXPECT_NEAR(r.density, 0.2389, 1e-4);
  EXPECT_NEAR(r.density_block_causal, 0.6194, 1e-4);
  EXPECT_NEAR(r.multiplier, 2.59, 5e-3);
}

TEST(AttnMask, UnitBlocksClosedForm) {
  const std::vector<std::size_t> ones(37, 1);
  const double n = 37.0;
  EXPECT_NEAR(sparsity_report(AttentionMask(MaskKind::block_causal, ones)).density, (n + 1) / (2 * n), 1e-12);
  EXPECT_NEAR(sparsity_report(AttentionMask(MaskKind::block_diagonal, ones)).density, 1 / n, 1e-12);
}

TEST(AttnMask, SequenceLength) {
  const auto v = sequence_length(ScaleSchedule::var256());
  EXPECT_EQ(v.total, 680u);
  EXPECT_NEAR(v.ratio, 2.656, 1e-3);
  EXPECT_EQ(sequence_length(ScaleSchedule::from_sides({5})).ratio, 1.0);
  const auto t = sequence_length(ScaleSchedule::from_sides({1, 2, 4}));
  EXPECT_EQ(t.total, 21u);
  EXPECT_DOUBLE_EQ(t.ratio, 21.0 / 16.0);
}

TEST(AttnMask, ClosedFormsAndSubsetChainMatchEnumeration) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::size_t> blocks;
    std::size_t n = 0;
    const std::size_t k = 1 + rng.uniform_int(8);
    for (std::size_t b = 0; b < k; ++b) {
      const std::size_t sz = 1 + rng.uniform_int(120);
      if (n + sz > 1000) break;
      blocks.push_back(sz);
      n += sz;
    }
    const auto d = enumerate(blocks, MaskKind::block_diagonal);
    const auto c = enumerate(blocks, MaskKind::block_causal);
    std::uint64_t diag = 0, causal = 0, prefix = 0;
    for (std::size_t sz : blocks) {
      prefix += sz;
      diag += sz * sz;
      causal += sz * prefix;
    }
    const AttentionMask md(MaskKind::block_diagonal, blocks), mc(MaskKind::block_causal, blocks);
    EXPECT_EQ(md.nnz(), diag);
    EXPECT_EQ(mc.nnz(), causal);
    EXPECT_EQ(count(d), diag);
    EXPECT_EQ(count(c), causal);
    for (std::size_t q = 0; q < n; q += 7) {
      for (std::size_t key = 0; key < n; ++key) {
        ASSERT_EQ(md.allowed(q, key), d[q][key]);
        ASSERT_EQ(mc.allowed(q, key), c[q][key]);
        if (d[q][key]) ASSERT_TRUE(c[q][key]);
      }
    }
  }
}

TEST(AttnMask, SerializationRoundTrip) {
  const auto m = AttentionMask::build(ScaleSchedule::var256(), MaskKind::block_causal);
  const std::string bytes = m.to_bytes();
  EXPECT_EQ(AttentionMask::from_bytes(bytes), m);
  EXPECT_EQ(AttentionMask::from_bytes(bytes).to_bytes(), bytes);
  EXPECT_THROW(AttentionMask::from_bytes("AMSK"), FormatError);
  EXPECT_THROW(parse_mask_kind("sideways"), InvalidArgument);
}

}  // namespace
}  // namespace hmar
