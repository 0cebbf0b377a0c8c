#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hmar {

using TokenId = std::uint32_t;

// V x D table of code vectors. Construction rejects duplicate or non-finite
// rows so nearest-neighbour lookup is unique away from exact ties.
class Codebook {
 public:
  Codebook() = default;
  Codebook(std::size_t vocab, std::size_t dim, std::vector<double> rows);

  std::size_t vocab() const noexcept { return vocab_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return vocab_ == 0; }
  std::span<const double> row(TokenId v) const { return std::span<const double>(rows_).subspan(v * dim_, dim_); }
  std::span<const double> rows() const noexcept { return rows_; }

  // argmin_v ||row(v) - x||_2, lowest index on ties.
  TokenId nearest(std::span<const double> x) const;

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  std::size_t vocab_ = 0, dim_ = 0;
  std::vector<double> rows_;
};

inline TokenId quantize_vector(std::span<const double> x, const Codebook& cb) { return cb.nearest(x); }

}  // namespace hmar
