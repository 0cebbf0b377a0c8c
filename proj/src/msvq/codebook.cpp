#include "hmar/msvq/codebook.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "hmar/error.hpp"
#include "hmar/msvq/pyramid.hpp"

namespace hmar {

Codebook::Codebook(std::size_t vocab, std::size_t dim, std::vector<double> rows)
    : vocab_(vocab), dim_(dim), rows_(std::move(rows)) {
  if (rows_.size() != vocab_ * dim_) throw InvalidArgument("codebook: row data does not match V x D");
  if (dim_ == 0 && vocab_ > 0) throw InvalidArgument("codebook: zero embedding width");
  std::set<std::vector<double>> seen;
  for (std::size_t v = 0; v < vocab_; ++v) {
    auto r = row(static_cast<TokenId>(v));
    for (double x : r) {
      if (!std::isfinite(x)) throw InvalidArgument("codebook: non-finite entry in row " + std::to_string(v));
    }
    if (!seen.emplace(r.begin(), r.end()).second) {
      throw InvalidArgument("codebook: duplicate row " + std::to_string(v));
    }
  }
}

TokenId Codebook::nearest(std::span<const double> x) const {
  if (vocab_ == 0) throw InvalidArgument("quantize: empty codebook");
  if (x.size() != dim_) {
    throw InvalidArgument("quantize: vector has " + std::to_string(x.size()) + " dims, codebook has " +
                          std::to_string(dim_));
  }
  TokenId best = 0;
  double bestDist = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < vocab_; ++v) {
    const double* r = rows_.data() + v * dim_;
    double d = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) {
      const double diff = r[c] - x[c];
      d += diff * diff;
    }
    if (d < bestDist) {
      bestDist = d;
      best = static_cast<TokenId>(v);
    }
  }
  return best;
}

void TokenPyramid::validate(std::size_t vocab) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] >= vocab) {
      throw InvalidArgument("token pyramid: token " + std::to_string(tokens_[i]) + " at position " +
                            std::to_string(i) + " outside vocabulary of " + std::to_string(vocab));
    }
  }
}

}  // namespace hmar
