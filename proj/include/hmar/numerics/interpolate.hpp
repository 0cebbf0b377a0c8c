#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hmar/numerics/grid.hpp"

namespace hmar {

enum class InterpMode {
  // Per axis: area average when shrinking, bilinear when growing, identity otherwise.
  automatic,
  down_average,
  up_bilinear,
};

// Sparse linear map from a srcH x srcW grid to a dstH x dstW grid, applied
// independently per channel. Each output cell's weights sum to one.
class InterpolationMap {
 public:
  struct Tap {
    std::size_t src;
    double weight;
  };

  InterpolationMap(std::size_t srcH, std::size_t srcW, std::size_t dstH, std::size_t dstW,
                   InterpMode mode = InterpMode::automatic);

  std::size_t src_height() const noexcept { return srcH_; }
  std::size_t src_width() const noexcept { return srcW_; }
  std::size_t dst_height() const noexcept { return dstH_; }
  std::size_t dst_width() const noexcept { return dstW_; }
  std::span<const Tap> taps(std::size_t dstCell) const noexcept {
    return std::span<const Tap>(taps_).subspan(offsets_[dstCell], offsets_[dstCell + 1] - offsets_[dstCell]);
  }

  // dst = M * src, channel-interleaved layout [cell][channel]. The weighted
  // sum is anchored on the first tap so constant fields map to themselves
  // exactly.
  template <typename T>
  void apply(std::span<const T> src, std::span<T> dst, std::size_t channels) const {
    for (std::size_t o = 0; o < dstH_ * dstW_; ++o) {
      const auto t = taps(o);
      const T* anchor = src.data() + t[0].src * channels;
      T* out = dst.data() + o * channels;
      for (std::size_t c = 0; c < channels; ++c) {
        T acc{0};
        for (const Tap& tap : t) acc += static_cast<T>(tap.weight) * (src[tap.src * channels + c] - anchor[c]);
        out[c] = anchor[c] + acc;
      }
    }
  }

  // srcGrad += M^T * dstGrad
  template <typename T>
  void apply_transpose(std::span<const T> dstGrad, std::span<T> srcGrad, std::size_t channels) const {
    for (std::size_t o = 0; o < dstH_ * dstW_; ++o) {
      for (const Tap& tap : taps(o)) {
        for (std::size_t c = 0; c < channels; ++c) {
          srcGrad[tap.src * channels + c] += static_cast<T>(tap.weight) * dstGrad[o * channels + c];
        }
      }
    }
  }

 private:
  std::size_t srcH_, srcW_, dstH_, dstW_;
  std::vector<std::size_t> offsets_;
  std::vector<Tap> taps_;
};

// Resample a latent grid. Down-sampling uses area averaging; up-sampling uses
// bilinear interpolation with the half-pixel (align-corners-false) convention.
LatentGrid interpolate(const LatentGrid& src, std::size_t targetH, std::size_t targetW,
                       InterpMode mode = InterpMode::automatic);

}  // namespace hmar
