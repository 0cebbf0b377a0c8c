#include "hmar/numerics/interpolate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hmar/error.hpp"

namespace hmar {
namespace {

using Taps1D = std::vector<std::vector<InterpolationMap::Tap>>;

// Overlap of [i*s, (i+1)*s) with [j*t, (j+1)*t) measured in units of 1/(s*t)
// of a source cell, so every weight is an exact ratio of integers.
Taps1D area_taps(std::size_t s, std::size_t t) {
  Taps1D out(t);
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t lo = i * s, hi = (i + 1) * s;
    for (std::size_t j = lo / t; j < s && j * t < hi; ++j) {
      const std::size_t a = std::max(lo, j * t), b = std::min(hi, (j + 1) * t);
      if (b > a) out[i].push_back({j, static_cast<double>(b - a) / static_cast<double>(s)});
    }
  }
  return out;
}

Taps1D bilinear_taps(std::size_t s, std::size_t t) {
  Taps1D out(t);
  const double ratio = static_cast<double>(s) / static_cast<double>(t);
  for (std::size_t i = 0; i < t; ++i) {
    double c = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    c = std::clamp(c, 0.0, static_cast<double>(s - 1));
    const auto j0 = static_cast<std::size_t>(std::floor(c));
    const std::size_t j1 = std::min(j0 + 1, s - 1);
    const double frac = c - static_cast<double>(j0);
    if (j0 == j1 || frac == 0.0) {
      out[i].push_back({j0, 1.0});
    } else {
      out[i].push_back({j0, 1.0 - frac});
      out[i].push_back({j1, frac});
    }
  }
  return out;
}

Taps1D axis_taps(std::size_t s, std::size_t t, InterpMode mode) {
  if (s == t) {
    Taps1D out(t);
    for (std::size_t i = 0; i < t; ++i) out[i].push_back({i, 1.0});
    return out;
  }
  switch (mode) {
    case InterpMode::down_average:
      return area_taps(s, t);
    case InterpMode::up_bilinear:
      return bilinear_taps(s, t);
    case InterpMode::automatic:
      break;
  }
  return t < s ? area_taps(s, t) : bilinear_taps(s, t);
}

}  // namespace

InterpolationMap::InterpolationMap(std::size_t srcH, std::size_t srcW, std::size_t dstH, std::size_t dstW,
                                   InterpMode mode)
    : srcH_(srcH), srcW_(srcW), dstH_(dstH), dstW_(dstW) {
  if (dstH == 0 || dstW == 0) throw InvalidArgument("interpolate: target dimensions must be >= 1");
  if (srcH == 0 || srcW == 0) throw InvalidArgument("interpolate: source grid is empty");
  const Taps1D ty = axis_taps(srcH, dstH, mode);
  const Taps1D tx = axis_taps(srcW, dstW, mode);
  offsets_.reserve(dstH * dstW + 1);
  offsets_.push_back(0);
  for (std::size_t i = 0; i < dstH; ++i) {
    for (std::size_t j = 0; j < dstW; ++j) {
      for (const Tap& a : ty[i]) {
        for (const Tap& b : tx[j]) taps_.push_back({a.src * srcW + b.src, a.weight * b.weight});
      }
      offsets_.push_back(taps_.size());
    }
  }
}

LatentGrid interpolate(const LatentGrid& src, std::size_t targetH, std::size_t targetW, InterpMode mode) {
  if (src.empty()) throw InvalidArgument("interpolate: source grid is empty");
  const InterpolationMap map(src.height(), src.width(), targetH, targetW, mode);
  LatentGrid out(targetH, targetW, src.channels());
  map.apply<double>(src.values(), out.values(), src.channels());
  return out;
}

}  // namespace hmar
