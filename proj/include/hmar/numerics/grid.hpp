#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hmar/error.hpp"

namespace hmar {

// H x W grid of D-dimensional continuous vectors, stored row-major with the
// channel index fastest.
class LatentGrid {
 public:
  LatentGrid() = default;
  LatentGrid(std::size_t h, std::size_t w, std::size_t d, double fill = 0.0)
      : h_(h), w_(w), d_(d), values_(h * w * d, fill) {}
  LatentGrid(std::size_t h, std::size_t w, std::size_t d, std::vector<double> values)
      : h_(h), w_(w), d_(d), values_(std::move(values)) {
    if (values_.size() != h_ * w_ * d_) throw InvalidArgument("LatentGrid: value count does not match shape");
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t channels() const noexcept { return d_; }
  std::size_t cells() const noexcept { return h_ * w_; }
  bool empty() const noexcept { return values_.empty(); }

  double& at(std::size_t i, std::size_t j, std::size_t c) noexcept { return values_[(i * w_ + j) * d_ + c]; }
  double at(std::size_t i, std::size_t j, std::size_t c) const noexcept { return values_[(i * w_ + j) * d_ + c]; }

  std::span<double> cell(std::size_t flat) noexcept { return std::span<double>(values_).subspan(flat * d_, d_); }
  std::span<const double> cell(std::size_t flat) const noexcept {
    return std::span<const double>(values_).subspan(flat * d_, d_);
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double energy() const noexcept {
    double e = 0.0;
    for (double v : values_) e += v * v;
    return e;
  }

  LatentGrid& operator+=(const LatentGrid& o) {
    check_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  LatentGrid& operator-=(const LatentGrid& o) {
    check_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }

  friend bool operator==(const LatentGrid&, const LatentGrid&) = default;

 private:
  void check_same(const LatentGrid& o) const {
    if (o.h_ != h_ || o.w_ != w_ || o.d_ != d_) throw InvalidArgument("LatentGrid: shape mismatch");
  }

  std::size_t h_ = 0, w_ = 0, d_ = 0;
  std::vector<double> values_;
};

}  // namespace hmar
