#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "hmar/error.hpp"
#include "hmar/numerics/tensor.hpp"

namespace hmar {

// Max-subtracted softmax of one row. An all -inf row has no distribution.
template <typename T>
void softmax_row(std::span<const T> in, std::span<T> out) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : in) mx = std::max(mx, v);
  if (mx == -std::numeric_limits<T>::infinity()) throw InvalidArgument("softmax: row is entirely -inf");
  T sum{0};
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  const T inv = T{1} / sum;
  for (std::size_t i = 0; i < in.size(); ++i) out[i] *= inv;
}

// Softmax along `axis` of an arbitrary-rank tensor.
template <typename T>
Tensor<T> softmax_stable(const Tensor<T>& logits, std::size_t axis) {
  if (axis >= logits.rank()) throw InvalidArgument("softmax: axis out of range");
  const Shape& s = logits.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Tensor<T> out(s);
  std::vector<T> buf(n), res(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      for (std::size_t k = 0; k < n; ++k) buf[k] = logits[(o * n + k) * inner + in];
      softmax_row<T>(buf, res);
      for (std::size_t k = 0; k < n; ++k) out[(o * n + k) * inner + in] = res[k];
    }
  }
  return out;
}

// Streaming softmax state: running maximum and running sum of exponentials
// relative to that maximum. Chunks may be absorbed in any grouping.
template <typename T>
struct OnlineSoftmax {
  T max = -std::numeric_limits<T>::infinity();
  T sum{0};

  // Absorb a chunk; returns the factor by which previously accumulated
  // quantities must be rescaled.
  T absorb(std::span<const T> chunk) {
    T cmax = max;
    for (T v : chunk) cmax = std::max(cmax, v);
    if (cmax == -std::numeric_limits<T>::infinity()) return T{1};
    const T rescale = max == -std::numeric_limits<T>::infinity() ? T{0} : std::exp(max - cmax);
    T s{0};
    for (T v : chunk) s += std::exp(v - cmax);
    sum = sum * rescale + s;
    max = cmax;
    return rescale;
  }

  void merge(const OnlineSoftmax& o) {
    if (o.max == -std::numeric_limits<T>::infinity()) return;
    if (max == -std::numeric_limits<T>::infinity()) {
      *this = o;
      return;
    }
    const T m = std::max(max, o.max);
    sum = sum * std::exp(max - m) + o.sum * std::exp(o.max - m);
    max = m;
  }

  T log_sum_exp() const { return max + std::log(sum); }
};

// Softmax of one row computed by streaming over chunks of `chunk` entries.
template <typename T>
void softmax_row_online(std::span<const T> in, std::span<T> out, std::size_t chunk) {
  if (chunk == 0) throw InvalidArgument("softmax_row_online: chunk must be >= 1");
  OnlineSoftmax<T> st;
  for (std::size_t b = 0; b < in.size(); b += chunk) st.absorb(in.subspan(b, std::min(chunk, in.size() - b)));
  if (st.max == -std::numeric_limits<T>::infinity()) throw InvalidArgument("softmax: row is entirely -inf");
  const T lse = st.log_sum_exp();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i] - lse);
}

// -log softmax(logits)[target]. When `grad` is non-empty it receives
// softmax(logits) - onehot(target).
template <typename T>
T cross_entropy(std::span<const T> logits, std::size_t target, std::span<T> grad = {}) {
  if (target >= logits.size()) {
    throw InvalidArgument("cross_entropy: target " + std::to_string(target) + " outside [0, " +
                          std::to_string(logits.size()) + ")");
  }
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : logits) mx = std::max(mx, v);
  T sum{0};
  for (T v : logits) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  if (!grad.empty()) {
    for (std::size_t i = 0; i < logits.size(); ++i) grad[i] = std::exp(logits[i] - lse);
    grad[target] -= T{1};
  }
  return lse - logits[target];
}

}  // namespace hmar
