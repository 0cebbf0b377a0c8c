#pragma once

#include <cstddef>
#include <span>

namespace hmar::linalg {

// Row-major GEMM variants. All accumulate into `c` (callers zero it first when
// a fresh product is wanted).

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c.data() + i * n;
    const T* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a.data() + i * k;
    T* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b.data() + j * k;
      T s{0};
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// c[m,n] += a[k,m]^T * b[k,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* ap = a.data() + p * m;
    const T* bp = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T api = ap[i];
      T* ci = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T s{0};
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace hmar::linalg
