#include <cmath>
#include <memory>
#include <numbers>

#include "hmar/numerics/interpolate.hpp"
#include "hmar/numerics/linalg.hpp"
#include "hmar/numerics/softmax.hpp"
#include "hmar/numerics/tape.hpp"

namespace hmar::ops {
namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(r) + ", got shape " +
                          shape_string(t.shape()));
  }
}

}  // namespace

template <typename T>
typename Tape<T>::Var matmul(Tape<T>& tape, typename Tape<T>::Var a, typename Tape<T>::Var b) {
  const Tensor<T>& A = tape.value(a);
  const Tensor<T>& B = tape.value(b);
  require_rank(A, 2, "matmul");
  require_rank(B, 2, "matmul");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    throw InvalidArgument("matmul: inner dimensions differ: " + shape_string(A.shape()) + " x " +
                          shape_string(B.shape()));
  }
  Tensor<T> C({m, n});
  linalg::gemm_nn<T>(m, k, n, A.data(), B.data(), C.data());
  return tape.record(std::move(C), {a, b}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto& g = tp.grad(out);
    if (tp.requires_grad(a)) linalg::gemm_nt<T>(m, n, k, g.data(), tp.value(b).data(), tp.grad(a).data());
    if (tp.requires_grad(b)) linalg::gemm_tn<T>(k, m, n, tp.value(a).data(), g.data(), tp.grad(b).data());
  });
}

template <typename T>
typename Tape<T>::Var add(Tape<T>& tape, typename Tape<T>::Var a, typename Tape<T>::Var b) {
  const Tensor<T>& A = tape.value(a);
  const Tensor<T>& B = tape.value(b);
  if (A.shape() != B.shape()) {
    throw InvalidArgument("add: shape mismatch " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  }
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  return tape.record(std::move(C), {a, b}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto g = tp.grad(out).data();
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <typename T>
typename Tape<T>::Var add_bias(Tape<T>& tape, typename Tape<T>::Var x, typename Tape<T>::Var bias) {
  const Tensor<T>& X = tape.value(x);
  const Tensor<T>& Bv = tape.value(bias);
  if (X.empty() || Bv.size() != X.shape().back()) throw InvalidArgument("add_bias: bias length must equal last dim");
  Tensor<T> C = X;
  const std::size_t n = Bv.size();
  for (std::size_t r = 0; r < C.rows(); ++r) {
    for (std::size_t j = 0; j < n; ++j) C[r * n + j] += Bv[j];
  }
  return tape.record(std::move(C), {x, bias}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto& g = tp.grad(out);
    tp.accumulate(x, g.data());
    if (tp.requires_grad(bias)) {
      auto gb = tp.grad(bias).data();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
      }
    }
  });
}

template <typename T>
typename Tape<T>::Var mul(Tape<T>& tape, typename Tape<T>::Var a, typename Tape<T>::Var b) {
  const Tensor<T>& A = tape.value(a);
  const Tensor<T>& B = tape.value(b);
  if (A.shape() != B.shape()) throw InvalidArgument("mul: shape mismatch");
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  return tape.record(std::move(C), {a, b}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto& g = tp.grad(out);
    if (tp.requires_grad(a)) {
      auto ga = tp.grad(a).data();
      const auto& vb = tp.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tp.requires_grad(b)) {
      auto gb = tp.grad(b).data();
      const auto& va = tp.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

template <typename T>
typename Tape<T>::Var scale(Tape<T>& tape, typename Tape<T>::Var a, T s) {
  Tensor<T> C = tape.value(a);
  for (auto& v : C.data()) v *= s;
  return tape.record(std::move(C), {a}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto& g = tp.grad(out);
    auto ga = tp.grad(a).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

template <typename T>
typename Tape<T>::Var gelu(Tape<T>& tape, typename Tape<T>::Var x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  const Tensor<T>& X = tape.value(x);
  Tensor<T> Y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const T v = X[i];
    Y[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return tape.record(std::move(Y), {x}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto& g = tp.grad(out);
    const auto& xv = tp.value(x);
    auto gx = tp.grad(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xv[i];
      const T u = kC * (v + kA * v * v * v);
      const T th = std::tanh(u);
      const T du = kC * (T(1) + T(3) * kA * v * v);
      gx[i] += g[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du);
    }
  });
}

template <typename T>
typename Tape<T>::Var layernorm(Tape<T>& tape, typename Tape<T>::Var x, typename Tape<T>::Var gain,
                                typename Tape<T>::Var bias, T eps) {
  const Tensor<T>& X = tape.value(x);
  const Tensor<T>& G = tape.value(gain);
  const Tensor<T>& B = tape.value(bias);
  const std::size_t n = X.shape().back();
  if (G.size() != n || B.size() != n) throw InvalidArgument("layernorm: gain/bias length must equal last dim");
  const std::size_t rows = X.rows();
  Tensor<T> Y(X.shape());
  // Normalized activations and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(X.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.data().data() + r * n;
    T mean{0};
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<T>(n);
    T var{0};
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(n);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (xr[j] - mean) * rs;
      (*xhat)[r * n + j] = h;
      Y[r * n + j] = h * G[j] + B[j];
    }
  }
  return tape.record(std::move(Y), {x, gain, bias}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto& g = tp.grad(out);
    const auto& gv = tp.value(gain);
    if (tp.requires_grad(gain) || tp.requires_grad(bias)) {
      const bool wantG = tp.requires_grad(gain), wantB = tp.requires_grad(bias);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
          const T gij = g[r * n + j];
          if (wantG) tp.grad(gain)[j] += gij * (*xhat)[r * n + j];
          if (wantB) tp.grad(bias)[j] += gij;
        }
      }
    }
    if (tp.requires_grad(x)) {
      auto gx = tp.grad(x).data();
      for (std::size_t r = 0; r < rows; ++r) {
        T s1{0}, s2{0};
        for (std::size_t j = 0; j < n; ++j) {
          const T dh = g[r * n + j] * gv[j];
          s1 += dh;
          s2 += dh * (*xhat)[r * n + j];
        }
        s1 /= static_cast<T>(n);
        s2 /= static_cast<T>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const T dh = g[r * n + j] * gv[j];
          gx[r * n + j] += (*rstd)[r] * (dh - s1 - (*xhat)[r * n + j] * s2);
        }
      }
    }
  });
}

template <typename T>
typename Tape<T>::Var embedding(Tape<T>& tape, typename Tape<T>::Var table, std::span<const std::int64_t> indices) {
  const Tensor<T>& E = tape.value(table);
  require_rank(E, 2, "embedding");
  const std::size_t V = E.dim(0), w = E.dim(1);
  Tensor<T> Y({indices.size(), w});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::int64_t id = indices[r];
    if (id < 0) continue;
    if (static_cast<std::size_t>(id) >= V) {
      throw InvalidArgument("embedding: index " + std::to_string(id) + " outside table of " + std::to_string(V));
    }
    std::copy_n(E.data().data() + id * w, w, Y.data().data() + r * w);
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices.begin(), indices.end());
  return tape.record(std::move(Y), {table}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto& g = tp.grad(out);
    auto ge = tp.grad(table).data();
    for (std::size_t r = 0; r < idx->size(); ++r) {
      const std::int64_t id = (*idx)[r];
      if (id < 0) continue;
      for (std::size_t j = 0; j < w; ++j) ge[id * w + j] += g[r * w + j];
    }
  });
}

template <typename T>
typename Tape<T>::Var softmax_rows(Tape<T>& tape, typename Tape<T>::Var x) {
  const Tensor<T>& X = tape.value(x);
  const std::size_t n = X.shape().back();
  Tensor<T> Y(X.shape());
  for (std::size_t r = 0; r < X.rows(); ++r) softmax_row<T>(X.row(r), Y.row(r));
  return tape.record(std::move(Y), {x}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const auto& g = tp.grad(out);
    const auto& y = tp.value(out);
    auto gx = tp.grad(x).data();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T dotv{0};
      for (std::size_t j = 0; j < n; ++j) dotv += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dotv);
    }
  });
}

template <typename T>
typename Tape<T>::Var cross_entropy(Tape<T>& tape, typename Tape<T>::Var logits, std::span<const std::int32_t> targets,
                                    std::span<const T> weights) {
  const Tensor<T>& L = tape.value(logits);
  require_rank(L, 2, "cross_entropy");
  const std::size_t N = L.dim(0), V = L.dim(1);
  if (targets.size() != N || weights.size() != N) throw InvalidArgument("cross_entropy: targets/weights length != rows");
  auto dlogits = std::make_shared<Tensor<T>>(Shape{N, V});
  T total{0};
  for (std::size_t r = 0; r < N; ++r) {
    if (weights[r] == T{0}) continue;
    if (targets[r] < 0) throw InvalidArgument("cross_entropy: negative target");
    const T ce = hmar::cross_entropy<T>(L.row(r), static_cast<std::size_t>(targets[r]), dlogits->row(r));
    total += weights[r] * ce;
    for (T& v : dlogits->row(r)) v *= weights[r];
  }
  return tape.record(Tensor<T>({1}, std::vector<T>{total}), {logits}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const T g = tp.grad(out)[0];
    auto gl = tp.grad(logits).data();
    for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g * (*dlogits)[i];
  });
}

template <typename T>
typename Tape<T>::Var interpolate(Tape<T>& tape, typename Tape<T>::Var x, const InterpolationMap& map) {
  const Tensor<T>& X = tape.value(x);
  require_rank(X, 2, "interpolate");
  const std::size_t cells = map.src_height() * map.src_width();
  if (X.dim(0) != cells) throw InvalidArgument("interpolate: row count does not match the map's source grid");
  const std::size_t D = X.dim(1);
  Tensor<T> Y({map.dst_height() * map.dst_width(), D});
  map.apply<T>(X.data(), Y.data(), D);
  auto m = std::make_shared<InterpolationMap>(map);
  return tape.record(std::move(Y), {x}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    m->apply_transpose<T>(tp.grad(out).data(), tp.grad(x).data(), D);
  });
}

template <typename T>
typename Tape<T>::Var sum(Tape<T>& tape, typename Tape<T>::Var x) {
  T s{0};
  for (T v : tape.value(x).data()) s += v;
  return tape.record(Tensor<T>({1}, std::vector<T>{s}), {x}, [=](Tape<T>& tp, typename Tape<T>::Var out) {
    const T g = tp.grad(out)[0];
    for (T& v : tp.grad(x).data()) v += g;
  });
}

#define HMAR_INSTANTIATE_OPS(T)                                                                                   \
  template Tape<T>::Var matmul<T>(Tape<T>&, Tape<T>::Var, Tape<T>::Var);                                         \
  template Tape<T>::Var add<T>(Tape<T>&, Tape<T>::Var, Tape<T>::Var);                                            \
  template Tape<T>::Var add_bias<T>(Tape<T>&, Tape<T>::Var, Tape<T>::Var);                                       \
  template Tape<T>::Var mul<T>(Tape<T>&, Tape<T>::Var, Tape<T>::Var);                                            \
  template Tape<T>::Var scale<T>(Tape<T>&, Tape<T>::Var, T);                                                     \
  template Tape<T>::Var gelu<T>(Tape<T>&, Tape<T>::Var);                                                         \
  template Tape<T>::Var layernorm<T>(Tape<T>&, Tape<T>::Var, Tape<T>::Var, Tape<T>::Var, T);                     \
  template Tape<T>::Var embedding<T>(Tape<T>&, Tape<T>::Var, std::span<const std::int64_t>);                     \
  template Tape<T>::Var softmax_rows<T>(Tape<T>&, Tape<T>::Var);                                                 \
  template Tape<T>::Var cross_entropy<T>(Tape<T>&, Tape<T>::Var, std::span<const std::int32_t>, std::span<const T>); \
  template Tape<T>::Var interpolate<T>(Tape<T>&, Tape<T>::Var, const InterpolationMap&);                         \
  template Tape<T>::Var sum<T>(Tape<T>&, Tape<T>::Var);

HMAR_INSTANTIATE_OPS(float)
HMAR_INSTANTIATE_OPS(double)

}  // namespace hmar::ops
