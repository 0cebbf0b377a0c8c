#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

#include "hmar/numerics/tensor.hpp"

namespace hmar {

class InterpolationMap;

// Reverse-mode tape over a closed set of primitives. Nodes are appended in
// evaluation order; backward() walks them in exact reverse order, so gradient
// accumulation is deterministic.
template <typename T>
class Tape {
 public:
  struct Var {
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
  };
  using BackwardFn = std::function<void(Tape&, Var out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<T> value) { return push(std::move(value), false, {}); }
  Var variable(Tensor<T> value) { return push(std::move(value), true, {}); }

  // Append an op output. `backward` runs only when the output needs a
  // gradient, i.e. when some input does.
  Var record(Tensor<T> out, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || nodes_.at(v.id).requires_grad;
    return push(std::move(out), needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient slot of `v`, allocated as zeros on first access.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool has_grad(Var v) const { return nodes_.at(v.id).grad.size() == nodes_.at(v.id).value.size(); }

  // grad(v) += g, skipped when v is a constant.
  void accumulate(Var v, std::span<const T> g) {
    if (!requires_grad(v)) return;
    auto dst = grad(v).data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  void backward(Var scalar) {
    if (value(scalar).size() != 1) throw InvalidArgument("backward: output must be a scalar");
    if (!requires_grad(scalar)) return;
    grad(scalar)[0] = T{1};
    for (std::size_t i = scalar.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && has_grad(Var{static_cast<std::uint32_t>(i)})) n.backward(*this, Var{static_cast<std::uint32_t>(i)});
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, bool rg, BackwardFn bw) {
    nodes_.push_back(Node{std::move(value), {}, rg, std::move(bw)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

namespace ops {

// a[m,k] @ b[k,n]
template <typename T>
typename Tape<T>::Var matmul(Tape<T>& tape, typename Tape<T>::Var a, typename Tape<T>::Var b);

// Elementwise a + b (identical shapes).
template <typename T>
typename Tape<T>::Var add(Tape<T>& tape, typename Tape<T>::Var a, typename Tape<T>::Var b);

// x[m,n] + bias[n] broadcast over rows.
template <typename T>
typename Tape<T>::Var add_bias(Tape<T>& tape, typename Tape<T>::Var x, typename Tape<T>::Var bias);

// Elementwise a * b.
template <typename T>
typename Tape<T>::Var mul(Tape<T>& tape, typename Tape<T>::Var a, typename Tape<T>::Var b);

template <typename T>
typename Tape<T>::Var scale(Tape<T>& tape, typename Tape<T>::Var a, T s);

// tanh-approximated GELU.
template <typename T>
typename Tape<T>::Var gelu(Tape<T>& tape, typename Tape<T>::Var x);

// Row-wise layer normalization with gain and bias over the last axis.
template <typename T>
typename Tape<T>::Var layernorm(Tape<T>& tape, typename Tape<T>::Var x, typename Tape<T>::Var gain,
                                typename Tape<T>::Var bias, T eps = T(1e-5));

// Gathers rows of table[V,w]. A negative index yields a zero row.
template <typename T>
typename Tape<T>::Var embedding(Tape<T>& tape, typename Tape<T>::Var table, std::span<const std::int64_t> indices);

// Softmax along the last axis.
template <typename T>
typename Tape<T>::Var softmax_rows(Tape<T>& tape, typename Tape<T>::Var x);

// Scalar sum_i weight_i * CE(logits_i, target_i) over rows of logits[N,V].
// Rows with zero weight are skipped entirely.
template <typename T>
typename Tape<T>::Var cross_entropy(Tape<T>& tape, typename Tape<T>::Var logits, std::span<const std::int32_t> targets,
                                    std::span<const T> weights);

// Resamples x[H*W, D] (cells row-major) through a fixed interpolation map.
template <typename T>
typename Tape<T>::Var interpolate(Tape<T>& tape, typename Tape<T>::Var x, const InterpolationMap& map);

// Sum of all elements.
template <typename T>
typename Tape<T>::Var sum(Tape<T>& tape, typename Tape<T>::Var x);

}  // namespace ops
}  // namespace hmar
