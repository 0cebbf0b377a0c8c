#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hmar/model/config.hpp"
#include "hmar/model/inputs.hpp"
#include "hmar/model/params.hpp"
#include "hmar/numerics/tape.hpp"

namespace hmar {

// Parameter table placed on a tape; trainable tensors become variables.
template <typename T>
struct BoundParams {
  const ParamTable<T>* table = nullptr;
  std::vector<typename Tape<T>::Var> vars;
  typename Tape<T>::Var operator[](const std::string& name) const { return vars.at(table->index_of(name)); }
};

using TrainableFn = std::function<bool(const std::string& name)>;

// Next-scale phase: everything except the refinement stack, masked head and
// the token/[MASK] embeddings (unused on that path).
bool trainable_phase1(const std::string& name);
// Masked phase: refinement stack, masked head, token and [MASK] embeddings.
bool trainable_phase2(const std::string& name);

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamTable<T>& params, const TrainableFn& trainable);

// Row embeddings [n, width] for the given window.
template <typename T>
typename Tape<T>::Var embed(Tape<T>& tape, const BoundParams<T>& p, const ModelConfig& cfg, const SequenceInputs& in);

// Logits [n, V]. Next-scale inputs run the trunk and next-scale head; masked
// inputs run the lower trunk, the refinement stack and the masked head.
// Throws NumericFailure carrying the layer index on non-finite activations
// (layer 0 is the embedding, layer l + 1 the output of block l).
template <typename T>
typename Tape<T>::Var forward(Tape<T>& tape, const BoundParams<T>& p, const ModelConfig& cfg,
                              const SequenceInputs& in);

// Inference convenience: constant-bound forward returning the logits.
template <typename T>
Tensor<T> forward_logits(const ParamTable<T>& params, const ModelConfig& cfg, const SequenceInputs& in);

}  // namespace hmar
