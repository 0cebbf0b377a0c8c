#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hmar/model/config.hpp"
#include "hmar/numerics/tensor.hpp"

namespace hmar {

// Ordered table of named tensors. Iteration order is insertion order, which
// fixes the order of every reduction over parameters.
template <typename T>
class ParamTable {
 public:
  void add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw InvalidArgument("parameter \"" + name + "\" defined twice");
    index_[name] = tensors_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor<T>& at(const std::string& name) { return tensors_.at(lookup(name)); }
  const Tensor<T>& at(const std::string& name) const { return tensors_.at(lookup(name)); }
  Tensor<T>& at(std::size_t i) { return tensors_.at(i); }
  const Tensor<T>& at(std::size_t i) const { return tensors_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t index_of(const std::string& name) const { return lookup(name); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& t : tensors_) {
      if (!t.all_finite()) return false;
    }
    return true;
  }

  template <typename U>
  ParamTable<U> cast() const {
    ParamTable<U> out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) out.add(names_[i], tensors_[i].template cast<U>());
    return out;
  }

  // Same names and shapes, zero-filled.
  ParamTable zeros_like() const {
    ParamTable out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) out.add(names_[i], Tensor<T>(tensors_[i].shape()));
    return out;
  }

  friend bool operator==(const ParamTable& a, const ParamTable& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("no parameter named \"" + name + "\"");
    return it->second;
  }

  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

using ModelParams = ParamTable<float>;

// Names and shapes of every tensor the config requires, in table order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg);

// Weights ~ N(0, 0.02^2), layer-norm gains 1, biases 0, both heads zero.
// The refinement stack starts as a copy of the top trunk blocks.
template <typename T>
ParamTable<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

// Throws FormatError naming the first missing, extra or mis-shaped tensor.
template <typename T>
void validate_params(const ParamTable<T>& params, const ModelConfig& cfg);

// Copies the top refine_depth() trunk blocks into the refinement stack and
// the next-scale head into the masked head.
template <typename T>
void seed_refinement_from_trunk(ParamTable<T>& params, const ModelConfig& cfg);

std::string block_prefix(std::size_t layer);
std::string refine_prefix(std::size_t layer);

}  // namespace hmar
