#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hmar/numerics/tape.hpp"

namespace hmar {

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates probed per tensor; 0 probes every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Builds the scalar under test on `tape` from leaf variables holding `params`.
using ScalarFn = std::function<Tape<double>::Var(Tape<double>& tape, std::span<const Tape<double>::Var> params)>;

// Compares tape gradients with central finite differences. The error at each
// coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor<double>> params, const GradCheckOptions& opts = {});

// Single-tensor convenience form returning the maximum relative error.
double grad_check(const std::function<Tape<double>::Var(Tape<double>&, Tape<double>::Var)>& f,
                  const Tensor<double>& params, double eps);

}  // namespace hmar
