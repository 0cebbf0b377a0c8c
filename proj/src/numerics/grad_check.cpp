#include "hmar/numerics/grad_check.hpp"

#include <cmath>

#include "hmar/numerics/rng.hpp"

namespace hmar {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor<double>>& params) {
  Tape<double> tape;
  std::vector<Tape<double>::Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.constant(p));
  const double v = tape.value(f(tape, vars))[0];
  if (!std::isfinite(v)) throw NumericFailure("grad_check: objective is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor<double>> params, const GradCheckOptions& opts) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Tape<double>::Var> vars;
    for (const auto& p : params) vars.push_back(tape.variable(p));
    const auto out = f(tape, vars);
    if (!std::isfinite(tape.value(out)[0])) throw NumericFailure("grad_check: objective is not finite");
    tape.backward(out);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      analytic.push_back(tape.has_grad(vars[i]) ? tape.grad(vars[i]) : Tensor<double>(params[i].shape()));
    }
  }

  GradCheckResult res;
  Rng rng(opts.seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    const std::size_t n = params[t].size();
    std::vector<std::size_t> coords;
    if (opts.max_coords_per_tensor == 0 || opts.max_coords_per_tensor >= n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      coords = rng.sample_without_replacement(n, opts.max_coords_per_tensor);
    }
    for (std::size_t idx : coords) {
      const double orig = params[t][idx];
      params[t][idx] = orig + opts.eps;
      const double fp = evaluate(f, params);
      params[t][idx] = orig - opts.eps;
      const double fm = evaluate(f, params);
      params[t][idx] = orig;
      const double numeric = (fp - fm) / (2.0 * opts.eps);
      const double a = analytic[t][idx];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      ++res.coords_checked;
      if (err > res.max_rel_error || res.coords_checked == 1) {
        res.max_rel_error = std::max(res.max_rel_error, err);
        res.worst_tensor = t;
        res.worst_index = idx;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

double grad_check(const std::function<Tape<double>::Var(Tape<double>&, Tape<double>::Var)>& f,
                  const Tensor<double>& params, double eps) {
  ScalarFn g = [&](Tape<double>& tape, std::span<const Tape<double>::Var> vars) { return f(tape, vars[0]); };
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check(g, {params}, opts).max_rel_error;
}

}  // namespace hmar
