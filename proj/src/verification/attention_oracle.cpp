#include "hmar/verification/attention_oracle.hpp"

#include <cmath>

#include "hmar/msvq/schedule.hpp"
#include "hmar/numerics/rng.hpp"

namespace hmar::verify {

std::string AttentionCase::name() const {
  return schedule + "/" + std::string(mask_kind_name(kind)) + "/h" + std::to_string(heads) + "/d" +
         std::to_string(head_dim) + "/T" + std::to_string(tiling.tile) +
         (tiling.layout == TileLayout::uniform ? "u" : "b") + "/s" + std::to_string(seed);
}

template <typename T>
AttentionInputs<T> make_inputs(const AttentionCase& c) {
  const auto sched = ScaleSchedule::parse(c.schedule);
  const std::size_t N = sched.total_tokens();
  Rng rng = Rng::substream(c.seed, "attention-case");
  auto fill = [&] {
    Tensor<T> t({c.heads, N, c.head_dim});
    for (auto& v : t.data()) v = static_cast<T>(rng.normal());
    return t;
  };
  AttentionInputs<T> in;
  in.q = fill();
  in.k = fill();
  in.v = fill();
  in.mask = AttentionMask::build(sched, c.kind);
  return in;
}

template <typename T>
Deviation tiled_vs_dense(const AttentionCase& c) {
  const auto in = make_inputs<T>(c);
  const T scale = default_scale<T>(c.head_dim);
  const Tensor<double> ref = attention_dense_ref(in.q, in.k, in.v, in.mask, static_cast<double>(scale));
  const Tensor<T> out = attention_tiled(in.q, in.k, in.v, in.mask, scale, c.tiling);
  Deviation dev;
  const std::size_t N = in.mask.size();
  for (std::size_t h = 0; h < c.heads; ++h) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t e = 0; e < c.head_dim; ++e) {
        const double d = std::abs(static_cast<double>(out.at(h, i, e)) - ref.at(h, i, e));
        if (d > dev.max_abs || std::isnan(d)) dev = {std::isnan(d) ? INFINITY : d, h, i, e};
      }
    }
  }
  return dev;
}

double backward_vs_finite_differences(const AttentionCase& c, double eps) {
  auto in = make_inputs<double>(c);
  const double scale = default_scale<double>(c.head_dim);
  Rng rng = Rng::substream(c.seed, "attention-readout");
  Tensor<double> w(in.q.shape());
  for (auto& v : w.data()) v = rng.normal();
  auto objective = [&](const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v) {
    const Tensor<double> o = attention_dense_ref(q, k, v, in.mask, scale);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += w[i] * o[i];
    return s;
  };
  AttentionState<double> st;
  attention_tiled(in.q, in.k, in.v, in.mask, scale, c.tiling, &st);
  const AttentionGrads<double> g = attention_backward(st, w);
  double worst = 0.0;
  Tensor<double>* operands[3] = {&in.q, &in.k, &in.v};
  const Tensor<double>* grads[3] = {&g.dq, &g.dk, &g.dv};
  for (int t = 0; t < 3; ++t) {
    Tensor<double>& x = *operands[t];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + eps;
      const double fp = objective(in.q, in.k, in.v);
      x[i] = orig - eps;
      const double fm = objective(in.q, in.k, in.v);
      x[i] = orig;
      const double numeric = (fp - fm) / (2 * eps);
      worst = std::max(worst, std::abs((*grads[t])[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

std::vector<AttentionCase> equivalence_sweep() {
  const char* schedules[] = {"1,2", "1,2,4", "1,2,4,8", "var256"};
  const MaskKind kinds[] = {MaskKind::block_diagonal, MaskKind::block_causal, MaskKind::dense};
  const std::size_t tiles[] = {4, 16, 64, 7};
  std::vector<AttentionCase> out;
  for (std::size_t i = 0; i < 50; ++i) {
    AttentionCase c;
    c.schedule = schedules[i % 4];
    c.heads = (i / 4) % 2 ? 4 : 1;
    c.head_dim = (i / 8) % 2 ? 64 : 8;
    c.kind = kinds[i % 3];
    c.tiling.tile = tiles[(i / 3) % 4];
    c.tiling.layout = (i / 5) % 2 ? TileLayout::uniform : TileLayout::block_aligned;
    c.seed = 100 + i;
    out.push_back(c);
  }
  return out;
}

std::vector<AttentionCase> backward_cases() {
  std::vector<AttentionCase> out;
  std::uint64_t seed = 7;
  for (const char* s : {"1,2", "1,2,3"}) {
    for (MaskKind kind : {MaskKind::block_diagonal, MaskKind::block_causal, MaskKind::dense}) {
      for (TileLayout layout : {TileLayout::block_aligned, TileLayout::uniform}) {
        out.push_back(AttentionCase{s, kind, 2, 3, TilingOptions{3, layout}, seed++});
      }
    }
  }
  return out;
}

template AttentionInputs<float> make_inputs<float>(const AttentionCase&);
template AttentionInputs<double> make_inputs<double>(const AttentionCase&);
template Deviation tiled_vs_dense<float>(const AttentionCase&);
template Deviation tiled_vs_dense<double>(const AttentionCase&);

}  // namespace hmar::verify
