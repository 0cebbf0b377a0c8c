#include "hmar/verification/oracles.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "hmar/attnmask/mask.hpp"
#include "hmar/model/transformer.hpp"
#include "hmar/msvq/kmeans.hpp"
#include "hmar/msvq/multiscale.hpp"
#include "hmar/numerics/grad_check.hpp"
#include "hmar/numerics/rng.hpp"
#include "hmar/training/loss.hpp"
#include "hmar/training/weighting.hpp"

namespace hmar::verify {
namespace {

LatentGrid gaussian_grid(std::size_t side, std::size_t d, Rng& rng) {
  LatentGrid g(side, side, d);
  for (auto& v : g.values()) v = rng.normal();
  return g;
}

Codebook gaussian_codebook(std::size_t V, std::size_t D, Rng& rng) {
  std::vector<double> rows(V * D);
  for (auto& v : rows) v = rng.normal();
  return Codebook(V, D, std::move(rows));
}

TokenId exhaustive_nearest(const Codebook& cb, std::span<const double> x) {
  TokenId best = 0;
  double best_d = INFINITY;
  for (TokenId v = 0; v < cb.vocab(); ++v) {
    double s = 0.0;
    for (std::size_t c = 0; c < cb.dim(); ++c) s += (cb.row(v)[c] - x[c]) * (cb.row(v)[c] - x[c]);
    if (s < best_d) {
      best_d = s;
      best = v;
    }
  }
  return best;
}

}  // namespace

ScaleSchedule ladder(std::size_t side) {
  std::vector<std::size_t> sides;
  for (std::size_t s = 1; s < side; s *= 2) sides.push_back(s);
  sides.push_back(side);
  return ScaleSchedule::from_sides(sides);
}

CaseOutcome msvq_roundtrip(std::size_t grids, std::uint64_t seed) {
  static constexpr std::size_t kDims[] = {1, 4, 8};
  CaseOutcome out{true, 0.0, ""};
  std::size_t bad = 0;
  for (std::size_t i = 0; i < grids; ++i) {
    Rng rng = Rng::substream(seed, "roundtrip", i);
    const std::size_t side = 4 + i % 13, d = kDims[i % 3];
    const ScaleSchedule sched = ladder(side);
    const Codebook cb = gaussian_codebook(8 + 8 * (i % 4), d, rng);
    const LatentGrid x = gaussian_grid(side, d, rng);
    const EncodeResult enc = encode(x, cb, sched);
    const LatentGrid y = decode(enc.tokens, cb, sched);
    const double dev = max_abs_diff<double>(y.values(), enc.running.back().values());
    out.deviation = std::max(out.deviation, dev);
    if (!(y == enc.running.back()) && bad++ == 0) out.detail = fmt::format("grid {} ({}x{}x{}) differs", i, side, side, d);
  }
  out.pass = bad == 0;
  if (bad) out.detail += fmt::format("; {} of {} grids not bit-identical", bad, grids);
  return out;
}

CaseOutcome quantize_brute_force(std::size_t queries, std::uint64_t seed) {
  CaseOutcome out{true, 0.0, ""};
  std::size_t mismatches = 0;
  Rng rng = Rng::substream(seed, "quantize");
  Codebook cb;
  for (std::size_t q = 0; q < queries; ++q) {
    if (q % 100 == 0) {
      const std::size_t V = 2 + rng.uniform_int(63), D = 1 + rng.uniform_int(8);
      const bool lattice = (q / 100) % 2 == 1;
      if (!lattice) {
        cb = gaussian_codebook(V, D, rng);
      } else {
        // Distinct integer rows: row v is the base-5 expansion of a distinct index.
        std::size_t space = 1;
        for (std::size_t c = 0; c < std::min<std::size_t>(D, 6); ++c) space *= 5;
        const auto ids = rng.sample_without_replacement(space, std::min(V, space));
        std::vector<double> rows;
        for (std::size_t id : ids) {
          for (std::size_t c = 0; c < D; ++c) {
            rows.push_back(static_cast<double>(id % 5) - 2.0);
            id /= 5;
          }
        }
        cb = Codebook(ids.size(), D, rows);
      }
    }
    std::vector<double> x(cb.dim());
    const bool tie_probe = q % 2 == 1 && cb.vocab() >= 2;
    if (tie_probe) {
      // Midpoint of two codes: equidistant up to rounding, often exactly.
      const auto pair = rng.sample_without_replacement(cb.vocab(), 2);
      for (std::size_t c = 0; c < cb.dim(); ++c) x[c] = 0.5 * (cb.row(pair[0])[c] + cb.row(pair[1])[c]);
    } else {
      for (auto& v : x) v = 2.0 * rng.normal();
    }
    const TokenId got = quantize_vector(x, cb), want = exhaustive_nearest(cb, x);
    if (got != want && mismatches++ == 0) out.detail = fmt::format("query {}: got {}, expected {}", q, got, want);
  }
  out.pass = mismatches == 0;
  out.deviation = static_cast<double>(mismatches);
  return out;
}

CaseOutcome residual_contraction(const ContractionCase& c) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<LatentGrid>> groups;
  for (std::size_t i = 0; i < c.grids; ++i) {
    Rng rng = Rng::substream(c.seed, "contraction", i);
    const std::size_t side = c.sides[i % c.sides.size()];
    const std::size_t d = c.dims[(i / c.sides.size()) % c.dims.size()];
    groups[{side, d}].push_back(gaussian_grid(side, d, rng));
  }
  CaseOutcome out{true, 0.0, ""};
  std::size_t failures = 0;
  for (const auto& [key, grids] : groups) {
    const ScaleSchedule sched = c.two_level ? ScaleSchedule::from_sides({1, key.first}) : ladder(key.first);
    MultiscaleFitOptions fit;
    fit.vocab = c.vocab;
    fit.seed = c.seed;
    const Codebook cb = fit_multiscale_codebook(grids, sched, fit);
    std::size_t group_fail = 0;
    for (const LatentGrid& x : grids) {
      const EncodeResult enc = encode(x, cb, sched);
      const double e0 = enc.residual_energy[0];
      bool ok = true;
      for (std::size_t k = 0; k + 1 < enc.residual_energy.size(); ++k) {
        const double rise = (enc.residual_energy[k + 1] - enc.residual_energy[k]) / std::max(e0, 1e-300);
        if (rise > 0) {
          ok = false;
          out.deviation = std::max(out.deviation, rise);
        }
      }
      if (!ok) ++group_fail;
    }
    failures += group_fail;
    if (group_fail) out.detail += fmt::format("{}{}x{}xD{}: {}/{}", out.detail.empty() ? "" : "; ", key.first, key.first,
                                              key.second, group_fail, grids.size());
  }
  out.pass = failures == 0;
  out.detail = fmt::format("{} of {} grids expand{}{}", failures, c.grids, out.detail.empty() ? "" : " (", out.detail) +
               (out.detail.empty() ? "" : ")");
  return out;
}

CaseOutcome mask_nnz(const ScaleSchedule& sched, bool expect_var256) {
  CaseOutcome out{true, 0.0, ""};
  const std::size_t N = sched.total_tokens();
  std::map<MaskKind, std::uint64_t> counted;
  for (MaskKind kind : {MaskKind::block_causal, MaskKind::block_diagonal, MaskKind::dense}) {
    const auto m = AttentionMask::build(sched, kind);
    std::uint64_t n = 0;
    for (std::size_t q = 0; q < N; ++q) {
      for (std::size_t k = 0; k < N; ++k) n += m.allowed(q, k);
    }
    counted[kind] = n;
    if (m.nnz() != n) {
      out.pass = false;
      out.deviation = std::max(out.deviation, std::abs(static_cast<double>(m.nnz()) - static_cast<double>(n)));
      out.detail += fmt::format("{}: closed form {} vs enumerated {}; ", mask_kind_name(kind), m.nnz(), n);
    }
  }
  const auto rep = sparsity_report(AttentionMask::build(sched, MaskKind::block_causal));
  const double n2 = static_cast<double>(N) * static_cast<double>(N);
  auto check = [&](const char* what, double got, double want, double tol) {
    const double d = std::abs(got - want);
    if (d > tol) {
      out.pass = false;
      out.detail += fmt::format("{}: {} vs {}; ", what, got, want);
    }
    out.deviation = std::max(out.deviation, d > tol ? d : 0.0);
  };
  check("density(block-causal)", rep.density_block_causal, counted[MaskKind::block_causal] / n2, 1e-15);
  check("density(block-diagonal)", rep.density_block_diagonal, counted[MaskKind::block_diagonal] / n2, 1e-15);
  check("multiplier", rep.multiplier,
        static_cast<double>(counted[MaskKind::block_causal]) / static_cast<double>(counted[MaskKind::block_diagonal]),
        1e-12);
  if (expect_var256) {
    check("N", static_cast<double>(N), 680, 0);
    check("nnz(block-causal)", static_cast<double>(counted[MaskKind::block_causal]), 286434, 0);
    check("nnz(block-diagonal)", static_cast<double>(counted[MaskKind::block_diagonal]), 110468, 0);
    check("density(block-causal) quoted", rep.density_block_causal, 0.6194, 1e-4);
    check("density(block-diagonal) quoted", rep.density_block_diagonal, 0.2389, 1e-4);
    check("multiplier quoted", rep.multiplier, 2.59, 5e-3);
    check("next-token ratio", sequence_length(sched).ratio, 2.656, 5e-4);
  }
  if (out.pass) {
    out.detail = fmt::format("N={} nnz causal={} diagonal={} dense={}", N, counted[MaskKind::block_causal],
                             counted[MaskKind::block_diagonal], counted[MaskKind::dense]);
  }
  return out;
}

CaseOutcome dense_attention(const AttentionCase& c, double tol) {
  const Deviation d = tiled_vs_dense<float>(c);
  CaseOutcome out{d.max_abs < tol, d.max_abs, ""};
  out.detail = fmt::format("worst head {} query {} dim {}", d.head, d.query, d.dim);
  return out;
}

CaseOutcome attention_backward(const AttentionCase& c, double tol) {
  const double e = backward_vs_finite_differences(c);
  return {e < tol, e, "max relative error vs central differences"};
}

CaseOutcome attention_single_token(std::uint64_t seed) {
  CaseOutcome out{true, 0.0, ""};
  for (MaskKind kind : {MaskKind::block_causal, MaskKind::block_diagonal, MaskKind::dense}) {
    const AttentionCase c{"1", kind, 3, 8, {}, seed};
    const auto in64 = make_inputs<double>(c);
    const auto in32 = make_inputs<float>(c);
    const auto o64 = attention_tiled(in64.q, in64.k, in64.v, in64.mask, default_scale<double>(8));
    const auto o32 = attention_tiled(in32.q, in32.k, in32.v, in32.mask, default_scale<float>(8));
    const auto ref = attention_dense_ref(in64.q, in64.k, in64.v, in64.mask, default_scale<double>(8));
    out.deviation = std::max({out.deviation, max_abs_diff<double>(o64.data(), in64.v.data()),
                              static_cast<double>(max_abs_diff<float>(o32.data(), in32.v.data())),
                              max_abs_diff<double>(ref.data(), in64.v.data())});
  }
  out.pass = out.deviation == 0.0;
  if (!out.pass) out.detail = "single-token output is not the value row";
  return out;
}

CaseOutcome attention_locality(const ScaleSchedule& sched, MaskKind kind, std::uint64_t seed) {
  const AttentionCase c{sched.to_string(), kind, 2, 8, TilingOptions{5, TileLayout::uniform}, seed};
  const auto base = make_inputs<float>(c);
  const float scale = default_scale<float>(8);
  const Tensor<float> o = attention_tiled(base.q, base.k, base.v, base.mask, scale, c.tiling);
  CaseOutcome out{true, 0.0, ""};
  Rng rng = Rng::substream(seed, "locality");
  for (std::size_t j = 0; j < sched.scales(); ++j) {
    auto in = base;
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t i = sched.offset(j); i < sched.offset(j) + sched.tokens(j); ++i) {
        for (std::size_t e = 0; e < 8; ++e) {
          in.k.at(h, i, e) += static_cast<float>(rng.normal());
          in.v.at(h, i, e) += static_cast<float>(rng.normal());
        }
      }
    }
    const Tensor<float> p = attention_tiled(in.q, in.k, in.v, in.mask, scale, c.tiling);
    for (std::size_t b = 0; b < sched.scales(); ++b) {
      const bool linked = base.mask.allowed(sched.offset(b), sched.offset(j));
      double change = 0.0;
      for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t i = sched.offset(b); i < sched.offset(b) + sched.tokens(b); ++i) {
          for (std::size_t e = 0; e < 8; ++e) change = std::max<double>(change, std::abs(p.at(h, i, e) - o.at(h, i, e)));
        }
      }
      if (!linked && change != 0.0) {
        out.pass = false;
        out.deviation = std::max(out.deviation, change);
        out.detail += fmt::format("block {} moved when block {} was perturbed; ", b, j);
      }
      if (linked && change == 0.0) {
        out.pass = false;
        out.detail += fmt::format("block {} ignored its visible block {}; ", b, j);
      }
    }
  }
  return out;
}

CaseOutcome model_grad_check(const ModelConfig& cfg, std::size_t coords_per_tensor, double tol, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "gradcheck");
  const Codebook cb = gaussian_codebook(cfg.vocab, cfg.latent_dim, rng);
  const Resolution f = cfg.schedule.finest();
  const EncodeResult enc = encode(gaussian_grid(f.h, cfg.latent_dim, rng), cb, cfg.schedule);
  auto params = init_params<double>(cfg, seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto& v : params.at(i).data()) v += 0.3 * rng.normal();
  }
  TokenPyramid masked_tokens = enc.tokens;
  Rng mrng = Rng::substream(seed, "gradcheck-mask");
  const auto flags = sample_mask(cfg.schedule, 0.5, mrng);
  std::copy(flags.begin(), flags.end(), masked_tokens.mask_flags().begin());
  const auto next = build_inputs_nextscale(enc.running, enc.tokens, 1 % (cfg.num_classes + 1), cfg);
  const auto masked = build_inputs_masked(masked_tokens, enc.running, 0, cfg, cb);
  const auto w1 = token_weights(WeightingScheme{WeightingKind::log_normal}, cfg.schedule);
  std::size_t flagged = 0;
  for (auto p : masked.predict) flagged += p;
  std::vector<double> w2(masked.rows());
  for (std::size_t r = 0; r < masked.rows(); ++r) w2[r] = masked.predict[r] / static_cast<double>(std::max<std::size_t>(flagged, 1));
  std::vector<Tensor<double>> leaves;
  for (std::size_t i = 0; i < params.size(); ++i) leaves.push_back(params.at(i));
  const auto res = grad_check(
      [&](Tape<double>& tape, std::span<const Tape<double>::Var> vars) {
        BoundParams<double> p;
        p.table = &params;
        p.vars.assign(vars.begin(), vars.end());
        const auto a = ops::cross_entropy(tape, forward(tape, p, cfg, next), std::span<const std::int32_t>(next.targets),
                                          std::span<const double>(w1));
        const auto b = ops::cross_entropy(tape, forward(tape, p, cfg, masked),
                                          std::span<const std::int32_t>(masked.targets), std::span<const double>(w2));
        return ops::add(tape, a, b);
      },
      leaves, GradCheckOptions{1e-5, coords_per_tensor, seed});
  CaseOutcome out{res.max_rel_error < tol, res.max_rel_error, ""};
  out.detail = fmt::format("{} coords over {} tensors; worst {}[{}] analytic {:.6e} numeric {:.6e}", res.coords_checked,
                           params.size(), params.names()[res.worst_tensor], res.worst_index, res.analytic, res.numeric);
  return out;
}

CaseOutcome weighting_constraints(std::size_t max_scales, double tol) {
  CaseOutcome out{true, 0.0, ""};
  for (WeightingKind kind : all_weighting_kinds()) {
    for (std::size_t K = 1; K <= max_scales; ++K) {
      std::vector<std::size_t> sides(K);
      for (std::size_t k = 0; k < K; ++k) sides[k] = k + 1;
      const auto w = scale_weights(WeightingScheme{kind}, ScaleSchedule::from_sides(sides));
      double sum = 0.0;
      for (double v : w) {
        sum += v;
        if (!(v >= 0.0 && v <= 1.0)) {
          out.pass = false;
          out.detail += fmt::format("{} K={}: weight {} outside [0,1]; ", weighting_name(kind), K, v);
        }
      }
      const double d = std::abs(sum - 1.0);
      out.deviation = std::max(out.deviation, d);
      if (d > tol) {
        out.pass = false;
        out.detail += fmt::format("{} K={}: sum {}; ", weighting_name(kind), K, sum);
      }
    }
  }
  return out;
}

CaseOutcome fine_scale_dominance(const ScaleSchedule& sched, double expected_ratio, double tol) {
  const auto infl = scale_influence(sched, WeightingScheme{WeightingKind::unweighted}, 32);
  const double ratio = infl.back() / infl.front();
  const double d = std::abs(ratio - expected_ratio) / expected_ratio;
  return {d <= tol, d, fmt::format("finest/coarsest influence {:.6f}, expected {}", ratio, expected_ratio)};
}

CaseOutcome mask_cardinality(std::size_t trials, std::uint64_t seed) {
  CaseOutcome out{true, 0.0, ""};
  Rng rng = Rng::substream(seed, "mask");
  const ScaleSchedule schedules[] = {ScaleSchedule::toy(), ScaleSchedule::var256(), ScaleSchedule::parse("1x1,2x3,3x5")};
  for (std::size_t t = 0; t < trials; ++t) {
    const ScaleSchedule& s = schedules[t % 3];
    const double gamma = t % 7 == 0 ? static_cast<double>(t % 2) : rng.uniform();
    const auto flags = sample_mask(s, gamma, rng);
    for (std::size_t k = 0; k < s.scales(); ++k) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < s.tokens(k); ++i) n += flags[s.offset(k) + i];
      const std::size_t want = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(s.tokens(k)) - 1e-9));
      if (n != std::min(want, s.tokens(k))) {
        out.pass = false;
        out.deviation = std::max(out.deviation, std::abs(static_cast<double>(n) - static_cast<double>(want)));
        if (out.detail.empty()) out.detail = fmt::format("trial {} scale {}: {} flagged, expected {}", t, k, n, want);
      }
    }
  }
  return out;
}

}  // namespace hmar::verify
