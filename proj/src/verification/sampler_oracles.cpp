#include "hmar/verification/sampler_oracles.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "hmar/model/transformer.hpp"
#include "hmar/msvq/multiscale.hpp"
#include "hmar/numerics/rng.hpp"
#include "hmar/sampling/filter.hpp"
#include "hmar/sampling/region.hpp"

namespace hmar::verify {
namespace {

struct Pick {
  TokenId token = 0;
  double confidence = 0.0;
};

// Guided, filtered greedy pick for every row of scale k in `cond`/`uncond`.
std::vector<Pick> greedy_rows(const TinyModel& m, const SequenceInputs& cond, const SequenceInputs& uncond,
                              std::size_t k, std::size_t cls, const SampleSchedule& s) {
  const ModelConfig& cfg = m.ck.config;
  const Tensor<float> c = forward_logits(m.ck.params, cfg, cond);
  const bool mix = s.guidance != 1.0 && cls != cfg.null_class();
  const Tensor<float> u = mix ? forward_logits(m.ck.params, cfg, uncond) : Tensor<float>{};
  const std::size_t row0 = cond.row_begin(k, cfg.schedule);
  std::vector<Pick> out(cfg.schedule.tokens(k));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<double> l(c.row(row0 + i).begin(), c.row(row0 + i).end());
    if (mix) l = apply_cfg(l, std::vector<double>(u.row(row0 + i).begin(), u.row(row0 + i).end()), s.guidance);
    const auto p = filter_logits(l, s.top_k, s.top_p, s.temperature);
    const std::size_t t = argmax(p);
    out[i] = {static_cast<TokenId>(t), p[t]};
  }
  return out;
}

SequenceInputs next_window(const TinyModel& m, const std::vector<LatentGrid>& running, std::size_t k, std::size_t cls) {
  const ModelConfig& cfg = m.ck.config;
  const std::size_t first = cfg.conditioning == Conditioning::markovian ? k : 0;
  return build_inputs_nextscale(running, TokenPyramid{}, cls, cfg, first, k);
}

SequenceInputs masked_window(const TinyModel& m, const TokenPyramid& t, const std::vector<LatentGrid>& running,
                             std::size_t k, std::size_t cls, const std::vector<std::size_t>& masked) {
  TokenPyramid copy = t;
  copy.clear_mask();
  for (std::size_t p : masked) copy.mask(k)[p] = 1;
  return build_inputs_masked(copy, running, cls, m.ck.config, m.cb, k, k);
}

void push_running(const TinyModel& m, const TokenPyramid& t, std::size_t k, std::vector<LatentGrid>& running) {
  const ScaleSchedule& sc = m.ck.config.schedule;
  LatentGrid acc = k == 0 ? LatentGrid(sc.finest().h, sc.finest().w, m.ck.config.latent_dim) : running.back();
  acc += upsampled_lookup(t.scale(k), k, m.cb, sc);
  running.push_back(std::move(acc));
}

std::size_t most_confident(const std::vector<Pick>& picks, const std::vector<std::size_t>& pending) {
  std::size_t best = pending.front();
  for (std::size_t p : pending) {
    if (picks[p].confidence > picks[best].confidence) best = p;
  }
  return best;
}

SampleSchedule greedy_schedule(std::vector<std::size_t> steps, double guidance) {
  SampleSchedule s;
  s.steps = std::move(steps);
  s.greedy = true;
  s.guidance = guidance;
  return s;
}

void fail(CaseOutcome& out, const std::string& what) {
  out.pass = false;
  out.deviation += 1.0;
  if (out.detail.size() < 400) out.detail += what + "; ";
}

// M = 0 parallel boundary: every token is the per-position argmax of one
// forward pass over the whole sequence, built from the final pyramid.
void check_parallel(const TinyModel& m, const GenerateResult& r, std::size_t cls, const SampleSchedule& s,
                    CaseOutcome& out, bool enumerate) {
  const ModelConfig& cfg = m.ck.config;
  const ScaleSchedule& sc = cfg.schedule;
  std::vector<LatentGrid> running;
  for (std::size_t k = 0; k < sc.scales(); ++k) running.push_back(decode_prefix(r.tokens, m.cb, sc, k + 1));
  const auto cond = build_inputs_nextscale(running, r.tokens, cls, cfg);
  const auto uncond = build_inputs_nextscale(running, r.tokens, cfg.null_class(), cfg);
  const Tensor<float> c = forward_logits(m.ck.params, cfg, cond);
  const Tensor<float> u = forward_logits(m.ck.params, cfg, uncond);
  const bool mix = s.guidance != 1.0 && cls != cfg.null_class();
  for (std::size_t k = 0; k < sc.scales(); ++k) {
    std::vector<std::vector<double>> probs;
    for (std::size_t i = 0; i < sc.tokens(k); ++i) {
      const std::size_t row = sc.offset(k) + i;
      std::vector<double> l(c.row(row).begin(), c.row(row).end());
      if (mix) l = apply_cfg(l, std::vector<double>(u.row(row).begin(), u.row(row).end()), s.guidance);
      probs.push_back(filter_logits(l, s.top_k, s.top_p, s.temperature));
      if (r.tokens.scale(k)[i] != argmax(probs.back())) fail(out, fmt::format("M=0 scale {} pos {} not the joint argmax", k, i));
    }
    if (!enumerate) continue;
    // Product of marginals over all V^n assignments of this scale.
    const std::size_t n = sc.tokens(k), V = cfg.vocab;
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= V;
    double best = -1.0;
    std::size_t best_id = 0;
    for (std::size_t id = 0; id < combos; ++id) {
      double p = 1.0;
      for (std::size_t i = 0, rest = id; i < n; ++i, rest /= V) p *= probs[i][rest % V];
      if (p > best) {
        best = p;
        best_id = id;
      }
    }
    for (std::size_t i = 0, rest = best_id; i < n; ++i, rest /= V) {
      if (r.tokens.scale(k)[i] != rest % V) fail(out, fmt::format("M=0 scale {} is not the joint maximizer", k));
    }
  }
}

}  // namespace

TinyModel tiny_model(const ModelConfig& cfg, std::uint32_t phase, std::uint64_t seed, double noise) {
  cfg.validate();
  TinyModel m{Checkpoint{cfg, init_params<float>(cfg, seed), phase, 0, ""}, {}};
  Rng rng = Rng::substream(seed, "tiny-model");
  for (std::size_t i = 0; i < m.ck.params.size(); ++i) {
    for (auto& v : m.ck.params.at(i).data()) v += static_cast<float>(noise * rng.normal());
  }
  std::vector<double> rows(cfg.vocab * cfg.latent_dim);
  for (auto& v : rows) v = rng.normal();
  m.cb = Codebook(cfg.vocab, cfg.latent_dim, rows);
  return m;
}

CaseOutcome oracle_factorization(const FactorizationCase& c) {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.vocab = c.vocab;
  cfg.latent_dim = 2;
  cfg.schedule = ScaleSchedule::parse(c.schedule);
  cfg.conditioning = c.conditioning;
  cfg.tiling.tile = 4;
  const ScaleSchedule& sc = cfg.schedule;
  if (c.vocab > 4) throw InvalidArgument("oracle_factorization: vocabulary above 4");
  for (std::size_t k = 0; k < sc.scales(); ++k) {
    if (sc.tokens(k) > 4) throw InvalidArgument("oracle_factorization: scale with more than 4 tokens");
  }
  const TinyModel m = tiny_model(cfg, 2, c.seed, 0.8);
  const std::size_t cls = c.seed % cfg.num_classes;
  std::vector<std::size_t> seq(sc.scales());
  for (std::size_t k = 0; k < sc.scales(); ++k) seq[k] = sc.tokens(k) - 1;
  const SampleSchedule s = greedy_schedule(seq, c.guidance);
  CaseOutcome out{true, 0.0, ""};

  const GenerateResult r = generate(m.ck, m.cb, cls, s, c.seed);
  if (r.invocations != s.invocations(sc)) fail(out, fmt::format("invocations {} vs {}", r.invocations, s.invocations(sc)));

  // Hand-stepped replay of the sequential boundary.
  TokenPyramid t(sc);
  std::vector<LatentGrid> running;
  std::size_t trace_at = 0;
  for (std::size_t k = 0; k < sc.scales(); ++k) {
    const std::size_t n = sc.tokens(k);
    std::vector<Pick> picks = greedy_rows(m, next_window(m, running, k, cls), next_window(m, running, k, cfg.null_class()),
                                          k, cls, s);
    std::vector<std::size_t> pending(n);
    for (std::size_t i = 0; i < n; ++i) pending[i] = i;
    std::vector<std::size_t> masked;
    for (std::size_t step = 0; step < n; ++step) {
      if (step > 0) {
        masked = pending;
        const auto re = greedy_rows(m, masked_window(m, t, running, k, cls, masked),
                                    masked_window(m, t, running, k, cfg.null_class(), masked), k, cls, s);
        for (std::size_t p : pending) picks[p] = re[p];
      }
      const std::size_t chosen = most_confident(picks, pending);
      t.scale(k)[chosen] = picks[chosen].token;
      pending.erase(std::find(pending.begin(), pending.end(), chosen));
      if (trace_at >= r.trace.size()) {
        fail(out, "sampler trace is shorter than the replay");
        continue;
      }
      const TraceStep& tr = r.trace[trace_at++];
      if (tr.scale != k || tr.step != step) fail(out, fmt::format("trace step order at scale {} step {}", k, step));
      if (tr.finalized != std::vector<std::size_t>{chosen}) {
        fail(out, fmt::format("scale {} step {}: sampler finalized a different position than {}", k, step, chosen));
      }
      if (tr.masked != masked) fail(out, fmt::format("scale {} step {}: masked set differs", k, step));
    }
    for (std::size_t p : pending) t.scale(k)[p] = picks[p].token;
    push_running(m, t, k, running);
  }
  if (trace_at != r.trace.size()) fail(out, "sampler trace is longer than the replay");
  if (!std::equal(t.tokens().begin(), t.tokens().end(), r.tokens.tokens().begin())) fail(out, "final tokens differ");
  for (std::size_t k = 0; k < sc.scales(); ++k) {
    if (max_abs_diff<double>(running[k].values(), r.running[k].values()) > 1e-12) {
      fail(out, fmt::format("running reconstruction differs at scale {}", k));
    }
  }

  // Parallel boundary.
  const SampleSchedule zero = greedy_schedule(std::vector<std::size_t>(sc.scales(), 0), c.guidance);
  const GenerateResult p = generate(m.ck, m.cb, cls, zero, c.seed);
  check_parallel(m, p, cls, zero, out, true);
  if (p.invocations != sc.scales()) fail(out, "M=0 invocation count");

  // A 1x1 scale ignores its step count.
  for (std::size_t k = 0; k < sc.scales(); ++k) {
    if (sc.tokens(k) != 1) continue;
    for (std::size_t mk : {1, 3, 7}) {
      SampleSchedule alt = zero;
      alt.steps[k] = mk;
      const GenerateResult a = generate(m.ck, m.cb, cls, alt, c.seed);
      if (!(a.tokens == p.tokens) || a.invocations != p.invocations) fail(out, fmt::format("1x1 scale {} with M={}", k, mk));
    }
  }
  if (out.pass) out.detail = fmt::format("{} replayed steps", trace_at);
  return out;
}

CaseOutcome sampler_contracts(const TinyModel& m, std::uint64_t seed) {
  const ScaleSchedule& sc = m.ck.config.schedule;
  const std::size_t K = sc.scales();
  CaseOutcome out{true, 0.0, ""};
  std::vector<std::vector<std::size_t>> plans{std::vector<std::size_t>(K, 0), SampleSchedule::defaults(K).steps,
                                              std::vector<std::size_t>(K, 2), {}};
  for (std::size_t k = 0; k < K; ++k) plans.back().push_back(sc.tokens(k) - 1);
  for (std::size_t pi = 0; pi < plans.size(); ++pi) {
    SampleSchedule s;
    s.steps = plans[pi];
    std::size_t expected = K;
    for (std::size_t k = 0; k < K; ++k) expected += std::min(s.steps[k], sc.tokens(k) - 1);
    if (s.invocations(sc) != expected) fail(out, "invocations() disagrees with K + sum M_k");
    for (std::size_t cls = 0; cls <= m.ck.config.num_classes; cls += m.ck.config.num_classes) {
      const GenerateResult r = generate(m.ck, m.cb, cls, s, seed + pi);
      if (r.invocations != s.invocations(sc)) {
        fail(out, fmt::format("plan {} class {}: counted {} invocations, expected {}", pi, cls, r.invocations,
                              s.invocations(sc)));
      }
      for (std::size_t i = 0; i < r.finalize_count.size(); ++i) {
        if (r.finalize_count[i] != 1) fail(out, fmt::format("plan {} position {} finalized {} times", pi, i, r.finalize_count[i]));
      }
      if (r.tokens.any_masked()) fail(out, "output still carries [MASK] flags");
      for (std::size_t k = 0; k < K; ++k) {
        const LatentGrid d = decode_prefix(r.tokens, m.cb, sc, k + 1);
        if (max_abs_diff<double>(d.values(), r.running[k].values()) > 1e-6) fail(out, fmt::format("running drift at scale {}", k));
      }
      const GenerateResult again = generate(m.ck, m.cb, cls, s, seed + pi);
      if (!(again.tokens == r.tokens) || !(again.grid == r.grid)) fail(out, fmt::format("plan {} not deterministic", pi));
      if (pi == plans.size() - 1) {
        for (const TraceStep& tr : r.trace) {
          if (sc.tokens(tr.scale) > 1 && tr.finalized.size() != 1) {
            fail(out, fmt::format("sequential plan finalized {} tokens at scale {} step {}", tr.finalized.size(),
                                  tr.scale, tr.step));
          }
        }
      }
    }
  }
  SampleSchedule g;
  g.steps.assign(K, 0);
  g.greedy = true;
  check_parallel(m, generate(m.ck, m.cb, 0, g, seed), 0, g, out, false);
  return out;
}

TeacherForceSweep teacher_force_sweep(const TinyModel& m, const std::vector<TokenPyramid>& truth,
                                      const std::vector<std::size_t>& labels, const SampleSchedule& sched,
                                      std::uint64_t seed) {
  const std::size_t K = m.ck.config.schedule.scales();
  TeacherForceSweep out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::uint64_t s = splitmix64(seed + i);
    out.error_first += teacher_force(m.ck, m.cb, truth[i], labels[i], 1, sched, s).error;
    out.error_last += teacher_force(m.ck, m.cb, truth[i], labels[i], K, sched, s).error;
  }
  out.samples = truth.size();
  if (out.samples) {
    out.error_first /= static_cast<double>(out.samples);
    out.error_last /= static_cast<double>(out.samples);
  }
  return out;
}

CaseOutcome teacher_force_ordering(const TinyModel& m, const std::vector<TokenPyramid>& truth,
                                   const std::vector<std::size_t>& labels, const SampleSchedule& sched,
                                   std::uint64_t seed) {
  const TeacherForceSweep sw = teacher_force_sweep(m, truth, labels, sched, seed);
  CaseOutcome out{sw.error_last <= sw.error_first, std::max(0.0, sw.error_last - sw.error_first), ""};
  out.detail = fmt::format("{} samples: mean error {:.6g} from scale 1, {:.6g} from scale {}", sw.samples,
                           sw.error_first, sw.error_last, m.ck.config.schedule.scales());
  // Forcing every scale must reproduce the truth exactly.
  for (std::size_t i = 0; i < std::min<std::size_t>(truth.size(), 4); ++i) {
    const auto r = teacher_force(m.ck, m.cb, truth[i], labels[i], m.ck.config.schedule.scales() + 1, sched, seed);
    if (!(r.generated.tokens == truth[i]) || r.error != 0.0) fail(out, "start K+1 does not reproduce the truth");
  }
  return out;
}

CaseOutcome edit_pinning(const TinyModel& m, const std::vector<TokenPyramid>& sources,
                         const std::vector<std::size_t>& labels, const SampleSchedule& sched, std::uint64_t seed) {
  const ModelConfig& cfg = m.ck.config;
  const ScaleSchedule& sc = cfg.schedule;
  CaseOutcome out{true, 0.0, ""};
  std::size_t altered = 0, changed = 0, editable = 0;
  const EditRegion regions[] = {region_from_box(sc, 0, 0, 1, 0.5), region_from_box(sc, 0.25, 0.25, 0.75, 0.75, true)};
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (std::size_t ri = 0; ri < 3; ++ri) {
      const EditRegion& region = regions[ri % 2];
      const std::size_t cls = ri == 2 ? (labels[i] + 1) % cfg.num_classes : labels[i];
      const GenerateResult r = edit(m.ck, m.cb, sources[i], region, cls, sched, splitmix64(seed + 3 * i + ri));
      for (std::size_t p = 0; p < region.size(); ++p) {
        const bool same = r.tokens.tokens()[p] == sources[i].tokens()[p];
        if (!region[p] && !same) ++altered;
        if (region[p]) {
          ++editable;
          changed += !same;
        }
      }
    }
    const GenerateResult e = edit(m.ck, m.cb, sources[i], EditRegion(sc.total_tokens(), 0), labels[i], sched, seed);
    if (!(e.tokens == sources[i]) || e.invocations != 0 || e.forward_passes != 0 || e.warnings.empty()) {
      fail(out, fmt::format("empty region on sample {} is not a no-op", i));
    }
  }
  if (altered) {
    out.pass = false;
    out.detail += fmt::format("{} pinned tokens altered; ", altered);
  }
  out.deviation += static_cast<double>(altered);
  if (changed == 0 && editable > 0) fail(out, "no token inside any edit region changed");
  if (out.pass) {
    out.detail = fmt::format("{} samples x 3 edits; {} of {} editable tokens changed, 0 pinned tokens altered",
                             sources.size(), changed, editable);
  }
  return out;
}

std::vector<TokenPyramid> random_pyramids(const TinyModel& m, std::size_t count, std::uint64_t seed) {
  const ModelConfig& cfg = m.ck.config;
  std::vector<TokenPyramid> out;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::substream(seed, "pyramid", i);
    LatentGrid x(cfg.schedule.finest().h, cfg.schedule.finest().w, cfg.latent_dim);
    for (auto& v : x.values()) v = rng.normal();
    out.push_back(encode(x, m.cb, cfg.schedule).tokens);
  }
  return out;
}

}  // namespace hmar::verify
