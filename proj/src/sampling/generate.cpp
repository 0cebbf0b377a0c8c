#include "hmar/sampling/generate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hmar/model/transformer.hpp"
#include "hmar/msvq/multiscale.hpp"
#include "hmar/sampling/filter.hpp"

namespace hmar {

SampleSchedule SampleSchedule::defaults(std::size_t scales) {
  SampleSchedule s;
  s.steps.assign(scales, 0);
  for (std::size_t k = 1; k < std::min<std::size_t>(scales, 5); ++k) s.steps[k] = 1;
  return s;
}

std::size_t SampleSchedule::effective_steps(std::size_t k, std::size_t n) const {
  const std::size_t m = k < steps.size() ? steps[k] : 0;
  return n == 0 ? 0 : std::min(m, n - 1);
}

std::size_t SampleSchedule::invocations(const ScaleSchedule& sched) const {
  std::size_t total = sched.scales();
  for (std::size_t k = 0; k < sched.scales(); ++k) total += effective_steps(k, sched.tokens(k));
  return total;
}

std::vector<std::size_t> masking_schedule(std::size_t n, std::size_t rounds) {
  if (n == 0 || rounds >= n) {
    throw InvalidArgument("masking_schedule: " + std::to_string(rounds) + " rounds over " + std::to_string(n) +
                          " positions");
  }
  std::vector<std::size_t> out(rounds + 1);
  std::size_t prev = n;
  for (std::size_t j = 0; j <= rounds; ++j) {
    const double c = std::cos(std::numbers::pi / 2 * static_cast<double>(j + 1) / static_cast<double>(rounds + 1));
    auto want = static_cast<std::size_t>(std::max(0.0, std::ceil(static_cast<double>(n) * c - 1e-9)));
    want = std::min(want, prev - 1);
    want = std::max(want, rounds - j);
    out[j] = want;
    prev = want;
  }
  return out;
}

namespace {

struct Candidate {
  TokenId token = 0;
  double confidence = 0.0;
};

class Sampler {
 public:
  Sampler(const Checkpoint& m, const Codebook& cb, std::size_t cls, const SampleSchedule& s, std::uint64_t seed)
      : m_(m), cfg_(m.config), cb_(cb), cls_(cls), s_(s), rng_(Rng::substream(seed, "sample")) {
    if (cb.vocab() != cfg_.vocab || cb.dim() != cfg_.latent_dim) {
      throw InvalidArgument("sampler: codebook does not match the model");
    }
    if (cls > cfg_.num_classes) throw InvalidArgument("sampler: class " + std::to_string(cls) + " out of range");
    const ScaleSchedule& sc = cfg_.schedule;
    res_.tokens = TokenPyramid(sc);
    res_.finalize_count.assign(sc.total_tokens(), 0);
  }

  void require_masked_head() const {
    if (m_.phase < 2) throw InvalidState("refinement requested but the checkpoint has no trained masked head");
  }

  // Pins every position of scale k to `src`.
  void copy_scale(std::size_t k, const TokenPyramid& src) {
    std::copy(src.scale(k).begin(), src.scale(k).end(), res_.tokens.scale(k).begin());
    close_scale(k);
  }

  // Next-scale proposal for every position, then `rounds` masked-head rounds.
  void generate_scale(std::size_t k, std::size_t rounds) {
    const std::size_t n = cfg_.schedule.tokens(k);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<Candidate> cand(n);
    const Tensor<double> logits = guided(next_inputs(k, cls_), next_inputs(k, cfg_.null_class()), k);
    for (std::size_t i = 0; i < n; ++i) cand[i] = draw(logits.row(i));
    ++res_.invocations;
    const auto sched = masking_schedule(n, rounds);
    std::vector<std::size_t> pending = all;
    finalize_top(k, cand, pending, sched[0], 0);
    refine(k, cand, pending, all, std::span<const std::size_t>(sched).subspan(1));
  }

  // Edit: `positions` start masked; rounds follow masking_schedule on them.
  void regenerate(std::size_t k, std::vector<std::size_t> positions, std::size_t rounds,
                  const TokenPyramid& src) {
    std::copy(src.scale(k).begin(), src.scale(k).end(), res_.tokens.scale(k).begin());
    std::vector<Candidate> cand(cfg_.schedule.tokens(k));
    const auto sched = masking_schedule(positions.size(), rounds - 1);
    std::vector<std::size_t> remaining(sched.begin(), sched.end());
    auto pool = positions;
    refine(k, cand, positions, pool, remaining);
  }

  void close_scale(std::size_t k) {
    const ScaleSchedule& sc = cfg_.schedule;
    LatentGrid acc = k == 0 ? LatentGrid(sc.finest().h, sc.finest().w, cfg_.latent_dim) : res_.running[k - 1];
    acc += upsampled_lookup(res_.tokens.scale(k), k, cb_, sc);
    res_.running.push_back(std::move(acc));
  }

  GenerateResult finish() {
    res_.tokens.clear_mask();
    res_.grid = decode(res_.tokens, cb_, cfg_.schedule);
    return std::move(res_);
  }

  GenerateResult& result() { return res_; }

 private:
  SequenceInputs next_inputs(std::size_t k, std::size_t cls) const {
    const std::size_t first = cfg_.conditioning == Conditioning::markovian ? k : 0;
    return build_inputs_nextscale(res_.running, TokenPyramid{}, cls, cfg_, first, k);
  }

  SequenceInputs masked_inputs(std::size_t k, std::size_t cls, const std::vector<std::size_t>& masked) {
    TokenPyramid t = res_.tokens;
    t.clear_mask();
    for (std::size_t p : masked) t.mask(k)[p] = 1;
    return build_inputs_masked(t, res_.running, cls, cfg_, cb_, k, k);
  }

  // Guided logits of scale k's rows.
  Tensor<double> guided(const SequenceInputs& cond, const SequenceInputs& uncond, std::size_t k) {
    const std::size_t n = cfg_.schedule.tokens(k);
    const std::size_t row0 = cond.row_begin(k, cfg_.schedule);
    const Tensor<float> c = forward_logits(m_.params, cfg_, cond);
    ++res_.forward_passes;
    Tensor<double> out({n, cfg_.vocab});
    const bool mix = s_.guidance != 1.0 && cls_ != cfg_.null_class();
    Tensor<float> u;
    if (mix) {
      u = forward_logits(m_.params, cfg_, uncond);
      ++res_.forward_passes;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto cr = c.row(row0 + i);
      std::vector<double> cd(cr.begin(), cr.end());
      if (mix) {
        const auto ur = u.row(row0 + i);
        cd = apply_cfg(cd, std::vector<double>(ur.begin(), ur.end()), s_.guidance);
      }
      std::copy(cd.begin(), cd.end(), out.row(i).begin());
    }
    return out;
  }

  Candidate draw(std::span<const double> logits) {
    const std::vector<double> p = filter_logits(logits, s_.top_k, s_.top_p, s_.temperature);
    const std::size_t t = s_.greedy ? argmax(p) : sample_categorical(p, rng_);
    return {static_cast<TokenId>(t), p[t]};
  }

  // Keeps the `keep_masked` least confident entries of `pending` unresolved
  // and finalizes the rest. Confidence ties resolve by position.
  void finalize_top(std::size_t k, const std::vector<Candidate>& cand, std::vector<std::size_t>& pending,
                    std::size_t keep_masked, std::size_t step) {
    std::stable_sort(pending.begin(), pending.end(),
                     [&](std::size_t a, std::size_t b) { return cand[a].confidence > cand[b].confidence; });
    TraceStep tr;
    tr.scale = k;
    tr.step = step;
    const std::size_t off = cfg_.schedule.offset(k);
    const std::size_t done = pending.size() - keep_masked;
    for (std::size_t i = 0; i < done; ++i) {
      const std::size_t p = pending[i];
      res_.tokens.scale(k)[p] = cand[p].token;
      ++res_.finalize_count[off + p];
      tr.finalized.push_back(p);
    }
    pending.erase(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(done));
    std::sort(pending.begin(), pending.end());
    for (std::size_t p : pending) res_.tokens.scale(k)[p] = cand[p].token;
    for (std::size_t p : displaced_) {
      ++res_.finalize_count[off + p];
      tr.finalized.push_back(p);
    }
    displaced_.clear();
    tr.masked = last_masked_;
    res_.trace.push_back(std::move(tr));
  }

  // One masked-head round per entry of `remaining`. `pool` is the set of
  // positions eligible for re-masking when allow_remask is set.
  void refine(std::size_t k, std::vector<Candidate>& cand, std::vector<std::size_t>& pending,
              const std::vector<std::size_t>& pool, std::span<const std::size_t> remaining) {
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      if (s_.allow_remask) {
        std::vector<std::size_t> order = pool;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return cand[a].confidence < cand[b].confidence; });
        order.resize(pending.size());
        std::sort(order.begin(), order.end());
        // Positions displaced from the masked set keep their token and count
        // as finalized now.
        for (std::size_t p : pending) {
          if (!std::binary_search(order.begin(), order.end(), p)) displaced_.push_back(p);
        }
        pending = order;
      }
      last_masked_ = pending;
      const Tensor<double> logits = guided(masked_inputs(k, cls_, pending),
                                           masked_inputs(k, cfg_.null_class(), pending), k);
      for (std::size_t p : pending) cand[p] = draw(logits.row(p));
      ++res_.invocations;
      finalize_top(k, cand, pending, remaining[r], r + 1);
    }
    last_masked_.clear();
  }

  const Checkpoint& m_;
  const ModelConfig& cfg_;
  const Codebook& cb_;
  std::size_t cls_;
  const SampleSchedule& s_;
  Rng rng_;
  GenerateResult res_;
  std::vector<std::size_t> last_masked_, displaced_;
};

GenerateResult run(const Checkpoint& model, const Codebook& cb, std::size_t class_id, const SampleSchedule& schedule,
                   std::uint64_t seed, const TokenPyramid* truth, std::size_t start) {
  const ScaleSchedule& sc = model.config.schedule;
  if (truth && !(truth->schedule() == sc)) throw InvalidArgument("teacher_force: pyramid schedule mismatch");
  Sampler s(model, cb, class_id, schedule, seed);
  for (std::size_t k = start; k < sc.scales(); ++k) {
    if (schedule.effective_steps(k, sc.tokens(k)) > 0) s.require_masked_head();
  }
  for (std::size_t k = 0; k < sc.scales(); ++k) {
    if (k < start) {
      s.copy_scale(k, *truth);
    } else {
      s.generate_scale(k, schedule.effective_steps(k, sc.tokens(k)));
      s.close_scale(k);
    }
  }
  return s.finish();
}

}  // namespace

GenerateResult generate(const Checkpoint& model, const Codebook& cb, std::size_t class_id,
                        const SampleSchedule& schedule, std::uint64_t seed) {
  return run(model, cb, class_id, schedule, seed, nullptr, 0);
}

TeacherForceResult teacher_force(const Checkpoint& model, const Codebook& cb, const TokenPyramid& truth,
                                 std::size_t class_id, std::size_t start, const SampleSchedule& schedule,
                                 std::uint64_t seed) {
  const std::size_t K = model.config.schedule.scales();
  if (start < 1 || start > K + 1) {
    throw InvalidArgument("teacher_force: start scale " + std::to_string(start) + " outside [1, " +
                          std::to_string(K + 1) + "]");
  }
  TeacherForceResult r;
  r.generated = run(model, cb, class_id, schedule, seed, &truth, start - 1);
  LatentGrid diff = r.generated.grid;
  diff -= decode(truth, cb, model.config.schedule);
  r.error = diff.energy();
  return r;
}

GenerateResult edit(const Checkpoint& model, const Codebook& cb, const TokenPyramid& source,
                    const std::vector<std::uint8_t>& region, std::size_t class_id, const SampleSchedule& schedule,
                    std::uint64_t seed) {
  const ScaleSchedule& sc = model.config.schedule;
  if (!(source.schedule() == sc)) throw InvalidArgument("edit: source pyramid schedule mismatch");
  if (region.size() != sc.total_tokens()) {
    throw InvalidArgument("edit: region has " + std::to_string(region.size()) + " flags, schedule has " +
                          std::to_string(sc.total_tokens()) + " tokens");
  }
  Sampler s(model, cb, class_id, schedule, seed);
  if (std::none_of(region.begin(), region.end(), [](std::uint8_t f) { return f != 0; })) {
    for (std::size_t k = 0; k < sc.scales(); ++k) s.copy_scale(k, source);
    s.result().warnings.push_back("edit region is empty; source returned unchanged");
    return s.finish();
  }
  s.require_masked_head();
  for (std::size_t k = 0; k < sc.scales(); ++k) {
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < sc.tokens(k); ++i) {
      if (region[sc.offset(k) + i]) pos.push_back(i);
    }
    if (pos.empty()) {
      s.copy_scale(k, source);
      continue;
    }
    const std::size_t m = k < schedule.steps.size() ? schedule.steps[k] : 0;
    s.regenerate(k, pos, std::clamp<std::size_t>(m, 1, pos.size()), source);
    s.close_scale(k);
  }
  return s.finish();
}

}  // namespace hmar
