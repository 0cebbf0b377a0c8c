#include "hmar/training/trainer.hpp"

#include <cmath>
#include <json.hpp>

#include "hmar/common/binary_io.hpp"
#include "hmar/model/transformer.hpp"
#include "hmar/msvq/multiscale.hpp"

namespace hmar {

std::vector<EncodedExample> encode_corpus(const Dataset& ds, const Codebook& cb, const ScaleSchedule& sched) {
  std::vector<EncodedExample> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EncodeResult e = encode(ds.grids[i], cb, sched);
    out.push_back({std::move(e.tokens), std::move(e.running), ds.labels[i]});
  }
  return out;
}

std::vector<EncodedExample> attach_running(const std::vector<TokenPyramid>& pyramids,
                                           const std::vector<std::size_t>& labels, const Codebook& cb) {
  if (pyramids.size() != labels.size()) throw InvalidArgument("attach_running: label count mismatch");
  std::vector<EncodedExample> out;
  for (std::size_t i = 0; i < pyramids.size(); ++i) {
    const ScaleSchedule& s = pyramids[i].schedule();
    EncodedExample ex{pyramids[i], {}, labels[i]};
    LatentGrid acc(s.finest().h, s.finest().w, cb.dim());
    for (std::size_t k = 0; k < s.scales(); ++k) {
      acc += upsampled_lookup(pyramids[i].scale(k), k, cb, s);
      ex.running.push_back(acc);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::size_t default_masked_steps(std::size_t phase1_steps) { return std::max<std::size_t>(1, (phase1_steps * 3 + 9) / 10); }

std::string metrics_json(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["phase"] = m.phase == TrainPhase::nextscale ? "nextscale" : "masked";
  j["total_loss"] = m.total_loss;
  j["per_scale_loss"] = m.per_scale_loss;
  j["per_scale_acc"] = m.per_scale_acc;
  j["grad_norm"] = m.grad_norm;
  j["lr"] = m.lr;
  return j.dump();
}

void ReportPool::add(const LossReport& r) {
  if (n_ == 0) {
    loss_sum_.assign(r.per_scale_loss.size(), 0.0);
    acc_sum_.assign(r.per_scale_loss.size(), 0.0);
    count_.assign(r.per_scale_loss.size(), 0);
  }
  if (r.per_scale_loss.size() != loss_sum_.size()) throw InvalidArgument("ReportPool: scale count mismatch");
  for (std::size_t k = 0; k < loss_sum_.size(); ++k) {
    loss_sum_[k] += r.per_scale_loss[k] * static_cast<double>(r.per_scale_count[k]);
    acc_sum_[k] += r.per_scale_acc[k] * static_cast<double>(r.per_scale_count[k]);
    count_[k] += r.per_scale_count[k];
  }
  total_sum_ += r.total;
  ++n_;
}

LossReport ReportPool::mean() const {
  LossReport r;
  if (n_ == 0) return r;
  r.total = total_sum_ / static_cast<double>(n_);
  r.per_scale_count = count_;
  for (std::size_t k = 0; k < count_.size(); ++k) {
    const double c = count_[k] ? static_cast<double>(count_[k]) : 1.0;
    r.per_scale_loss.push_back(loss_sum_[k] / c);
    r.per_scale_acc.push_back(acc_sum_[k] / c);
  }
  return r;
}

namespace {


SequenceInputs make_inputs(const EncodedExample& ex, std::size_t cls, const ModelConfig& cfg, const Codebook& cb,
                           TrainPhase phase, double gamma, Rng& rng) {
  if (phase == TrainPhase::nextscale) return build_inputs_nextscale(ex.running, ex.tokens, cls, cfg);
  TokenPyramid t = ex.tokens;
  const auto flags = sample_mask(cfg.schedule, gamma, rng);
  std::copy(flags.begin(), flags.end(), t.mask_flags().begin());
  return build_inputs_masked(t, ex.running, cls, cfg, cb);
}

}  // namespace

Checkpoint train(const Checkpoint& init, const std::vector<EncodedExample>& data, const Codebook& cb, const TrainConfig& tc,
                 const MetricsSink& sink) {
  const ModelConfig& cfg = init.config;
  cfg.validate();
  validate_params(init.params, cfg);
  if (tc.phase == TrainPhase::masked && init.phase < 1) {
    throw InvalidState("masked fine-tuning requires a checkpoint that completed next-scale training");
  }
  if (tc.batch == 0 || data.size() < tc.batch) {
    throw InvalidArgument("data underflow: " + std::to_string(data.size()) + " examples for batch " +
                          std::to_string(tc.batch));
  }
  if (tc.gamma > 1.0) throw InvalidArgument("train: gamma must be <= 1");

  Checkpoint ck = init;
  ck.run_config = tc.run_config;
  if (tc.phase == TrainPhase::masked && init.phase == 1) seed_refinement_from_trunk(ck.params, cfg);
  const TrainableFn trainable = tc.phase == TrainPhase::nextscale ? TrainableFn(trainable_phase1)
                                                                  : TrainableFn(trainable_phase2);
  std::vector<bool> mask;
  for (const auto& n : ck.params.names()) mask.push_back(trainable(n));
  Optimizer opt(tc.optim, ck.params, mask);
  const ScaleSchedule& sched = cfg.schedule;

  for (std::size_t step = 0; step < tc.steps; ++step) {
    Rng batch_rng = Rng::substream(tc.seed, "batch", step);
    Rng mask_rng = Rng::substream(tc.seed, "mask", step);
    const auto idx = batch_rng.sample_without_replacement(data.size(), tc.batch);
    ParamTable<float> grads = ck.params.zeros_like();
    ReportPool pool;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const EncodedExample& ex = data[idx[b]];
      const std::size_t cls = mask_rng.bernoulli(tc.class_drop) ? cfg.null_class() : ex.label;
      const double gamma = tc.gamma >= 0.0 ? tc.gamma : 1.0 - mask_rng.uniform();
      const SequenceInputs in = make_inputs(ex, cls, cfg, cb, tc.phase, gamma, mask_rng);
      Tape<float> tape;
      const BoundParams<float> p = bind_params(tape, ck.params, trainable);
      Tape<float>::Var logits;
      try {
        logits = forward(tape, p, cfg, in);
      } catch (const NumericFailure& e) {
        throw NumericFailure("step " + std::to_string(step) + ": " + e.what(), e.layer());
      }
      const auto loss = tc.phase == TrainPhase::nextscale
                            ? nextscale_objective<float>(tape, logits, in.targets, sched, tc.scheme)
                            : masked_objective<float>(tape, logits, in.targets, in.predict);
      const LossReport r = tc.phase == TrainPhase::nextscale
                               ? loss_nextscale<float>(tape.value(logits), in.targets, sched, tc.scheme)
                               : loss_masked<float>(tape.value(logits), in.targets, in.predict, sched);
      if (!std::isfinite(r.total)) throw NumericFailure("step " + std::to_string(step) + ": non-finite loss");
      pool.add(r);
      tape.backward(ops::scale(tape, loss, 1.0f / static_cast<float>(tc.batch)));
      for (std::size_t i = 0; i < ck.params.size(); ++i) {
        if (!mask[i] || !tape.has_grad(p.vars[i])) continue;
        auto dst = grads.at(i).data();
        const auto src = tape.grad(p.vars[i]).data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
    StepMetrics m;
    m.step = step;
    m.phase = tc.phase;
    const LossReport r = pool.mean();
    m.total_loss = r.total;
    m.per_scale_loss = r.per_scale_loss;
    m.per_scale_acc = r.per_scale_acc;
    m.lr = learning_rate(tc.optim, step, tc.steps);
    m.grad_norm = opt.step(ck.params, grads, step, tc.steps);
    if (!ck.params.all_finite()) throw NumericFailure("step " + std::to_string(step) + ": non-finite parameters");
    ck.step = step + 1;
    if (sink) sink(m);
    if (tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0 && step + 1 < tc.steps) {
      char name[48];
      std::snprintf(name, sizeof name, "phase%d-step%06zu.hmar", static_cast<int>(tc.phase), step + 1);
      save_checkpoint(tc.checkpoint_dir / name, ck);
    }
  }
  ck.phase = static_cast<std::uint32_t>(tc.phase);
  return ck;
}

LossReport evaluate_nextscale(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<EncodedExample>& data, const WeightingScheme& scheme) {
  ReportPool pool;
  for (const auto& ex : data) {
    const SequenceInputs in = build_inputs_nextscale(ex.running, ex.tokens, ex.label, cfg);
    pool.add(loss_nextscale<float>(forward_logits(params, cfg, in), in.targets, cfg.schedule, scheme));
  }
  return pool.mean();
}

LossReport evaluate_masked(const ModelParams& params, const ModelConfig& cfg, const std::vector<EncodedExample>& data,
                           const Codebook& cb,
                           double gamma, std::uint64_t seed) {
  ReportPool pool;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = Rng::substream(seed, "mask", i);
    const SequenceInputs in = make_inputs(data[i], data[i].label, cfg, cb, TrainPhase::masked, gamma, rng);
    pool.add(loss_masked<float>(forward_logits(params, cfg, in), in.targets, in.predict, cfg.schedule));
  }
  return pool.mean();
}

}  // namespace hmar
