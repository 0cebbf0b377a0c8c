#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <map>

#include "hmar/common/binary_io.hpp"
#include "hmar/model/transformer.hpp"
#include "hmar/msvq/kmeans.hpp"
#include "hmar/numerics/grad_check.hpp"
#include "hmar/numerics/softmax.hpp"
#include "hmar/training/trainer.hpp"

namespace hmar {
namespace {

WeightingScheme scheme(WeightingKind k) {
  WeightingScheme s;
  s.kind = k;
  return s;
}

TEST(Weighting, Examples) {
  const auto sched = ScaleSchedule::from_sides({1, 2, 3});
  const auto eq = scale_weights(scheme(WeightingKind::equal), sched);
  for (double w : eq) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
  const auto lin = scale_weights(scheme(WeightingKind::linear), sched);
  EXPECT_NEAR(lin[0], 3.0 / 6.0, 1e-15);
  EXPECT_NEAR(lin[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(lin[2], 1.0 / 6.0, 1e-15);
  const auto sq = scale_weights(scheme(WeightingKind::sqrt), sched);
  const double z = std::sqrt(3.0) + std::sqrt(2.0) + 1.0;
  EXPECT_NEAR(sq[0], std::sqrt(3.0) / z, 1e-15);
  const auto ex = scale_weights(scheme(WeightingKind::exp_decay), sched);
  EXPECT_NEAR(ex[1] / ex[0], std::exp(-0.3), 1e-14);
  const auto un = scale_weights(scheme(WeightingKind::unweighted), sched);
  EXPECT_NEAR(un[2], 9.0 / 14.0, 1e-15);
  for (double w : token_weights(scheme(WeightingKind::unweighted), sched)) EXPECT_NEAR(w, 1.0 / 14.0, 1e-15);
}

TEST(Weighting, LogNormalDensity) {
  const auto sched = ScaleSchedule::var256();
  WeightingScheme s = scheme(WeightingKind::log_normal);
  const auto w = scale_weights(s, sched);
  // Ratio of densities at k/K = 0.2 and 0.5, computed directly.
  auto pdf = [&](double x) { return std::exp(-std::pow(std::log(x) - s.mu, 2) / (2 * s.sigma * s.sigma)) / x; };
  EXPECT_NEAR(w[1] / w[4], pdf(0.2) / pdf(0.5), 1e-12);
  s.sigma = 0.0;
  EXPECT_THROW(scale_weights(s, sched), InvalidArgument);
  s.sigma = -1.0;
  EXPECT_THROW(scale_weights(s, sched), InvalidArgument);
}

TEST(Weighting, EverySchemeIsAProbabilityVector) {
  for (std::size_t K = 1; K <= 16; ++K) {
    std::vector<std::size_t> sides;
    for (std::size_t k = 1; k <= K; ++k) sides.push_back(k);
    const auto sched = ScaleSchedule::from_sides(sides);
    for (WeightingKind kind : all_weighting_kinds()) {
      const auto w = scale_weights(scheme(kind), sched);
      ASSERT_EQ(w.size(), K);
      double sum = 0.0;
      for (double v : w) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9) << weighting_name(kind) << " K=" << K;
    }
  }
  for (WeightingKind kind : all_weighting_kinds()) EXPECT_EQ(parse_weighting(weighting_name(kind)), kind);
  EXPECT_THROW(parse_weighting("cubic"), InvalidArgument);
}

TEST(Weighting, FineScaleDominanceOfTokenAverage) {
  const auto sched = ScaleSchedule::var256();
  const auto un = scale_influence(sched, scheme(WeightingKind::unweighted), 16);
  EXPECT_NEAR(un[9] / un[0], 256.0, 1e-9);
  const auto eq = scale_influence(sched, scheme(WeightingKind::equal), 16);
  EXPECT_NEAR(eq[9] / eq[0], 1.0, 1e-9);
}

Tensor<double> uniform_logits(std::size_t n, std::size_t V) { return Tensor<double>({n, V}); }

TEST(Loss, UniformLogitsGiveLogVUnderEveryScheme) {
  const auto sched = ScaleSchedule::from_sides({1, 2, 4});
  const std::vector<std::int32_t> t(21, 3);
  for (WeightingKind kind : all_weighting_kinds()) {
    const auto r = loss_nextscale(uniform_logits(21, 8), t, sched, scheme(kind));
    EXPECT_NEAR(r.total, std::log(8.0), 1e-12) << weighting_name(kind);
  }
}

TEST(Loss, PerfectFirstScaleHalvesEqualWeightedLoss) {
  const auto sched = ScaleSchedule::from_sides({1, 2});
  Tensor<double> L = uniform_logits(5, 4);
  L.at(0, 2) = 1e4;
  const std::vector<std::int32_t> t = {2, 0, 1, 2, 3};
  const auto r = loss_nextscale(L, t, sched, scheme(WeightingKind::equal));
  EXPECT_NEAR(r.total, std::log(4.0) / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.per_scale_acc[0], 1.0);
}

TEST(Loss, DecompositionSumsToTotal) {
  const auto sched = ScaleSchedule::from_sides({1, 2, 3, 4});
  Rng rng(1);
  Tensor<double> L({30, 6});
  for (auto& v : L.data()) v = rng.normal();
  std::vector<std::int32_t> t(30);
  for (auto& v : t) v = static_cast<std::int32_t>(rng.uniform_int(6));
  const auto eq = loss_nextscale(L, t, sched, scheme(WeightingKind::equal));
  double s = 0.0;
  for (double v : eq.per_scale_loss) s += v / 4.0;
  EXPECT_NEAR(s, eq.total, 1e-7);
  const auto un = loss_nextscale(L, t, sched, scheme(WeightingKind::unweighted));
  double all = 0.0;
  for (std::size_t i = 0; i < 30; ++i) all += cross_entropy<double>(L.row(i), t[i]);
  EXPECT_NEAR(un.total, all / 30.0, 1e-12);
  EXPECT_THROW(loss_nextscale(L, std::span<const std::int32_t>(t).first(29), sched, scheme(WeightingKind::equal)),
               InvalidArgument);
}

TEST(Loss, MaskedLossSupportAndLimits) {
  const auto sched = ScaleSchedule::from_sides({1, 2, 3});
  std::vector<std::uint8_t> flags(14, 0);
  flags[7] = 1;
  const std::vector<std::int32_t> t(14, 1);
  EXPECT_NEAR(loss_masked(uniform_logits(14, 5), t, flags, sched).total, std::log(5.0), 1e-12);

  Rng rng(2);
  Tensor<double> L({14, 5});
  for (auto& v : L.data()) v = rng.normal();
  flags.assign(14, 0);
  flags[2] = flags[9] = flags[13] = 1;
  const double base = loss_masked(L, t, flags, sched).total;
  Tensor<double> W = L;
  for (std::size_t r = 0; r < 14; ++r) {
    if (!flags[r]) W.at(r, 1) = -1e6;
  }
  EXPECT_EQ(loss_masked(W, t, flags, sched).total, base);

  const std::vector<std::uint8_t> all(14, 1);
  EXPECT_NEAR(loss_masked(L, t, all, sched).total,
              loss_nextscale(L, t, sched, scheme(WeightingKind::unweighted)).total, 1e-12);
  EXPECT_THROW(loss_masked(L, t, std::vector<std::uint8_t>(14, 0), sched), InvalidArgument);
}

TEST(Loss, TapeObjectivesMatchReportsAndGradients) {
  const auto sched = ScaleSchedule::from_sides({1, 2});
  Rng rng(3);
  Tensor<double> L({5, 4});
  for (auto& v : L.data()) v = rng.normal();
  const std::vector<std::int32_t> t = {1, 0, 3, 2, 2};
  const std::vector<std::uint8_t> f = {0, 1, 0, 1, 1};
  for (WeightingKind kind : all_weighting_kinds()) {
    Tape<double> tape;
    const auto x = tape.variable(L);
    const auto y = nextscale_objective<double>(tape, x, t, sched, scheme(kind));
    EXPECT_NEAR(tape.value(y)[0], loss_nextscale(L, t, sched, scheme(kind)).total, 1e-12);
    const double err = grad_check(
        [&](Tape<double>& tp, Tape<double>::Var v) { return nextscale_objective<double>(tp, v, t, sched, scheme(kind)); },
        L, 1e-6);
    EXPECT_LT(err, 1e-8);
  }
  Tape<double> tape;
  const auto y = masked_objective<double>(tape, tape.variable(L), t, f);
  EXPECT_NEAR(tape.value(y)[0], loss_masked(L, t, f, sched).total, 1e-12);
}

TEST(MaskSampling, Cardinality) {
  Rng rng(4);
  const auto s44 = ScaleSchedule::from_sides({4});
  const auto s33 = ScaleSchedule::from_sides({3});
  auto count = [](const std::vector<std::uint8_t>& f) { return std::count(f.begin(), f.end(), 1); };
  EXPECT_EQ(count(sample_mask(s44, 0.5, rng)), 8);
  EXPECT_EQ(count(sample_mask(s33, 0.5, rng)), 5);
  EXPECT_EQ(count(sample_mask(s44, 0.0, rng)), 0);
  EXPECT_EQ(count(sample_mask(s44, 1.0, rng)), 16);
  EXPECT_EQ(masked_count(10, 0.3), 3u);
  EXPECT_THROW(sample_mask(s44, 1.5, rng), InvalidArgument);
  const auto sched = ScaleSchedule::var256();
  for (int trial = 0; trial < 200; ++trial) {
    const double g = rng.uniform();
    const auto f = sample_mask(sched, g, rng);
    for (std::size_t k = 0; k < sched.scales(); ++k) {
      const auto n = std::count(f.begin() + sched.offset(k), f.begin() + sched.offset(k) + sched.tokens(k), 1);
      EXPECT_EQ(static_cast<std::size_t>(n), static_cast<std::size_t>(std::ceil(g * sched.tokens(k) - 1e-9)));
    }
  }
  Rng a(5), b(5);
  EXPECT_EQ(sample_mask(sched, 0.4, a), sample_mask(sched, 0.4, b));
}

TEST(Optimizer, Schedule) {
  OptimizerConfig c;
  EXPECT_DOUBLE_EQ(learning_rate(c, 0, 100), c.lr);
  EXPECT_NEAR(learning_rate(c, 100, 100), c.lr * c.min_lr_ratio, 1e-15);
  EXPECT_NEAR(learning_rate(c, 50, 100), c.lr * (c.min_lr_ratio + (1 - c.min_lr_ratio) / 2), 1e-15);
  c.warmup = 10;
  EXPECT_NEAR(learning_rate(c, 4, 100), c.lr * 0.5, 1e-15);
}

ModelParams two_tensors() {
  ModelParams p;
  p.add("w", Tensor<float>({1, 2}, std::vector<float>{1.0f, -2.0f}));
  p.add("b", Tensor<float>({2}, std::vector<float>{0.5f, 0.5f}));
  return p;
}

TEST(Optimizer, AdamFirstStepAndFrozenTensors) {
  ModelParams p = two_tensors();
  ParamTable<float> g = p.zeros_like();
  g.at("w")[0] = 0.3f;
  g.at("w")[1] = -0.01f;
  g.at("b")[0] = 5.0f;
  OptimizerConfig c;
  c.clip_norm = 0.0;
  c.min_lr_ratio = 1.0;
  Optimizer opt(c, p, {true, false});
  opt.step(p, g, 0, 10);
  // Bias-corrected first Adam step moves each coordinate by lr * sign(g).
  EXPECT_NEAR(p.at("w")[0], 1.0 - c.lr * c.weight_decay * 1.0 - c.lr, 1e-6);
  EXPECT_NEAR(p.at("w")[1], -2.0 + c.lr * c.weight_decay * 2.0 + c.lr, 1e-6);
  EXPECT_EQ(p.at("b")[0], 0.5f);
}

TEST(Optimizer, SgdMomentumAndClipping) {
  ModelParams p = two_tensors();
  ParamTable<float> g = p.zeros_like();
  g.at("b")[0] = 3.0f;
  g.at("b")[1] = 4.0f;
  OptimizerConfig c;
  c.kind = OptimizerKind::sgd;
  c.lr = 0.1;
  c.min_lr_ratio = 1.0;
  c.clip_norm = 1.0;
  Optimizer opt(c, p, {false, true});
  EXPECT_NEAR(opt.step(p, g, 0, 10), 5.0, 1e-12);
  EXPECT_NEAR(p.at("b")[0], 0.5 - 0.1 * 0.6, 1e-6);
  opt.step(p, g, 1, 10);
  EXPECT_NEAR(p.at("b")[0], 0.5 - 0.1 * 0.6 - 0.1 * (0.9 * 0.6 + 0.6), 1e-6);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::sgd);
  EXPECT_THROW(parse_optimizer("lion"), InvalidArgument);
}

TEST(Dataset, DeterministicShardsAndHistogram) {
  ToyCorpusOptions o;
  o.per_class = 64;
  o.seed = 7;
  const auto dir = std::filesystem::temp_directory_path() / "hmar_training_test";
  std::filesystem::remove_all(dir);
  save_dataset(dir / "a", generate_toy_corpus(o), o, 50);
  save_dataset(dir / "b", generate_toy_corpus(o), o, 50);
  for (const char* f : {"shard-000.hmds", "shard-002.hmds", "manifest.json"}) {
    EXPECT_EQ(io::read_file(dir / "a" / f), io::read_file(dir / "b" / f)) << f;
  }
  const Dataset back = load_dataset(dir / "a");
  EXPECT_EQ(back, generate_toy_corpus(o));
  EXPECT_EQ(class_histogram(back), (std::vector<std::size_t>{64, 64}));
  const auto m = nlohmann::json::parse(io::read_file(dir / "a" / "manifest.json"));
  EXPECT_EQ(m["class_histogram"], nlohmann::json({64, 64}));
  EXPECT_EQ(m["seed"], 7);
  std::string bytes = io::read_file(dir / "a" / "shard-000.hmds");
  bytes[1] = 'X';
  EXPECT_THROW(dataset_from_bytes(bytes), FormatError);
  std::filesystem::remove_all(dir);
  o.grid = 12;
  EXPECT_THROW(generate_toy_corpus(o), InvalidArgument);
  o.grid = 4;
  EXPECT_THROW(generate_toy_corpus(o), InvalidArgument);
}

TEST(Dataset, CoarseTokenSeparatesClasses) {
  ToyCorpusOptions o;
  o.per_class = 64;
  o.seed = 11;
  const Dataset ds = generate_toy_corpus(o);
  const auto sched = ScaleSchedule::powers_of_two(8);
  MultiscaleFitOptions fo;
  fo.seed = 2;
  const Codebook cb = fit_multiscale_codebook(ds.grids, sched, fo);
  const auto enc = encode_corpus(ds, cb, sched);
  // Purity: fraction of samples whose coarse token is the majority token of its class.
  std::size_t agree = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    std::map<TokenId, std::size_t> h;
    for (const auto& e : enc) {
      if (e.label == c) ++h[e.tokens.scale(0)[0]];
    }
    std::size_t best = 0;
    for (auto [t, n] : h) best = std::max(best, n);
    agree += best;
  }
  EXPECT_GT(static_cast<double>(agree) / enc.size(), 0.9);
  EXPECT_NE(enc.front().tokens.scale(0)[0], enc.back().tokens.scale(0)[0]);
}

struct Toy {
  ModelConfig cfg;
  Codebook cb;
  std::vector<EncodedExample> data;
};

const Toy& toy() {
  static const Toy t = [] {
    Toy t;
    t.cfg.schedule = ScaleSchedule::powers_of_two(8);
    t.cfg.width = 16;
    t.cfg.heads = 2;
    t.cfg.vocab = 16;
    ToyCorpusOptions o;
    o.per_class = 16;
    o.seed = 3;
    const Dataset ds = generate_toy_corpus(o);
    MultiscaleFitOptions fo;
    fo.vocab = 16;
    fo.iters = 10;
    t.cb = fit_multiscale_codebook(ds.grids, t.cfg.schedule, fo);
    t.data = encode_corpus(ds, t.cb, t.cfg.schedule);
    return t;
  }();
  return t;
}

Checkpoint fresh(const ModelConfig& cfg) { return Checkpoint{cfg, init_params<float>(cfg, 1), 0, 0, ""}; }

TEST(Trainer, FirstStepLossIsLogV) {
  const Toy& t = toy();
  TrainConfig tc;
  tc.steps = 1;
  std::vector<StepMetrics> m;
  train(fresh(t.cfg), t.data, t.cb, tc, [&](const StepMetrics& s) { m.push_back(s); });
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NEAR(m[0].total_loss, std::log(16.0), 0.05 * std::log(16.0));
  const auto j = nlohmann::json::parse(metrics_json(m[0]));
  for (const char* k : {"step", "phase", "total_loss", "per_scale_loss", "per_scale_acc"}) EXPECT_TRUE(j.contains(k));
  EXPECT_EQ(j["per_scale_acc"].size(), 4u);
}

TEST(Trainer, DeterministicAndPhaseScoped) {
  const Toy& t = toy();
  TrainConfig tc;
  tc.steps = 3;
  tc.seed = 9;
  const Checkpoint init = fresh(t.cfg);
  const Checkpoint a = train(init, t.data, t.cb, tc);
  const Checkpoint b = train(init, t.data, t.cb, tc);
  EXPECT_EQ(checkpoint_to_bytes(a), checkpoint_to_bytes(b));
  EXPECT_EQ(a.phase, 1u);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const auto& n = a.params.names()[i];
    if (trainable_phase2(n)) {
      EXPECT_EQ(a.params.at(i), init.params.at(i)) << n;
    }
  }
  EXPECT_NE(a.params.at("blocks.0.attn.wq"), init.params.at("blocks.0.attn.wq"));

  TrainConfig tm = tc;
  tm.phase = TrainPhase::masked;
  EXPECT_THROW(train(init, t.data, t.cb, tm), InvalidState);
  const Checkpoint m = train(a, t.data, t.cb, tm);
  EXPECT_EQ(m.phase, 2u);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& n = m.params.names()[i];
    if (trainable_phase1(n)) {
      EXPECT_EQ(m.params.at(i), a.params.at(i)) << n;
    }
  }
  EXPECT_NE(m.params.at("head_masked.w"), a.params.at("head_next.w"));
  EXPECT_EQ(default_masked_steps(200), 60u);
}

TEST(Trainer, Failures) {
  const Toy& t = toy();
  TrainConfig tc;
  tc.steps = 1;
  tc.batch = t.data.size() + 1;
  EXPECT_THROW(train(fresh(t.cfg), t.data, t.cb, tc), InvalidArgument);
  tc.batch = 2;
  Checkpoint bad = fresh(t.cfg);
  bad.params.at("blocks.0.mlp.fc1.b")[0] = std::nanf("");
  try {
    train(bad, t.data, t.cb, tc);
    FAIL();
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
    EXPECT_EQ(e.layer(), 1);
  }
}

TEST(Trainer, PeriodicCheckpointsAndLearning) {
  const Toy& t = toy();
  TrainConfig tc;
  tc.steps = 40;
  tc.optim.lr = 3e-3;
  tc.checkpoint_every = 20;
  tc.checkpoint_dir = std::filesystem::temp_directory_path() / "hmar_training_ck";
  std::filesystem::remove_all(tc.checkpoint_dir);
  std::vector<double> loss;
  const Checkpoint out = train(fresh(t.cfg), t.data, t.cb, tc, [&](const StepMetrics& s) { loss.push_back(s.total_loss); });
  const Checkpoint mid = load_checkpoint(tc.checkpoint_dir / "phase1-step000020.hmar");
  EXPECT_EQ(mid.step, 20u);
  EXPECT_EQ(out.step, 40u);
  std::filesystem::remove_all(tc.checkpoint_dir);
  double early = 0, late = 0;
  for (int i = 0; i < 10; ++i) {
    early += loss[i];
    late += loss[30 + i];
  }
  EXPECT_LT(late, early);
}

}  // namespace
}  // namespace hmar
