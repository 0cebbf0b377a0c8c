#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hmar/model/checkpoint.hpp"
#include "hmar/model/transformer.hpp"
#include "hmar/msvq/multiscale.hpp"
#include "hmar/numerics/grad_check.hpp"
#include "hmar/numerics/rng.hpp"
#include "hmar/numerics/softmax.hpp"

namespace hmar {
namespace {

struct Fixture {
  ModelConfig cfg;
  Codebook cb;
  EncodeResult enc;
};

Fixture make_fixture(ModelConfig cfg, std::uint64_t seed, double constant = std::nan("")) {
  Rng rng(seed);
  std::vector<double> rows(cfg.vocab * cfg.latent_dim);
  for (auto& v : rows) v = rng.normal();
  Codebook cb(cfg.vocab, cfg.latent_dim, std::move(rows));
  const Resolution f = cfg.schedule.finest();
  LatentGrid x(f.h, f.w, cfg.latent_dim);
  for (auto& v : x.values()) v = std::isnan(constant) ? rng.normal() : constant;
  EncodeResult enc = encode(x, cb, cfg.schedule);
  return {cfg, std::move(cb), std::move(enc)};
}

template <typename T>
void randomize(ParamTable<T>& p, std::uint64_t seed, double s = 0.3) {
  Rng rng(seed);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (auto& v : p.at(i).data()) v += static_cast<T>(s * rng.normal());
  }
}

ModelConfig tiny() {
  ModelConfig c;
  c.depth = 2;
  c.width = 8;
  c.heads = 2;
  c.vocab = 6;
  c.num_classes = 2;
  c.latent_dim = 2;
  c.schedule = ScaleSchedule::from_sides({1, 2, 3});
  c.tiling.tile = 3;
  return c;
}

TEST(ModelConfig, ValidationAndDerivedValues) {
  ModelConfig c = tiny();
  c.width = 10;
  c.heads = 4;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny();
  EXPECT_EQ(c.mask_kind(), MaskKind::block_diagonal);
  c.conditioning = Conditioning::full_prefix;
  EXPECT_EQ(c.mask_kind(), MaskKind::block_causal);
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  EXPECT_THROW(ModelConfig::from_text("model.bogus = 1\n"), InvalidArgument);
}

TEST(ModelConfig, ParameterCountMatchesClosedForm) {
  for (std::size_t depth : {0, 1, 2, 3}) {
    ModelConfig c = tiny();
    c.depth = depth;
    EXPECT_EQ(init_params<float>(c, 1).parameter_count(), c.parameter_count()) << depth;
  }
  ModelConfig big;
  big.depth = 2;
  big.width = 64;
  big.vocab = 64;
  EXPECT_EQ(init_params<float>(big, 1).parameter_count(), big.parameter_count());
}

TEST(Inputs, SingleScaleIsTheClassChunk) {
  ModelConfig c = tiny();
  c.schedule = ScaleSchedule::from_sides({3});
  const Fixture f = make_fixture(c, 3);
  const auto in = build_inputs_nextscale(f.enc.running, f.enc.tokens, 1, c);
  ASSERT_EQ(in.rows(), 9u);
  for (double v : in.content.data()) EXPECT_EQ(v, 0.0);
  for (std::size_t r = 0; r < 9; ++r) EXPECT_EQ(in.targets[r], static_cast<std::int32_t>(f.enc.tokens.tokens()[r]));
}

TEST(Inputs, ConditioningKindOnlyChangesTheMask) {
  ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 4);
  const auto a = build_inputs_nextscale(f.enc.running, f.enc.tokens, 0, c);
  c.conditioning = Conditioning::full_prefix;
  const auto b = build_inputs_nextscale(f.enc.running, f.enc.tokens, 0, c);
  EXPECT_EQ(a.content, b.content);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.mask.kind(), MaskKind::block_diagonal);
  EXPECT_EQ(b.mask.kind(), MaskKind::block_causal);
}

TEST(Inputs, ConstantImageGivesConstantChunkContent) {
  const ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 5, 0.7);
  const auto in = build_inputs_nextscale(f.enc.running, f.enc.tokens, 0, c);
  auto params = init_params<double>(c, 6);
  Tape<double> tape;
  const auto p = bind_params(tape, params, TrainableFn{});
  const auto& e = tape.value(embed(tape, p, c, in));
  const auto& pos = params.at("pos_emb");
  for (std::size_t k = 1; k < c.schedule.scales(); ++k) {
    const std::size_t o = c.schedule.offset(k);
    for (std::size_t i = 0; i < c.schedule.tokens(k); ++i) {
      for (std::size_t d = 0; d < c.latent_dim; ++d) EXPECT_EQ(in.content.at(o + i, d), in.content.at(o, d));
      for (std::size_t j = 0; j < c.width; ++j) {
        EXPECT_NEAR(e.at(o + i, j) - pos.at(o + i, j), e.at(o, j) - pos.at(o, j), 1e-12);
      }
    }
  }
}

TEST(Inputs, ContentFromRunningEqualsSumOfLookups) {
  const ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 7);
  for (std::size_t k = 1; k < c.schedule.scales(); ++k) {
    const LatentGrid a = conditioning_content(f.enc.running[k - 1], k, c.schedule);
    const LatentGrid b = conditioning_content(decode_prefix(f.enc.tokens, f.cb, c.schedule, k), k, c.schedule);
    EXPECT_LE(max_abs_diff<double>(a.values(), b.values()), 1e-6);
  }
}

TEST(Inputs, MaskedBuilderLimits) {
  const ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 8);
  TokenPyramid all = f.enc.tokens;
  std::fill(all.mask_flags().begin(), all.mask_flags().end(), std::uint8_t{1});
  const auto a = build_inputs_masked(all, f.enc.running, 0, c, f.cb);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    EXPECT_EQ(a.token_ids[r], -1);
    EXPECT_EQ(a.mask_ids[r], 0);
    EXPECT_EQ(a.predict[r], 1);
  }
  const auto none = build_inputs_masked(f.enc.tokens, f.enc.running, 0, c, f.cb);
  EXPECT_EQ(std::count(none.predict.begin(), none.predict.end(), 1), 0);
  EXPECT_THROW(build_inputs_nextscale(f.enc.running, f.enc.tokens, 3, c), InvalidArgument);
}

TEST(Forward, ZeroHeadsGiveUniformLogits) {
  const ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 9);
  const auto params = init_params<double>(c, 10);
  for (bool masked : {false, true}) {
    TokenPyramid t = f.enc.tokens;
    t.mask(2)[1] = 1;
    const auto in = masked ? build_inputs_masked(t, f.enc.running, 0, c, f.cb)
                           : build_inputs_nextscale(f.enc.running, f.enc.tokens, 0, c);
    const auto logits = forward_logits(params, c, in);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      EXPECT_NEAR(cross_entropy<double>(logits.row(r), in.targets[r]), std::log(6.0), 1e-12);
    }
  }
}

TEST(Forward, DepthZeroIsHeadOfNormalizedEmbedding) {
  ModelConfig c = tiny();
  c.depth = 0;
  const Fixture f = make_fixture(c, 11);
  auto params = init_params<double>(c, 12);
  randomize(params, 13);
  const auto in = build_inputs_nextscale(f.enc.running, f.enc.tokens, 1, c);
  Tape<double> t;
  const auto p = bind_params(t, params, TrainableFn{});
  const auto e = embed(t, p, c, in);
  const auto ln = ops::layernorm(t, e, p["ln_f.g"], p["ln_f.b"]);
  const auto manual = ops::add_bias(t, ops::matmul(t, ln, p["head_next.w"]), p["head_next.b"]);
  EXPECT_EQ(forward_logits(params, c, in), t.value(manual));
}

TEST(Forward, BitIdenticalAcrossRuns) {
  ModelConfig c;
  c.depth = 2;
  c.width = 64;
  c.heads = 4;
  c.vocab = 64;
  c.latent_dim = 4;
  const Fixture f = make_fixture(c, 14);
  auto params = init_params<float>(c, 15);
  randomize(params, 16, 0.05);
  const auto in = build_inputs_nextscale(f.enc.running, f.enc.tokens, 0, c);
  const auto a = forward_logits(params, c, in);
  EXPECT_EQ(a, forward_logits(params, c, in));
  EXPECT_EQ(init_params<float>(c, 15), init_params<float>(c, 15));
}

TEST(Forward, MarkovianLocalityUnderTokenPerturbation) {
  const ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 17);
  auto params = init_params<double>(c, 18);
  randomize(params, 19);
  TokenPyramid t = f.enc.tokens;
  for (std::size_t k = 0; k < 3; ++k) t.mask(k)[0] = 1;
  const auto base = forward_logits(params, c, build_inputs_masked(t, f.enc.running, 0, c, f.cb));
  TokenPyramid u = t;
  for (std::size_t i = 1; i < 4; ++i) u.scale(1)[i] = (u.scale(1)[i] + 1) % 6;
  const auto moved = forward_logits(params, c, build_inputs_masked(u, f.enc.running, 0, c, f.cb));
  for (std::size_t r = 0; r < base.rows(); ++r) {
    const bool in_scale1 = c.schedule.scale_of(r) == 1;
    for (std::size_t v = 0; v < 6; ++v) {
      if (!in_scale1) EXPECT_EQ(base.at(r, v), moved.at(r, v)) << "row " << r;
    }
  }
  EXPECT_NE(base, moved);
}

TEST(Forward, SingleScaleWindowMatchesFullSequence) {
  const ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 20);
  auto params = init_params<double>(c, 21);
  randomize(params, 22);
  const auto full = forward_logits(params, c, build_inputs_nextscale(f.enc.running, f.enc.tokens, 0, c));
  for (std::size_t k = 0; k < 3; ++k) {
    const auto one = forward_logits(params, c, build_inputs_nextscale(f.enc.running, f.enc.tokens, 0, c, k, k));
    for (std::size_t i = 0; i < c.schedule.tokens(k); ++i) {
      for (std::size_t v = 0; v < 6; ++v) EXPECT_EQ(one.at(i, v), full.at(c.schedule.offset(k) + i, v));
    }
  }
}

TEST(Forward, NonFiniteActivationReportsLayer) {
  const ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 23);
  auto params = init_params<double>(c, 24);
  params.at("blocks.1.mlp.fc2.b")[0] = std::numeric_limits<double>::infinity();
  try {
    forward_logits(params, c, build_inputs_nextscale(f.enc.running, f.enc.tokens, 0, c));
    FAIL();
  } catch (const NumericFailure& e) {
    EXPECT_EQ(e.layer(), 2);
  }
}

// Loss over both heads so every parameter family is exercised.
TEST(Forward, FullModelGradCheck) {
  const ModelConfig c = tiny();
  const Fixture f = make_fixture(c, 25);
  auto params = init_params<double>(c, 26);
  randomize(params, 27);
  TokenPyramid t = f.enc.tokens;
  t.mask(1)[0] = t.mask(1)[3] = t.mask(2)[4] = 1;
  const auto next = build_inputs_nextscale(f.enc.running, f.enc.tokens, 1, c);
  const auto masked = build_inputs_masked(t, f.enc.running, 1, c, f.cb);
  std::vector<Tensor<double>> leaves;
  for (std::size_t i = 0; i < params.size(); ++i) leaves.push_back(params.at(i));
  const auto res = grad_check(
      [&](Tape<double>& tape, std::span<const Tape<double>::Var> vars) {
        BoundParams<double> p;
        p.table = &params;
        p.vars.assign(vars.begin(), vars.end());
        const std::vector<double> w1(next.rows(), 1.0 / next.rows());
        std::vector<double> w2(masked.rows());
        for (std::size_t r = 0; r < masked.rows(); ++r) w2[r] = masked.predict[r] / 3.0;
        const auto a = ops::cross_entropy(tape, forward(tape, p, c, next), std::span<const std::int32_t>(next.targets),
                                          std::span<const double>(w1));
        const auto b = ops::cross_entropy(tape, forward(tape, p, c, masked),
                                          std::span<const std::int32_t>(masked.targets), std::span<const double>(w2));
        return ops::add(tape, a, b);
      },
      leaves, GradCheckOptions{1e-5, 8, 3});
  EXPECT_LT(res.max_rel_error, 1e-5) << params.names()[res.worst_tensor];
  EXPECT_GT(res.coords_checked, 300u);
}

TEST(Checkpoint, RoundTripAndValidation) {
  const ModelConfig c = tiny();
  Checkpoint ck{c, init_params<float>(c, 28), 1, 200, "train.steps = 200\n"};
  randomize(ck.params, 29);
  const auto path = std::filesystem::temp_directory_path() / "hmar_model_test" / "ck.hmar";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.config, c);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.step, 200u);
  EXPECT_EQ(back.run_config, ck.run_config);
  std::filesystem::remove_all(path.parent_path());

  ModelConfig wider = c;
  wider.width = 12;
  Checkpoint bad{wider, ck.params, 1, 0, ""};
  EXPECT_THROW(checkpoint_from_bytes(checkpoint_to_bytes(bad)), FormatError);
  std::string bytes = checkpoint_to_bytes(ck);
  bytes[0] = 'X';
  EXPECT_THROW(checkpoint_from_bytes(bytes), FormatError);
}

}  // namespace
}  // namespace hmar
