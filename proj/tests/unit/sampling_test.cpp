#include <gtest/gtest.h>

#include <cmath>

#include "hmar/model/transformer.hpp"
#include "hmar/msvq/multiscale.hpp"
#include "hmar/numerics/rng.hpp"
#include "hmar/sampling/filter.hpp"
#include "hmar/sampling/generate.hpp"
#include "hmar/sampling/region.hpp"

namespace hmar {
namespace {

TEST(Filter, Examples) {
  const std::vector<double> l = {2.0, 1.0, 0.0};
  const auto p = filter_logits(l, 2, 1.0, 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 1), 1e-15);
  EXPECT_NEAR(p[1], 1 / (e + 1), 1e-15);
  EXPECT_EQ(p[2], 0.0);
  for (double top_p : {0.1, 0.5, 1.0}) {
    const auto a = filter_logits(std::vector<double>{0.3, 1.7, -2.0, 1.6}, 1, top_p, 0.7);
    EXPECT_EQ(a, (std::vector<double>{0, 1, 0, 0}));
  }
  const std::vector<double> r = {0.4, -1.2, 3.0, 0.0, 0.9};
  const auto id = filter_logits(r, 5, 1.0, 1.0);
  double z = 0;
  for (double v : r) z += std::exp(v);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(id[i], std::exp(r[i]) / z, 1e-15);
  // Top-p keeps the smallest prefix reaching the mass: softmax(3,2,1,0) has
  // cumulative mass 0.6439, 0.8808, ... so 0.7 keeps two entries.
  const auto tp = filter_logits(std::vector<double>{0, 1, 2, 3}, 4, 0.7, 1.0);
  EXPECT_EQ(tp[0], 0.0);
  EXPECT_EQ(tp[1], 0.0);
  EXPECT_NEAR(tp[3], e / (e + 1), 1e-15);
  EXPECT_THROW(filter_logits(r, 0, 1.0, 1.0), InvalidArgument);
  EXPECT_THROW(filter_logits(r, 2, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(filter_logits(r, 2, 1.0, 0.0), InvalidArgument);
  EXPECT_EQ(filter_logits(r, 900, 1.0, 1.0), id);
}

TEST(Filter, GuidanceAndDraws) {
  const std::vector<double> c = {1.0, 2.0}, u = {3.0, -1.0};
  EXPECT_EQ(apply_cfg(c, u, 0.0), u);
  EXPECT_EQ(apply_cfg(c, u, 1.0), c);
  EXPECT_EQ(apply_cfg(c, u, 1.5), (std::vector<double>{0.0, 3.5}));
  EXPECT_EQ(SampleSchedule{}.guidance, 1.5);
  Rng rng(1);
  std::vector<int> h(3, 0);
  for (int i = 0; i < 30000; ++i) ++h[sample_categorical(std::vector<double>{0.2, 0.0, 0.8}, rng)];
  EXPECT_EQ(h[1], 0);
  EXPECT_NEAR(h[0] / 30000.0, 0.2, 0.01);
}

TEST(Schedule, MaskingScheduleProperties) {
  for (std::size_t n = 1; n <= 40; ++n) {
    for (std::size_t rounds = 0; rounds < n; ++rounds) {
      const auto s = masking_schedule(n, rounds);
      ASSERT_EQ(s.size(), rounds + 1);
      EXPECT_EQ(s.back(), 0u);
      EXPECT_LT(s[0], n);
      for (std::size_t j = 1; j < s.size(); ++j) EXPECT_LT(s[j], s[j - 1]);
    }
    EXPECT_THROW(masking_schedule(n, n), InvalidArgument);
  }
  EXPECT_EQ(masking_schedule(4, 3), (std::vector<std::size_t>{3, 2, 1, 0}));
  EXPECT_EQ(masking_schedule(16, 1), (std::vector<std::size_t>{12, 0}));
}

TEST(Schedule, DefaultStepCount) {
  const auto s = SampleSchedule::defaults(10);
  EXPECT_EQ(s.steps, (std::vector<std::size_t>{0, 1, 1, 1, 1, 0, 0, 0, 0, 0}));
  EXPECT_EQ(s.invocations(ScaleSchedule::var256()), 14u);
  EXPECT_EQ(s.top_k, 900u);
  EXPECT_EQ(s.top_p, 0.96);
}

struct Model {
  Checkpoint ck;
  Codebook cb;
};

Model make_model(std::vector<std::size_t> sides, Conditioning cond = Conditioning::markovian, std::uint32_t phase = 2) {
  ModelConfig c;
  c.depth = 2;
  c.width = 16;
  c.heads = 2;
  c.vocab = 6;
  c.latent_dim = 2;
  c.schedule = ScaleSchedule::from_sides(sides);
  c.conditioning = cond;
  Model m{Checkpoint{c, init_params<float>(c, 3), phase, 0, ""}, {}};
  Rng rng(4);
  for (std::size_t i = 0; i < m.ck.params.size(); ++i) {
    for (auto& v : m.ck.params.at(i).data()) v += static_cast<float>(0.4 * rng.normal());
  }
  std::vector<double> rows(12);
  for (auto& v : rows) v = rng.normal();
  m.cb = Codebook(6, 2, rows);
  return m;
}

SampleSchedule steps(std::vector<std::size_t> m, bool greedy = false) {
  SampleSchedule s;
  s.steps = std::move(m);
  s.greedy = greedy;
  return s;
}

TEST(Generate, InvocationCountAndSingleFinalization) {
  const Model m = make_model({1, 2, 3, 4});
  for (const auto& ms : std::vector<std::vector<std::size_t>>{{0, 0, 0, 0}, {0, 1, 1, 1}, {0, 3, 8, 15}, {2, 2, 2, 2}}) {
    const auto s = steps(ms);
    const auto r = generate(m.ck, m.cb, 1, s, 5);
    EXPECT_EQ(r.invocations, s.invocations(m.ck.config.schedule));
    EXPECT_EQ(r.forward_passes, 2 * r.invocations);
    for (auto c : r.finalize_count) EXPECT_EQ(c, 1u);
    EXPECT_FALSE(r.tokens.any_masked());
  }
  EXPECT_EQ(steps({0, 1, 1, 1}).invocations(m.ck.config.schedule), 7u);
  SampleSchedule remask = steps({0, 3, 8, 15});
  remask.allow_remask = true;
  const auto r = generate(m.ck, m.cb, 1, remask, 5);
  EXPECT_EQ(r.invocations, remask.invocations(m.ck.config.schedule));
  for (auto c : r.finalize_count) EXPECT_GE(c, 1u);
}

TEST(Generate, ParallelBoundaryIsPerPositionArgmax) {
  for (Conditioning cond : {Conditioning::markovian, Conditioning::full_prefix}) {
    const Model m = make_model({1, 2, 3}, cond);
    SampleSchedule s = steps({0, 0, 0}, true);
    const auto r = generate(m.ck, m.cb, 0, s, 6);
    const ModelConfig& c = m.ck.config;
    // Replay: full-sequence forward from the final pyramid's prefix reconstructions.
    std::vector<LatentGrid> running;
    for (std::size_t k = 0; k < 3; ++k) running.push_back(decode_prefix(r.tokens, m.cb, c.schedule, k + 1));
    const auto cond_l = forward_logits(m.ck.params, c, build_inputs_nextscale(running, r.tokens, 0, c));
    const auto unc_l = forward_logits(m.ck.params, c, build_inputs_nextscale(running, r.tokens, c.null_class(), c));
    for (std::size_t i = 0; i < c.schedule.total_tokens(); ++i) {
      const std::vector<double> a(cond_l.row(i).begin(), cond_l.row(i).end());
      const std::vector<double> b(unc_l.row(i).begin(), unc_l.row(i).end());
      EXPECT_EQ(r.tokens.tokens()[i], argmax(apply_cfg(a, b, 1.5))) << "position " << i;
    }
  }
}

TEST(Generate, SequentialBoundaryResolvesOneTokenPerStep) {
  const Model m = make_model({1, 2, 3});
  const auto r = generate(m.ck, m.cb, 1, steps({0, 3, 8}), 7);
  std::size_t rounds = 0;
  for (const auto& t : r.trace) {
    if (t.scale == 0) continue;
    EXPECT_EQ(t.finalized.size(), 1u) << "scale " << t.scale << " step " << t.step;
    if (t.step > 0) {
      ++rounds;
      EXPECT_EQ(t.masked.size(), m.ck.config.schedule.tokens(t.scale) - t.step);
    }
  }
  EXPECT_EQ(rounds, 11u);
}

TEST(Generate, DeterministicAndConsistentRunning) {
  const Model m = make_model({1, 2, 3, 4});
  const auto s = steps({0, 1, 2, 3});
  const auto a = generate(m.ck, m.cb, 0, s, 8);
  const auto b = generate(m.ck, m.cb, 0, s, 8);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.grid, b.grid);
  EXPECT_NE(generate(m.ck, m.cb, 0, s, 9).tokens, a.tokens);
  for (std::size_t k = 0; k < 4; ++k) {
    const LatentGrid d = decode_prefix(a.tokens, m.cb, m.ck.config.schedule, k + 1);
    EXPECT_LE(max_abs_diff<double>(d.values(), a.running[k].values()), 1e-6);
  }
  EXPECT_LE(max_abs_diff<double>(a.grid.values(), a.running.back().values()), 1e-12);
}

TEST(Generate, SingleTokenScaleIgnoresSteps) {
  const Model m = make_model({1, 2});
  const auto base = generate(m.ck, m.cb, 1, steps({0, 0}), 10);
  for (std::size_t m0 : {1, 3, 9}) EXPECT_EQ(generate(m.ck, m.cb, 1, steps({m0, 0}), 10).tokens, base.tokens);
}

TEST(Generate, RefinementNeedsMaskedHead) {
  const Model m = make_model({1, 2, 3}, Conditioning::markovian, 1);
  EXPECT_NO_THROW(generate(m.ck, m.cb, 0, steps({0, 0, 0}), 1));
  EXPECT_THROW(generate(m.ck, m.cb, 0, steps({0, 1, 0}), 1), InvalidState);
  EXPECT_THROW(generate(m.ck, m.cb, 3, steps({0, 0, 0}), 1), InvalidArgument);
}

TEST(TeacherForce, Endpoints) {
  const Model m = make_model({1, 2, 3});
  const auto truth = generate(m.ck, m.cb, 1, steps({0, 1, 1}), 11).tokens;
  const auto all = teacher_force(m.ck, m.cb, truth, 1, 4, steps({0, 1, 1}), 12);
  EXPECT_EQ(all.generated.tokens, truth);
  EXPECT_EQ(all.error, 0.0);
  EXPECT_EQ(all.generated.invocations, 0u);
  const auto free = teacher_force(m.ck, m.cb, truth, 1, 1, steps({0, 1, 1}), 12);
  EXPECT_EQ(free.generated.tokens, generate(m.ck, m.cb, 1, steps({0, 1, 1}), 12).tokens);
  const auto part = teacher_force(m.ck, m.cb, truth, 1, 3, steps({0, 1, 1}), 12);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_TRUE(std::equal(truth.scale(k).begin(), truth.scale(k).end(), part.generated.tokens.scale(k).begin()));
  }
  EXPECT_THROW(teacher_force(m.ck, m.cb, truth, 1, 0, steps({}), 1), InvalidArgument);
  EXPECT_THROW(teacher_force(m.ck, m.cb, truth, 1, 5, steps({}), 1), InvalidArgument);
}

TEST(Edit, PinningContract) {
  const Model m = make_model({1, 2, 4, 6});
  const ScaleSchedule& sc = m.ck.config.schedule;
  TokenPyramid src(sc);
  Rng rng(13);
  for (auto& t : src.tokens()) t = static_cast<TokenId>(rng.uniform_int(6));

  const auto none = edit(m.ck, m.cb, src, EditRegion(sc.total_tokens(), 0), 0, steps({}), 1);
  EXPECT_EQ(none.tokens, src);
  EXPECT_EQ(none.warnings.size(), 1u);
  EXPECT_EQ(none.invocations, 0u);

  const EditRegion half = region_from_box(sc, 0.0, 0.0, 1.0, 0.5);
  for (bool remask : {false, true}) {
    SampleSchedule s = steps({0, 2, 2, 4});
    s.allow_remask = remask;
    const auto r = edit(m.ck, m.cb, src, half, 1, s, 2);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < sc.total_tokens(); ++i) {
      if (!half[i]) EXPECT_EQ(r.tokens.tokens()[i], src.tokens()[i]) << "pinned position " << i;
      else changed += r.tokens.tokens()[i] != src.tokens()[i];
    }
    EXPECT_GT(changed, 0u);
    EXPECT_EQ(r.invocations, 2u + 2u + 4u);  // the 1x1 scale has no region cell
  }
  const Model p1 = make_model({1, 2, 4, 6}, Conditioning::markovian, 1);
  EXPECT_THROW(edit(p1.ck, p1.cb, src, half, 0, steps({}), 1), InvalidState);
  EXPECT_THROW(edit(m.ck, m.cb, src, EditRegion(3, 1), 0, steps({}), 1), InvalidArgument);
}

TEST(Region, BoxesAndRunLengthFiles) {
  const auto sc = ScaleSchedule::from_sides({1, 2, 4});
  const EditRegion in = region_from_box(sc, 0.25, 0.25, 0.75, 0.75);
  const EditRegion out = region_from_box(sc, 0.25, 0.25, 0.75, 0.75, true);
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_NE(in[i], out[i]);
  EXPECT_EQ(std::count(in.begin() + 5, in.end(), 1), 4);
  const std::string rle = region_to_rle(sc, in);
  EXPECT_EQ(rle, "scale 0 1x1: 0 1\nscale 1 2x2: 0 1 3\nscale 2 4x4: 5 2 2 2 5\n");
  EXPECT_EQ(region_from_rle("# inpaint\n" + rle, sc), in);
  EXPECT_THROW(region_from_rle("scale 0 1x1: 0 1\n", sc), FormatError);
  EXPECT_THROW(region_from_rle("scale 0 2x2: 4\nscale 1 2x2: 4\nscale 2 4x4: 16\n", sc), FormatError);
  EXPECT_THROW(region_from_rle("scale 0 1x1: 1\nscale 1 2x2: 3\nscale 2 4x4: 16\n", sc), FormatError);
  EXPECT_THROW(region_from_rle("scale 0 1x1: x\nscale 1 2x2: 4\nscale 2 4x4: 16\n", sc), FormatError);
}

}  // namespace
}  // namespace hmar
