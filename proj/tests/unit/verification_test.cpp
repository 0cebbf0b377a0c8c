#include <gtest/gtest.h>

#include <json.hpp>
#include <set>
#include <sstream>

#include "hmar/verification/sampler_oracles.hpp"
#include "hmar/verification/suite.hpp"

namespace hmar::verify {
namespace {

TEST(Registry, SortedUniqueAndCoversEveryFamily) {
  const auto& r = registry();
  std::set<std::string> names;
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_TRUE(names.insert(r[i].name).second) << r[i].name;
    if (i > 0) EXPECT_LT(r[i - 1].name, r[i].name);
    EXPECT_TRUE(static_cast<bool>(r[i].run));
  }
  for (const char* family :
       {"msvq.roundtrip", "msvq.quantize", "msvq.contraction", "attnmask.nnz", "attention.forward",
        "attention.backward", "attention.single-token", "attention.locality", "model.gradcheck", "training.weighting",
        "training.dominance", "training.mask-cardinality", "sampling.contracts", "sampling.factorization",
        "sampling.teacher-force", "sampling.edit"}) {
    EXPECT_FALSE(select_cases(family).empty()) << family;
  }
  EXPECT_EQ(select_cases("attention.forward").size(), 50u);
}

TEST(Registry, FilterSelectsBySubstring) {
  EXPECT_EQ(select_cases("").size(), registry().size());
  const auto att = select_cases("attention");
  ASSERT_FALSE(att.empty());
  for (const OracleCase* c : att) EXPECT_NE(c->name.find("attention"), std::string::npos);
  EXPECT_TRUE(select_cases("no-such-case").empty());
}

TEST(RunAll, JsonLinesSchemaAndExitCode) {
  std::ostringstream os;
  EXPECT_EQ(run_all_to(os, "attnmask"), 0);
  std::istringstream is(os.str());
  std::string line;
  std::size_t n = 0;
  std::string prev;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"case", "pass", "deviation", "ms"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_GE(j["ms"].get<double>(), 0.0);
    EXPECT_LT(prev, j["case"].get<std::string>());
    prev = j["case"].get<std::string>();
    ++n;
  }
  EXPECT_EQ(n, select_cases("attnmask").size());
  std::ostringstream none;
  EXPECT_EQ(run_all_to(none, "no-such-case"), 1);
}

TEST(RunAll, ThrowingCaseIsAFailureWithItsMessage) {
  const OracleCase bad{"x", 0, "", 0.0, Relation::equality, []() -> CaseOutcome { throw InvalidState("boom"); }};
  const CaseReport r = run_case(bad);
  EXPECT_FALSE(r.pass);
  EXPECT_NE(r.detail.find("boom"), std::string::npos);
}

TEST(RunAll, CasesRerunIdentically) {
  for (const char* name : {"msvq.quantize", "sampling.factorization.markovian.2x2-v3", "attention.locality.block-causal"}) {
    const auto cases = select_cases(name);
    ASSERT_EQ(cases.size(), 1u);
    const CaseReport a = run_case(*cases[0]), b = run_case(*cases[0]);
    EXPECT_TRUE(a.pass) << a.detail;
    EXPECT_EQ(a.deviation, b.deviation);
    EXPECT_EQ(a.detail, b.detail);
  }
}

TEST(Oracles, MsvqAndMaskCases) {
  EXPECT_TRUE(msvq_roundtrip(30, 5).pass);
  const auto q = quantize_brute_force(2000, 6);
  EXPECT_TRUE(q.pass) << q.detail;
  const auto two = residual_contraction(ContractionCase{40, {4, 8}, {1, 4}, 32, 7, true});
  EXPECT_TRUE(two.pass) << two.detail;
  const auto nnz = mask_nnz(ScaleSchedule::var256(), true);
  EXPECT_TRUE(nnz.pass) << nnz.detail;
  // The quoted preset counts do not hold for a different schedule.
  EXPECT_FALSE(mask_nnz(ScaleSchedule::toy(), true).pass);
  EXPECT_EQ(ladder(12), ScaleSchedule::from_sides({1, 2, 4, 8, 12}));
  EXPECT_EQ(ladder(1), ScaleSchedule::from_sides({1}));
}

TEST(Oracles, TrainingCases) {
  EXPECT_TRUE(weighting_constraints(16, 1e-12).pass);
  EXPECT_TRUE(fine_scale_dominance(ScaleSchedule::var256(), 256.0, 1e-9).pass);
  EXPECT_FALSE(fine_scale_dominance(ScaleSchedule::var256(), 128.0, 1e-9).pass);
  EXPECT_TRUE(mask_cardinality(100, 1).pass);
}

TEST(Factorization, ReplayAgreesAndLimitsAreEnforced) {
  for (Conditioning cond : {Conditioning::markovian, Conditioning::full_prefix}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto o = oracle_factorization(FactorizationCase{3, "1,2", cond, 1.5, seed});
      EXPECT_TRUE(o.pass) << o.detail;
    }
  }
  const auto single = oracle_factorization(FactorizationCase{2, "1,1x2", Conditioning::markovian, 2.0, 4});
  EXPECT_TRUE(single.pass) << single.detail;
  EXPECT_THROW(oracle_factorization(FactorizationCase{5, "1,2", Conditioning::markovian, 1.5, 0}), InvalidArgument);
  EXPECT_THROW(oracle_factorization(FactorizationCase{3, "1,3", Conditioning::markovian, 1.5, 0}), InvalidArgument);
}

TEST(SamplerOracles, PassOnARandomModel) {
  ModelConfig c;
  c.depth = 1;
  c.width = 8;
  c.heads = 2;
  c.vocab = 5;
  c.latent_dim = 2;
  c.schedule = ScaleSchedule::from_sides({1, 2, 3});
  const TinyModel m = tiny_model(c, 2, 21);
  const auto contracts = sampler_contracts(m, 22);
  EXPECT_TRUE(contracts.pass) << contracts.detail;
  const auto src = random_pyramids(m, 4, 23);
  const std::vector<std::size_t> labels{0, 1, 0, 1};
  const auto ed = edit_pinning(m, src, labels, SampleSchedule::defaults(3), 24);
  EXPECT_TRUE(ed.pass) << ed.detail;
  EXPECT_EQ(ed.deviation, 0.0);
  const auto sw = teacher_force_sweep(m, src, labels, SampleSchedule::defaults(3), 25);
  EXPECT_EQ(sw.samples, 4u);
  EXPECT_GE(sw.error_first, 0.0);
  // A phase-1 model cannot run the masked refinement the contracts need.
  EXPECT_THROW(sampler_contracts(tiny_model(c, 1, 21), 22), InvalidState);
}

}  // namespace
}  // namespace hmar::verify
