#include "hmar/verification/suite.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <json.hpp>
#include <ostream>

#include "hmar/verification/sampler_oracles.hpp"

namespace hmar::verify {

std::string_view relation_name(Relation r) {
  switch (r) {
    case Relation::equality: return "equality";
    case Relation::ordering: return "ordering";
    case Relation::bound: return "bound";
  }
  return "?";
}

namespace {

ModelConfig small_sampler_config() {
  ModelConfig c;
  c.depth = 2;
  c.width = 16;
  c.heads = 2;
  c.vocab = 6;
  c.latent_dim = 2;
  c.schedule = ScaleSchedule::toy();
  c.tiling.tile = 4;
  return c;
}

std::vector<OracleCase> build_registry() {
  std::vector<OracleCase> r;
  auto add = [&](std::string name, std::uint64_t seed, std::string params, double tol, Relation rel,
                 std::function<CaseOutcome()> run) {
    r.push_back(OracleCase{std::move(name), seed, std::move(params), tol, rel, std::move(run)});
  };

  add("msvq.roundtrip", 1, "grids=100 sides=4..16 dims=1,4,8", 0.0, Relation::equality,
      [] { return msvq_roundtrip(100, 1); });
  add("msvq.quantize", 2, "queries=10000", 0.0, Relation::equality, [] { return quantize_brute_force(10000, 2); });
  add("msvq.contraction.gaussian", 3, "grids=100 sides=4,8,16 dims=1,4,8 vocab=32 schedule=ladder", 0.0,
      Relation::ordering, [] { return residual_contraction(ContractionCase{100, {4, 8, 16}, {1, 4, 8}, 32, 3, false}); });
  add("msvq.contraction.two-level", 4, "grids=100 sides=4,8,16 dims=1,4,8 vocab=32 schedule=1,side", 0.0,
      Relation::ordering, [] { return residual_contraction(ContractionCase{100, {4, 8, 16}, {1, 4, 8}, 32, 4, true}); });

  add("attnmask.nnz.var256", 0, "schedule=var256", 0.0, Relation::equality,
      [] { return mask_nnz(ScaleSchedule::var256(), true); });
  add("attnmask.nnz.toy", 0, "schedule=toy", 0.0, Relation::equality,
      [] { return mask_nnz(ScaleSchedule::toy(), false); });
  add("attnmask.nnz.rect", 0, "schedule=1x1,2x3,3x5,4x7", 0.0, Relation::equality,
      [] { return mask_nnz(ScaleSchedule::parse("1x1,2x3,3x5,4x7"), false); });

  for (const AttentionCase& c : equivalence_sweep()) {
    add("attention.forward." + c.name(), c.seed, "precision=f32 reference=dense-f64", 1e-5, Relation::bound,
        [c] { return dense_attention(c, 1e-5); });
  }
  for (const AttentionCase& c : backward_cases()) {
    add("attention.backward." + c.name(), c.seed, "precision=f64 eps=1e-6", 1e-5, Relation::bound,
        [c] { return attention_backward(c, 1e-5); });
  }
  add("attention.single-token", 5, "N=1 heads=3 d=8", 0.0, Relation::equality, [] { return attention_single_token(5); });
  add("attention.locality.block-diagonal", 6, "schedule=toy", 0.0, Relation::equality,
      [] { return attention_locality(ScaleSchedule::toy(), MaskKind::block_diagonal, 6); });
  add("attention.locality.block-causal", 7, "schedule=toy", 0.0, Relation::equality,
      [] { return attention_locality(ScaleSchedule::toy(), MaskKind::block_causal, 7); });

  add("model.gradcheck.depth2", 8, "config=default coords_per_tensor=16 eps=1e-5", 1e-5, Relation::bound,
      [] { return model_grad_check(ModelConfig{}, 16, 1e-5, 8); });

  add("training.weighting", 0, "schemes=all K=1..16", 1e-12, Relation::bound,
      [] { return weighting_constraints(16, 1e-12); });
  add("training.dominance.var256", 0, "scheme=unweighted expected=256", 1e-9, Relation::bound,
      [] { return fine_scale_dominance(ScaleSchedule::var256(), 256.0, 1e-9); });
  add("training.mask-cardinality", 9, "trials=300", 0.0, Relation::equality, [] { return mask_cardinality(300, 9); });

  for (Conditioning cond : {Conditioning::markovian, Conditioning::full_prefix}) {
    const std::string cn(conditioning_name(cond));
    add("sampling.factorization." + cn + ".2x2-v3", 10, "vocab=3 sides=1,2", 0.0, Relation::equality,
        [cond] { return oracle_factorization(FactorizationCase{3, "1,2", cond, 1.5, 10}); });
    add("sampling.factorization." + cn + ".3scale-v4", 11, "vocab=4 schedule=1x1,1x2,2x2 guidance=1", 0.0,
        Relation::equality, [cond] { return oracle_factorization(FactorizationCase{4, "1x1,1x2,2x2", cond, 1.0, 11}); });
  }
  add("sampling.contracts", 12, "config=small schedule=toy", 0.0, Relation::equality,
      [] { return sampler_contracts(tiny_model(small_sampler_config(), 2, 12), 12); });
  add("sampling.teacher-force", 13, "samples=32 schedule=toy", 0.0, Relation::ordering, [] {
    const TinyModel m = tiny_model(small_sampler_config(), 2, 13);
    const auto truth = random_pyramids(m, 32, 13);
    std::vector<std::size_t> labels(truth.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    return teacher_force_ordering(m, truth, labels, SampleSchedule::defaults(4), 13);
  });
  add("sampling.edit", 14, "samples=8 schedule=toy", 0.0, Relation::equality, [] {
    const TinyModel m = tiny_model(small_sampler_config(), 2, 14);
    const auto src = random_pyramids(m, 8, 14);
    std::vector<std::size_t> labels(src.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    return edit_pinning(m, src, labels, SampleSchedule::defaults(4), 14);
  });

  std::sort(r.begin(), r.end(), [](const OracleCase& a, const OracleCase& b) { return a.name < b.name; });
  return r;
}

}  // namespace

const std::vector<OracleCase>& registry() {
  static const std::vector<OracleCase> r = build_registry();
  return r;
}

std::vector<const OracleCase*> select_cases(std::string_view filter) {
  std::vector<const OracleCase*> out;
  for (const OracleCase& c : registry()) {
    if (filter.empty() || c.name.find(filter) != std::string::npos) out.push_back(&c);
  }
  return out;
}

CaseReport run_case(const OracleCase& c) {
  CaseReport rep{c.name, false, 0.0, 0.0, "", c.params, c.tolerance, c.relation};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const CaseOutcome o = c.run();
    rep.pass = o.pass;
    rep.deviation = o.deviation;
    rep.detail = o.detail;
  } catch (const std::exception& e) {
    rep.pass = false;
    rep.detail = std::string("exception: ") + e.what();
  }
  rep.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::vector<CaseReport> run_all(std::string_view filter) {
  std::vector<CaseReport> out;
  for (const OracleCase* c : select_cases(filter)) out.push_back(run_case(*c));
  return out;
}

std::string report_json(const CaseReport& r) {
  nlohmann::ordered_json j;
  j["case"] = r.name;
  j["pass"] = r.pass;
  j["deviation"] = r.deviation;
  j["ms"] = std::round(r.ms * 1000.0) / 1000.0;
  j["tolerance"] = r.tolerance;
  j["relation"] = relation_name(r.relation);
  j["params"] = r.params;
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j.dump();
}

int run_all_to(std::ostream& os, std::string_view filter) {
  const auto cases = select_cases(filter);
  bool ok = !cases.empty();
  for (const OracleCase* c : cases) {
    const CaseReport r = run_case(*c);
    ok = ok && r.pass;
    os << report_json(r) << '\n' << std::flush;
  }
  return ok ? 0 : 1;
}

}  // namespace hmar::verify
