// Runs the twelve acceptance criteria at their stated tolerances and time
// budgets and prints one PASS/FAIL line per criterion.
//
//   acceptance [--only N ...] [--known-failure N ...] [--workdir DIR]
//
// Exit status is 0 when the failing criteria are exactly the --known-failure
// set, so a known gap still prints FAIL but a regression (or an unexpected
// pass) fails the run.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "hmar/cli/commands.hpp"
#include "hmar/common/binary_io.hpp"
#include "hmar/msvq/serialize.hpp"
#include "hmar/training/trainer.hpp"
#include "hmar/verification/oracles.hpp"
#include "hmar/verification/sampler_oracles.hpp"
#include "hmar/verification/suite.hpp"

namespace {

using namespace hmar;
namespace fs = std::filesystem;
using Json = nlohmann::json;

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<Verdict()> run;
};

Verdict from(const verify::CaseOutcome& o) {
  return {o.pass, o.detail.empty() ? fmt::format("max deviation {:.3g}", o.deviation) : o.detail};
}

// Every registered case whose name contains one of the filters must pass.
Verdict suite_cases(std::initializer_list<const char*> filters) {
  std::size_t n = 0, failed = 0;
  double worst = 0.0;
  std::string first;
  for (const char* f : filters) {
    for (const verify::OracleCase* c : verify::select_cases(f)) {
      const verify::CaseReport r = verify::run_case(*c);
      ++n;
      worst = std::max(worst, r.deviation);
      if (!r.pass) {
        ++failed;
        if (first.empty()) first = r.name + ": " + r.detail;
      }
    }
  }
  std::string d = fmt::format("{} cases, {} failed, max deviation {:.3g}", n, failed, worst);
  if (!first.empty()) d += "; first failure " + first;
  return {n > 0 && failed == 0, d};
}

// The trained toy model shared by the learning, teacher-forcing and editing
// criteria. Built by the first criterion that needs it.
struct Trained {
  fs::path workdir;
  RunConfig rc;
  bool ready = false;
  double pipeline_s = 0.0;
  Checkpoint phase1, phase2;
  Codebook cb;
  std::vector<EncodedExample> held_out;

  void build() {
    if (ready) return;
    fs::remove_all(workdir);
    std::ostringstream out, log;
    const auto t0 = std::chrono::steady_clock::now();
    cli::pipeline(rc, cli::PipelineOptions{workdir, false}, out, log);
    pipeline_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const cli::Layout L = cli::Layout::in(workdir);
    phase1 = load_checkpoint(L.phase1);
    phase2 = load_checkpoint(L.phase2);
    cb = load_codebook(L.codebook);
    ToyCorpusOptions opts = rc.corpus_options();
    opts.seed = stage_seed(rc.seed(), "held-out");
    opts.per_class = 32;
    held_out = encode_corpus(generate_toy_corpus(opts), cb, phase1.config.schedule);
    ready = true;
  }
};

std::vector<double> step_losses(const fs::path& metrics) {
  std::vector<double> out;
  std::istringstream is(io::read_file(metrics));
  for (std::string line; std::getline(is, line);) {
    const Json j = Json::parse(line);
    if (j.contains("step")) out.push_back(j["total_loss"].get<double>());
  }
  return out;
}

double window_mean(const std::vector<double>& v, std::size_t b, std::size_t e) {
  double s = 0.0;
  for (std::size_t i = b; i < e; ++i) s += v[i];
  return s / static_cast<double>(e - b);
}

Verdict kernel_work_reduction() {
  BenchOptions opts;
  opts.repeats = 25;
  const auto sched = ScaleSchedule::var256();
  const auto rows = bench_attention({{"var256", sched}},
                                    {MaskKind::block_diagonal, MaskKind::block_causal, MaskKind::dense}, opts);
  auto row = [&](const std::string& kind, const std::string& impl) -> const BenchRow& {
    for (const auto& r : rows) {
      if (r.kind == kind && r.impl == impl) return r;
    }
    throw InvalidState("bench row " + kind + "/" + impl + " missing");
  };
  const BenchRow& bd = row("block-diagonal", "tiled");
  const BenchRow& bc = row("block-causal", "tiled");
  const BenchRow& dt = row("dense", "tiled");
  const BenchRow& dr = row("dense", "dense-ref");
  std::uint64_t bound = 0;
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    const std::uint64_t t = (sched.tokens(k) + opts.tile - 1) / opts.tile;
    bound += t * t;
  }
  bound *= opts.heads;
  const bool counts = bd.visited_pairs == bound && bd.visited_pairs < bc.visited_pairs &&
                      bc.visited_pairs < dt.visited_pairs;
  const bool order = bd.mean_ms < bc.mean_ms && bc.mean_ms < dt.mean_ms && dt.mean_ms < dr.mean_ms;
  return {counts && order && bd.n == 680 && bd.repeats >= 25,
          fmt::format("N={} reps={}; visited pairs diagonal {} (bound {}) causal {} dense {}; mean ms diagonal "
                      "{:.2f} < causal {:.2f} < dense tiled {:.2f} < dense reference {:.2f}",
                      bd.n, bd.repeats, bd.visited_pairs, bound, bc.visited_pairs, dt.visited_pairs, bd.mean_ms,
                      bc.mean_ms, dt.mean_ms, dr.mean_ms)};
}

Verdict learning_signal(Trained& t) {
  t.build();
  const cli::Layout L = cli::Layout::in(t.workdir);
  bool ok = t.pipeline_s < 600.0;
  std::string d = fmt::format("pipeline {:.1f} s", t.pipeline_s);
  for (WeightingKind k : {WeightingKind::unweighted, WeightingKind::equal, WeightingKind::linear, WeightingKind::sqrt,
                          WeightingKind::exp_decay, WeightingKind::log_normal}) {
    const std::string name(weighting_name(k));
    fs::path metrics = L.metrics1;
    if (name != t.rc.get("train.scheme")) {
      RunConfig rc = t.rc;
      rc.set("train.scheme", name);
      std::ostringstream log;
      metrics = t.workdir / ("metrics-" + name + ".jsonl");
      cli::train_phase1(rc, L.data, L.codebook, L.pyramids, t.workdir / ("phase1-" + name + ".hmar"), metrics, log);
    }
    const auto loss = step_losses(metrics);
    if (loss.size() < 200) return {false, fmt::format("{}: only {} steps recorded", name, loss.size())};
    const double early = window_mean(loss, 0, 50), late = window_mean(loss, 150, 200);
    ok = ok && late < early;
    d += fmt::format("; {} {:.3f}->{:.3f}", name, early, late);
  }
  const ModelConfig& cfg = t.phase1.config;
  const LossReport ns = evaluate_nextscale(t.phase1.params, cfg, t.held_out, t.rc.train_config(TrainPhase::nextscale).scheme);
  const LossReport ms = evaluate_masked(t.phase2.params, cfg, t.held_out, t.cb, 0.5, stage_seed(t.rc.seed(), "eval"));
  ok = ok && ns.per_scale_acc[0] > 0.9;
  d += fmt::format("; held-out scale-1 acc {:.3f}; masked/next-scale acc", ns.per_scale_acc[0]);
  for (std::size_t k = 1; k < cfg.schedule.scales(); ++k) {
    ok = ok && ms.per_scale_acc[k] > ns.per_scale_acc[k];
    d += fmt::format(" k{} {:.3f}/{:.3f}", k + 1, ms.per_scale_acc[k], ns.per_scale_acc[k]);
  }
  return {ok, d};
}

Verdict sampler_contracts(Trained& t) {
  t.build();
  const verify::TinyModel m{t.phase2, t.cb};
  const Verdict trained = from(verify::sampler_contracts(m, 31));
  const Verdict reg = suite_cases({"sampling.contracts", "sampling.factorization"});
  return {trained.pass && reg.pass, "trained model: " + trained.detail + "; oracle cases: " + reg.detail};
}

std::vector<TokenPyramid> pyramids_of(const std::vector<EncodedExample>& ex, std::vector<std::size_t>& labels) {
  std::vector<TokenPyramid> out;
  for (const auto& e : ex) {
    out.push_back(e.tokens);
    labels.push_back(e.label);
  }
  return out;
}

Verdict teacher_forcing(Trained& t) {
  t.build();
  std::vector<std::size_t> labels;
  const auto truth = pyramids_of(t.held_out, labels);
  const auto sched = t.rc.sample_schedule(t.phase2.config.schedule.scales());
  const auto sweep = verify::teacher_force_sweep(verify::TinyModel{t.phase2, t.cb}, truth, labels, sched, 41);
  return {sweep.samples >= 32 && sweep.error_last <= sweep.error_first,
          fmt::format("{} held-out samples; mean error start K {:.4f} <= start 1 {:.4f}", sweep.samples,
                      sweep.error_last, sweep.error_first)};
}

Verdict editing(Trained& t) {
  t.build();
  std::vector<std::size_t> labels;
  auto src = pyramids_of(t.held_out, labels);
  src.resize(8);
  labels.resize(8);
  const auto sched = t.rc.sample_schedule(t.phase2.config.schedule.scales());
  return from(verify::edit_pinning(verify::TinyModel{t.phase2, t.cb}, src, labels, sched, 51));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only, known;
  std::string workdir = (fs::temp_directory_path() / "hmar-acceptance").string();
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--known-failure", known, "criteria expected to fail");
  app.add_option("--workdir", workdir, "scratch directory for the trained toy run");
  CLI11_PARSE(app, argc, argv);

  Trained trained;
  trained.workdir = workdir;
  const std::vector<Criterion> criteria = {
      {1, "MSVQ round trip", 5, [] { return from(verify::msvq_roundtrip(100, 1)); }},
      {2, "quantizer oracle", 5, [] { return from(verify::quantize_brute_force(10000, 2)); }},
      {3, "residual contraction", 10, [] { return from(verify::residual_contraction(verify::ContractionCase{})); }},
      {4, "sparsity accounting", 1, [] { return from(verify::mask_nnz(ScaleSchedule::var256(), true)); }},
      {5, "attention kernel equivalence", 60, [] { return suite_cases({"attention.forward.", "attention.backward."}); }},
      {6, "kernel work reduction", 120, kernel_work_reduction},
      {7, "full-model gradient check", 60, [] { return suite_cases({"model.gradcheck.depth2"}); }},
      {8, "weighting schemes", 10, [] { return suite_cases({"training.weighting", "training.dominance.var256"}); }},
      {9, "learning signal", 600, [&] { return learning_signal(trained); }},
      {10, "sampler contracts", 30, [&] { return sampler_contracts(trained); }},
      {11, "teacher forcing", 300, [&] { return teacher_forcing(trained); }},
      {12, "editing", 30, [&] { return editing(trained); }},
  };

  // Training time belongs to criterion 9; later criteria are timed on the
  // trained artifacts only.
  const std::set<int> selected(only.begin(), only.end());
  if (!selected.empty() && !selected.count(9) &&
      (selected.count(10) || selected.count(11) || selected.count(12))) {
    trained.build();
  }

  std::set<int> failed;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = s < c.budget_s;
    const bool pass = v.pass && in_budget;
    if (!pass) failed.insert(c.id);
    std::cout << fmt::format("criterion {:>2} {:<30} {} ({:.2f} s, budget {:.0f} s){} | {}\n", c.id, c.title,
                             pass ? "PASS" : "FAIL", s, c.budget_s, in_budget ? "" : " over budget", v.detail)
              << std::flush;
  }
  std::set<int> expected;
  for (int k : known) {
    if (selected.empty() || selected.count(k)) expected.insert(k);
  }
  for (int k : expected) {
    if (!failed.count(k)) std::cout << fmt::format("criterion {} was listed as a known failure but passed\n", k);
  }
  std::cout << fmt::format("{} of {} criteria passed\n", (selected.empty() ? criteria.size() : selected.size()) - failed.size(),
                           selected.empty() ? criteria.size() : selected.size());
  return failed == expected ? 0 : 1;
}
