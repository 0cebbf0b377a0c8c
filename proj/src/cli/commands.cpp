#include "hmar/cli/commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "hmar/attention/bench.hpp"
#include "hmar/attnmask/mask.hpp"
#include "hmar/common/binary_io.hpp"
#include "hmar/msvq/multiscale.hpp"
#include "hmar/msvq/serialize.hpp"
#include "hmar/msvq/utilization.hpp"
#include "hmar/numerics/rng.hpp"
#include "hmar/sampling/region.hpp"

namespace hmar::cli {
namespace {

using Json = nlohmann::ordered_json;

std::uint64_t item_seed(std::uint64_t root, std::string_view stream, std::size_t index) {
  return Rng::substream(root, stream, index).next_u64();
}

void require_file(const fs::path& p, std::string_view what) {
  if (p.empty()) throw InvalidArgument(std::string(what) + " path is required");
  if (!fs::exists(p)) throw InvalidArgument(std::string(what) + " " + p.string() + " does not exist");
}

struct Corpus {
  Dataset ds;
  Codebook cb;
  std::vector<EncodedExample> examples;
};

Corpus load_corpus(const RunConfig& rc, const fs::path& data, const fs::path& codebook, const fs::path& pyramids,
                   const ModelConfig& cfg) {
  require_file(data / "manifest.json", "dataset manifest");
  require_file(codebook, "codebook");
  require_file(pyramids, "pyramid file");
  Corpus c{load_dataset(data), load_codebook(codebook), {}};
  const auto pyr = load_pyramids(pyramids);
  if (pyr.size() != c.ds.size()) {
    throw InvalidArgument(fmt::format("{} holds {} pyramids but the dataset has {} samples", pyramids.string(),
                                      pyr.size(), c.ds.size()));
  }
  if (!pyr.empty() && !(pyr.front().schedule() == cfg.schedule)) {
    throw InvalidArgument("pyramid schedule " + pyr.front().schedule().to_string() + " does not match model.schedule " +
                          cfg.schedule.to_string());
  }
  if (c.cb.vocab() != cfg.vocab || c.cb.dim() != cfg.latent_dim) {
    throw InvalidArgument(fmt::format("codebook is {}x{} but the model expects {}x{}", c.cb.vocab(), c.cb.dim(),
                                      cfg.vocab, cfg.latent_dim));
  }
  if (c.ds.num_classes != cfg.num_classes) {
    throw InvalidArgument(fmt::format("dataset has {} classes, model.classes is {}", c.ds.num_classes, cfg.num_classes));
  }
  (void)rc;
  c.examples = attach_running(pyr, c.ds.labels, c.cb);
  return c;
}

std::string metrics_header(const RunConfig& rc, TrainPhase phase) {
  Json j;
  j["config"] = Json::parse(rc.to_json());
  j["phase"] = phase == TrainPhase::nextscale ? "nextscale" : "masked";
  return j.dump();
}

Checkpoint run_phase(const RunConfig& rc, const Checkpoint& init, const Corpus& corpus, TrainPhase phase,
                     const fs::path& out, const fs::path& metrics, std::ostream& log) {
  TrainConfig tc = rc.train_config(phase);
  if (tc.checkpoint_every) tc.checkpoint_dir = out.parent_path() / "checkpoints";
  std::string lines = metrics_header(rc, phase) + "\n";
  const auto t0 = std::chrono::steady_clock::now();
  const Checkpoint ck = train(init, corpus.examples, corpus.cb, tc, [&](const StepMetrics& m) {
    lines += metrics_json(m) + "\n";
    if (m.step % 25 == 0 || m.step + 1 == tc.steps) {
      log << fmt::format("[{}] step {:4d}/{} loss {:.4f} lr {:.2e}\n",
                         phase == TrainPhase::nextscale ? "train" : "finetune-mask", m.step, tc.steps, m.total_loss,
                         m.lr);
    }
  });
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log << fmt::format("  {} steps in {:.1f} s\n", tc.steps, s);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  save_checkpoint(out, ck);
  if (!metrics.empty()) io::write_file_atomic(metrics, lines);
  return ck;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::istringstream is(io::read_file(p));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<std::string> default_schedules(const RunConfig& rc, const std::vector<std::string>& given) {
  if (!given.empty()) return given;
  std::vector<std::string> s{"var256"};
  if (rc.get("model.schedule") != "var256") s.push_back(rc.get("model.schedule"));
  return s;
}

}  // namespace

int exit_code(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageFailure*>(&e)) return s->code();
  if (dynamic_cast<const NumericFailure*>(&e)) return kExitNumericFailure;
  if (dynamic_cast<const InvalidArgument*>(&e)) return kExitInvalidConfig;
  return kExitStageFailure;
}

Layout Layout::in(const fs::path& w) {
  return Layout{w,
                w / "data",
                w / "codebook.cdbk",
                w / "pyramids.msvq",
                w / "phase1.hmar",
                w / "phase2.hmar",
                w / "metrics-phase1.jsonl",
                w / "metrics-phase2.jsonl",
                w / "samples",
                w / "analysis"};
}

void gen_data(const RunConfig& rc, const fs::path& out, bool force, std::ostream& log) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw InvalidState("output directory " + out.string() + " is not empty (use --force to overwrite)");
    for (const auto& e : fs::directory_iterator(out)) {
      const std::string n = e.path().filename().string();
      if (n == "manifest.json" || (n.rfind("shard-", 0) == 0 && e.path().extension() == ".hmds")) fs::remove(e.path());
    }
  }
  const ToyCorpusOptions opts = rc.corpus_options();
  const Dataset ds = generate_toy_corpus(opts);
  save_dataset(out, ds, opts, rc.size("data.shard_size"));
  log << fmt::format("[gen-data] {} classes x {} samples, {}x{}x{}, seed {} -> {}\n", opts.classes, opts.per_class,
                     opts.grid, opts.grid, opts.dim, opts.seed, out.string());
}

Codebook fit_codebook(const RunConfig& rc, const fs::path& data, const fs::path& out, std::ostream& log) {
  require_file(data / "manifest.json", "dataset manifest");
  const Dataset ds = load_dataset(data);
  const ModelConfig cfg = rc.model_config();
  const Resolution f = cfg.schedule.finest();
  if (!ds.grids.empty() && (ds.grids[0].height() != f.h || ds.grids[0].width() != f.w)) {
    throw InvalidArgument(fmt::format("model.schedule ends at {}x{} but the data grid is {}x{}", f.h, f.w,
                                      ds.grids[0].height(), ds.grids[0].width()));
  }
  const Codebook cb = round_to_f32(fit_multiscale_codebook(ds.grids, cfg.schedule, rc.fit_options()));
  save_codebook(out, cb);
  log << fmt::format("[fit-codebook] V={} D={} over {} grids -> {}\n", cb.vocab(), cb.dim(), ds.size(), out.string());
  return cb;
}

void encode_corpus_file(const RunConfig& rc, const fs::path& data, const fs::path& codebook, const fs::path& out,
                        std::ostream& log) {
  require_file(data / "manifest.json", "dataset manifest");
  require_file(codebook, "codebook");
  const Dataset ds = load_dataset(data);
  const Codebook cb = load_codebook(codebook);
  const ModelConfig cfg = rc.model_config();
  std::vector<TokenPyramid> pyr;
  for (const auto& e : encode_corpus(ds, cb, cfg.schedule)) pyr.push_back(e.tokens);
  save_pyramids(out, pyr);
  log << fmt::format("[encode] {} pyramids, {} tokens each -> {}\n", pyr.size(), cfg.schedule.total_tokens(),
                     out.string());
}

Checkpoint train_phase1(const RunConfig& rc, const fs::path& data, const fs::path& codebook,
                        const fs::path& pyramids, const fs::path& out, const fs::path& metrics, std::ostream& log) {
  const ModelConfig cfg = rc.model_config();
  const Corpus corpus = load_corpus(rc, data, codebook, pyramids, cfg);
  const Checkpoint init{cfg, init_params<float>(cfg, stage_seed(rc.seed(), "init")), 0, 0, rc.to_text()};
  log << fmt::format("[train] {} parameters, {} examples, scheme {}\n", cfg.parameter_count(), corpus.examples.size(),
                     rc.get("train.scheme"));
  return run_phase(rc, init, corpus, TrainPhase::nextscale, out, metrics, log);
}

Checkpoint finetune_mask(const RunConfig& rc, const fs::path& init_path, const fs::path& data,
                         const fs::path& codebook, const fs::path& pyramids, const fs::path& out,
                         const fs::path& metrics, std::ostream& log) {
  require_file(init_path, "checkpoint");
  const Checkpoint init = load_checkpoint(init_path);
  const Corpus corpus = load_corpus(rc, data, codebook, pyramids, init.config);
  log << fmt::format("[finetune-mask] from {} (phase {}, step {})\n", init_path.string(), init.phase, init.step);
  return run_phase(rc, init, corpus, TrainPhase::masked, out, metrics, log);
}

std::size_t sample(const RunConfig& rc, const SampleRequest& req, std::ostream& log) {
  require_file(req.checkpoint, "checkpoint");
  require_file(req.codebook, "codebook");
  const Checkpoint ck = load_checkpoint(req.checkpoint);
  const Codebook cb = load_codebook(req.codebook);
  const ScaleSchedule& sc = ck.config.schedule;
  SampleSchedule sched = rc.sample_schedule(sc.scales());
  if (req.steps) sched.steps = parse_step_list(*req.steps, sc.scales());
  std::vector<std::size_t> classes = req.classes;
  if (classes.empty()) {
    for (std::size_t c = 0; c < ck.config.num_classes; ++c) classes.push_back(c);
  }
  const std::size_t count = req.count.value_or(rc.size("sample.count"));
  const std::uint64_t root = req.seed.value_or(rc.seed());
  fs::create_directories(req.out);
  std::vector<TokenPyramid> pyramids;
  std::string manifest;
  std::size_t index = 0;
  for (std::size_t c : classes) {
    for (std::size_t i = 0; i < count; ++i, ++index) {
      const std::uint64_t s = item_seed(root, "sample-item", index);
      const GenerateResult r = generate(ck, cb, c, sched, s);
      const std::string image = fmt::format("class{}-{:03d}.ppm", c, i);
      io::write_file_atomic(req.out / image, render_ppm(r.grid));
      pyramids.push_back(r.tokens);
      Json j;
      j["index"] = index;
      j["class"] = c;
      j["seed"] = s;
      j["image"] = image;
      j["invocations"] = r.invocations;
      j["forward_passes"] = r.forward_passes;
      j["steps"] = sched.steps;
      if (!r.warnings.empty()) j["warnings"] = r.warnings;
      manifest += j.dump() + "\n";
    }
  }
  save_pyramids(req.out / "pyramids.msvq", pyramids);
  io::write_file_atomic(req.out / "manifest.jsonl", manifest);
  log << fmt::format("[sample] {} images ({} classes x {}), {} invocations each -> {}\n", index, classes.size(), count,
                     sched.invocations(sc), req.out.string());
  return index;
}

void teacher_force_cmd(const RunConfig& rc, const TeacherForceRequest& req, std::ostream& out) {
  require_file(req.checkpoint, "checkpoint");
  require_file(req.codebook, "codebook");
  const Checkpoint ck = load_checkpoint(req.checkpoint);
  const Codebook cb = load_codebook(req.codebook);
  const ScaleSchedule& sc = ck.config.schedule;
  std::vector<TokenPyramid> truth;
  std::vector<std::size_t> labels;
  if (!req.data.empty()) {
    require_file(req.data / "manifest.json", "dataset manifest");
    for (auto& e : encode_corpus(load_dataset(req.data), cb, sc)) {
      truth.push_back(std::move(e.tokens));
      labels.push_back(e.label);
    }
  } else {
    require_file(req.pyramids, "pyramid file");
    truth = load_pyramids(req.pyramids);
    labels.assign(truth.size(), req.class_id);
  }
  if (req.limit && truth.size() > req.limit) {
    truth.resize(req.limit);
    labels.resize(req.limit);
  }
  std::vector<std::size_t> starts = req.starts;
  if (starts.empty()) {
    for (std::size_t s = 1; s <= sc.scales() + 1; ++s) starts.push_back(s);
  }
  const SampleSchedule sched = rc.sample_schedule(sc.scales());
  const std::uint64_t root = req.seed.value_or(rc.seed());
  for (std::size_t start : starts) {
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const auto r = teacher_force(ck, cb, truth[i], labels[i], start, sched, item_seed(root, "teacher-force", i));
      sum += r.error;
      Json j;
      j["sample"] = i;
      j["class"] = labels[i];
      j["start"] = start;
      j["error"] = r.error;
      out << j.dump() << '\n';
    }
    Json s;
    s["summary"] = true;
    s["start"] = start;
    s["samples"] = truth.size();
    s["mean_error"] = truth.empty() ? 0.0 : sum / static_cast<double>(truth.size());
    out << s.dump() << '\n';
  }
}

void edit_cmd(const RunConfig& rc, const EditRequest& req, std::ostream& log) {
  require_file(req.checkpoint, "checkpoint");
  require_file(req.codebook, "codebook");
  require_file(req.pyramids, "pyramid file");
  const Checkpoint ck = load_checkpoint(req.checkpoint);
  const Codebook cb = load_codebook(req.codebook);
  const ScaleSchedule& sc = ck.config.schedule;
  const auto pyr = load_pyramids(req.pyramids);
  if (req.index >= pyr.size()) {
    throw InvalidArgument(fmt::format("--index {} but {} holds {} pyramids", req.index, req.pyramids.string(), pyr.size()));
  }
  EditRegion region;
  if (!req.region.empty()) {
    require_file(req.region, "region file");
    region = load_region(req.region, sc);
  } else if (req.box.size() == 4) {
    region = region_from_box(sc, req.box[0], req.box[1], req.box[2], req.box[3], req.invert);
  } else {
    throw InvalidArgument("edit needs --region FILE or --box y0,x0,y1,x1");
  }
  const std::size_t cls = req.class_id.value_or(0);
  const TokenPyramid& src = pyr[req.index];
  const GenerateResult r = edit(ck, cb, src, region, cls, rc.sample_schedule(sc.scales()),
                                req.seed.value_or(rc.seed()));
  fs::create_directories(req.out);
  io::write_file_atomic(req.out / "source.ppm", render_ppm(decode(src, cb, sc)));
  io::write_file_atomic(req.out / "edited.ppm", render_ppm(r.grid));
  save_pyramids(req.out / "edited.msvq", {r.tokens});
  std::size_t flagged = 0, changed = 0, pinned_altered = 0;
  for (std::size_t p = 0; p < region.size(); ++p) {
    const bool diff = r.tokens.tokens()[p] != src.tokens()[p];
    flagged += region[p] != 0;
    changed += region[p] && diff;
    pinned_altered += !region[p] && diff;
  }
  Json j;
  j["index"] = req.index;
  j["class"] = cls;
  j["flagged"] = flagged;
  j["changed"] = changed;
  j["pinned_altered"] = pinned_altered;
  j["invocations"] = r.invocations;
  j["warnings"] = r.warnings;
  io::write_file_atomic(req.out / "summary.json", j.dump() + "\n");
  for (const auto& w : r.warnings) log << "[edit] warning: " << w << '\n';
  log << fmt::format("[edit] {} flagged tokens, {} changed -> {}\n", flagged, changed, req.out.string());
}

void bench_attn(const RunConfig& rc, const fs::path& out, std::ostream& stdout_stream, std::ostream& log) {
  const auto rows = bench_attention(rc.bench_schedules(),
                                    {MaskKind::block_diagonal, MaskKind::block_causal, MaskKind::dense},
                                    rc.bench_options());
  std::string lines;
  for (const auto& r : rows) lines += bench_json_line(r) + "\n";
  if (out.empty()) {
    stdout_stream << lines;
  } else {
    io::write_file_atomic(out, lines);
  }
  log << bench_table(rows);
}

void analyze(const RunConfig& rc, const AnalyzeRequest& req, std::ostream& out, std::ostream& text) {
  if (req.kind == "seqlen") {
    for (const auto& name : default_schedules(rc, req.schedules)) {
      const ScaleSchedule s = ScaleSchedule::parse(name);
      const SequenceLength L = sequence_length(s);
      Json j;
      j["report"] = "seqlen";
      j["schedule"] = name;
      j["scales"] = s.scales();
      j["N"] = L.total;
      j["finest"] = L.finest;
      j["ratio"] = L.ratio;
      out << j.dump() << '\n';
      text << fmt::format("{:<24} K={:<3} N={:<6} n_K={:<6} N/n_K={:.3f}\n", name, s.scales(), L.total, L.finest,
                          L.ratio);
    }
  } else if (req.kind == "sparsity") {
    for (const auto& name : default_schedules(rc, req.schedules)) {
      const ScaleSchedule s = ScaleSchedule::parse(name);
      const SparsityReport r = sparsity_report(AttentionMask::build(s, MaskKind::block_causal));
      Json j;
      j["report"] = "sparsity";
      j["schedule"] = name;
      j["N"] = r.n;
      j["nnz_block_causal"] = r.nnz_block_causal;
      j["nnz_block_diagonal"] = r.nnz_block_diagonal;
      j["density_block_causal"] = r.density_block_causal;
      j["density_block_diagonal"] = r.density_block_diagonal;
      j["multiplier"] = r.multiplier;
      out << j.dump() << '\n';
      text << fmt::format("{:<24} N={:<6} causal {:>9} ({:.6f})  diagonal {:>9} ({:.6f})  x{:.3f}\n", name, r.n,
                          r.nnz_block_causal, r.density_block_causal, r.nnz_block_diagonal, r.density_block_diagonal,
                          r.multiplier);
    }
  } else if (req.kind == "codebook") {
    require_file(req.pyramids, "pyramid file");
    const auto pyr = load_pyramids(req.pyramids);
    if (pyr.empty()) throw InvalidArgument("analyze codebook: " + req.pyramids.string() + " holds no pyramids");
    std::size_t vocab = rc.size("model.vocab");
    for (const auto& p : pyr) {
      for (TokenId t : p.tokens()) vocab = std::max<std::size_t>(vocab, t + 1);
    }
    const auto usage = codebook_utilization(pyr, vocab);
    for (std::size_t k = 0; k < usage.size(); ++k) {
      std::size_t used = 0;
      for (auto c : usage[k].counts) used += c > 0;
      Json j;
      j["report"] = "codebook";
      j["scale"] = k + 1;
      j["used"] = used;
      j["utilization"] = usage[k].utilization;
      j["entropy_bits"] = usage[k].entropy_bits;
      out << j.dump() << '\n';
      text << fmt::format("scale {:>2}: {:>4} codes used ({:.3f}), entropy {:.3f} bits\n", k + 1, used,
                          usage[k].utilization, usage[k].entropy_bits);
    }
  } else if (req.kind == "per-scale-loss") {
    if (req.metrics.empty()) throw InvalidArgument("analyze per-scale-loss: at least one --metrics file is required");
    if (req.windows == 0) throw InvalidArgument("analyze per-scale-loss: --windows must be >= 1");
    for (const auto& path : req.metrics) {
      require_file(path, "metrics file");
      std::vector<Json> steps;
      for (const auto& line : read_lines(path)) {
        Json j = Json::parse(line);
        if (j.contains("step")) steps.push_back(std::move(j));
      }
      if (steps.empty()) throw InvalidArgument("analyze per-scale-loss: " + path.string() + " has no step records");
      const std::size_t n = steps.size(), W = std::min(req.windows, n);
      for (std::size_t w = 0; w < W; ++w) {
        const std::size_t b = w * n / W, e = (w + 1) * n / W;
        const std::size_t K = steps[b]["per_scale_loss"].size();
        std::vector<double> loss(K, 0.0), acc(K, 0.0);
        for (std::size_t i = b; i < e; ++i) {
          for (std::size_t k = 0; k < K; ++k) {
            loss[k] += steps[i]["per_scale_loss"][k].get<double>() / static_cast<double>(e - b);
            acc[k] += steps[i]["per_scale_acc"][k].get<double>() / static_cast<double>(e - b);
          }
        }
        for (std::size_t k = 0; k < K; ++k) {
          Json j;
          j["report"] = "per-scale-loss";
          j["file"] = path.filename().string();
          j["phase"] = steps[b]["phase"];
          j["step_begin"] = steps[b]["step"];
          j["step_end"] = steps[e - 1]["step"];
          j["scale"] = k + 1;
          j["loss"] = loss[k];
          j["acc"] = acc[k];
          out << j.dump() << '\n';
        }
        text << fmt::format("{} steps {:>4}-{:<4} loss", path.filename().string(), steps[b]["step"].get<std::size_t>(),
                            steps[e - 1]["step"].get<std::size_t>());
        for (double l : loss) text << fmt::format(" {:.3f}", l);
        text << '\n';
      }
    }
  } else {
    throw InvalidArgument("analyze: unknown report \"" + req.kind + "\" (seqlen, sparsity, codebook, per-scale-loss)");
  }
}

std::vector<PlannedStage> pipeline_plan(const PipelineOptions& opts) {
  const Layout L = Layout::in(opts.workdir);
  std::vector<PlannedStage> plan{{"gen-data", L.data / "manifest.json"},
                                 {"fit-codebook", L.codebook},
                                 {"encode", L.pyramids},
                                 {"train", L.phase1},
                                 {"finetune-mask", L.phase2},
                                 {"sample", L.samples / "manifest.jsonl"},
                                 {"analyze", L.analysis / "report.jsonl"}};
  for (auto& s : plan) s.done = fs::exists(s.artifact);
  return plan;
}

void pipeline(const RunConfig& rc, const PipelineOptions& opts, std::ostream& out, std::ostream& log) {
  if (opts.workdir.empty()) throw InvalidArgument("pipeline: --workdir is required");
  const auto plan = pipeline_plan(opts);
  if (opts.dry_run) {
    for (const auto& s : plan) {
      Json j;
      j["stage"] = s.name;
      j["artifact"] = s.artifact.string();
      j["action"] = s.done ? "skip" : "run";
      out << j.dump() << '\n';
    }
    return;
  }
  rc.model_config();
  const Layout L = Layout::in(opts.workdir);
  fs::create_directories(L.root);
  io::write_file_atomic(L.root / "config.txt", rc.to_text());
  for (const auto& s : plan) {
    const auto t0 = std::chrono::steady_clock::now();
    Json j;
    j["stage"] = s.name;
    if (s.done) {
      log << "[pipeline] " << s.name << ": " << s.artifact.string() << " present, skipped\n";
      j["status"] = "skipped";
      out << j.dump() << '\n';
      continue;
    }
    try {
      if (s.name == "gen-data") {
        gen_data(rc, L.data, true, log);
      } else if (s.name == "fit-codebook") {
        fit_codebook(rc, L.data, L.codebook, log);
      } else if (s.name == "encode") {
        encode_corpus_file(rc, L.data, L.codebook, L.pyramids, log);
      } else if (s.name == "train") {
        train_phase1(rc, L.data, L.codebook, L.pyramids, L.phase1, L.metrics1, log);
      } else if (s.name == "finetune-mask") {
        finetune_mask(rc, L.phase1, L.data, L.codebook, L.pyramids, L.phase2, L.metrics2, log);
      } else if (s.name == "sample") {
        sample(rc, SampleRequest{L.phase2, L.codebook, L.samples, {}, {}, {}, {}}, log);
      } else if (s.name == "analyze") {
        fs::create_directories(L.analysis);
        std::string report;
        auto run = [&](AnalyzeRequest req, const std::string& file) {
          std::ostringstream lines, table;
          analyze(rc, req, lines, table);
          io::write_file_atomic(L.analysis / (file + ".jsonl"), lines.str());
          io::write_file_atomic(L.analysis / (file + ".txt"), table.str());
          report += lines.str();
        };
        AnalyzeRequest base;
        base.kind = "seqlen";
        run(base, "seqlen");
        base.kind = "sparsity";
        run(base, "sparsity");
        base.kind = "codebook";
        base.pyramids = L.pyramids;
        run(base, "codebook");
        base.kind = "per-scale-loss";
        base.metrics = {L.metrics1, L.metrics2};
        run(base, "per-scale-loss");
        io::write_file_atomic(L.analysis / "report.jsonl", report);
        log << "[analyze] reports -> " << L.analysis.string() << '\n';
      }
    } catch (const StageFailure&) {
      throw;
    } catch (const std::exception& e) {
      throw StageFailure(s.name, e.what(), exit_code(e) == kExitInvalidConfig ? kExitStageFailure : exit_code(e));
    }
    j["status"] = "ran";
    j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << j.dump() << '\n';
  }
}

std::string render_ppm(const LatentGrid& g, std::size_t cell) {
  const std::size_t H = g.height() * cell, W = g.width() * cell, D = g.channels();
  std::string bytes = fmt::format("P6\n{} {}\n255\n", W, H);
  bytes.reserve(bytes.size() + H * W * 3);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = D == 0 ? 0.0 : g.at(y / cell, x / cell, std::min(c, D - 1));
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(128.0 + 64.0 * v), 0L, 255L))));
      }
    }
  }
  return bytes;
}

}  // namespace hmar::cli
