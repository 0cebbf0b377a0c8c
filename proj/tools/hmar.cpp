#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hmar/cli/commands.hpp"
#include "hmar/common/binary_io.hpp"
#include "hmar/common/kv.hpp"
#include "hmar/verification/suite.hpp"

namespace {

using namespace hmar;
using namespace hmar::cli;

struct Globals {
  std::string config;
  std::vector<std::string> sets;
};

RunConfig merged(const Globals& g) {
  RunConfig rc;
  if (!g.config.empty()) rc.load_file(g.config);
  rc.apply_process_env();
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got \"" + kv + "\"");
    rc.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return rc;
}

template <class T>
std::optional<T> opt_if(CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical masked autoregressive generation on toy latent grids"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "config file of key = value lines")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override a config key (key=value, repeatable)");

  std::string out, data, codebook, pyramids, checkpoint, init;
  std::string metrics;
  bool force = false;

  auto* gen = app.add_subcommand("gen-data", "write the procedural toy corpus");
  gen->add_option("--out", out, "dataset directory")->required();
  gen->add_flag("--force", force, "overwrite a non-empty directory");

  auto* fit = app.add_subcommand("fit-codebook", "fit the shared multi-scale codebook");
  fit->add_option("--data", data)->required();
  fit->add_option("--out", out)->required();

  auto* enc = app.add_subcommand("encode", "encode a dataset into token pyramids");
  enc->add_option("--data", data)->required();
  enc->add_option("--codebook", codebook)->required();
  enc->add_option("--out", out)->required();

  auto* tr = app.add_subcommand("train", "next-scale training from fresh parameters");
  tr->add_option("--data", data)->required();
  tr->add_option("--codebook", codebook)->required();
  tr->add_option("--pyramids", pyramids)->required();
  tr->add_option("--out", out)->required();
  tr->add_option("--metrics", metrics, "JSON-lines metrics file");
  auto* ft = app.add_subcommand("finetune-mask", "masked-prediction fine-tuning of a trained checkpoint");
  ft->add_option("--init", init)->required();
  ft->add_option("--data", data)->required();
  ft->add_option("--codebook", codebook)->required();
  ft->add_option("--pyramids", pyramids)->required();
  ft->add_option("--out", out)->required();
  ft->add_option("--metrics", metrics);

  std::vector<std::size_t> classes;
  std::size_t count = 0, index = 0, limit = 0, class_id = 0, windows = 4;
  std::string steps, region, box;
  std::uint64_t seed = 0;
  bool invert = false;

  auto* smp = app.add_subcommand("sample", "generate images");
  smp->add_option("--checkpoint", checkpoint)->required();
  smp->add_option("--codebook", codebook)->required();
  smp->add_option("--out", out)->required();
  smp->add_option("--class", classes, "class ids (repeatable; default every class)");
  auto* count_opt = smp->add_option("--count", count, "images per class");
  auto* steps_opt = smp->add_option("--schedule", steps, "refinement steps per scale, e.g. 0,1,1,1 or default");
  auto* seed_opt = smp->add_option("--seed", seed);

  std::vector<std::size_t> starts;
  auto* tf = app.add_subcommand("teacher-force", "generate from ground truth prefixes");
  tf->add_option("--checkpoint", checkpoint)->required();
  tf->add_option("--codebook", codebook)->required();
  auto* tf_data = tf->add_option("--data", data, "dataset directory (labels from the shards)");
  auto* tf_pyr = tf->add_option("--pyramids", pyramids, "pyramid file, used with --class");
  tf_data->excludes(tf_pyr);
  tf->add_option("--class", class_id);
  tf->add_option("--start", starts, "1-based start scales (default 1..K+1)");
  tf->add_option("--limit", limit, "use the first N samples");
  tf->add_option("--out", out, "JSON-lines output (default stdout)");
  auto* tf_seed = tf->add_option("--seed", seed);

  auto* ed = app.add_subcommand("edit", "regenerate a region of an encoded image");
  ed->add_option("--checkpoint", checkpoint)->required();
  ed->add_option("--codebook", codebook)->required();
  ed->add_option("--pyramids", pyramids)->required();
  ed->add_option("--index", index, "pyramid index in the file");
  auto* ed_region = ed->add_option("--region", region, "per-scale run-length region file");
  auto* ed_box = ed->add_option("--box", box, "normalized box y0,x0,y1,x1");
  ed_region->excludes(ed_box);
  ed->add_flag("--invert", invert, "flag the outside of the box");
  auto* ed_class = ed->add_option("--class", class_id);
  ed->add_option("--out", out)->required();
  auto* ed_seed = ed->add_option("--seed", seed);

  auto* bench = app.add_subcommand("bench-attn", "time the attention kernel under each mask");
  bench->add_option("--out", out, "JSON-lines output (default stdout)");

  std::string kind;
  std::vector<std::string> schedules, metric_files;
  auto* an = app.add_subcommand("analyze", "sequence length, sparsity, codebook and per-scale loss reports");
  an->add_option("kind", kind, "seqlen | sparsity | codebook | per-scale-loss")->required();
  an->add_option("--schedule", schedules, "schedule preset or side list (repeatable)");
  an->add_option("--pyramids", pyramids);
  an->add_option("--metrics", metric_files, "metrics stream (repeatable)");
  an->add_option("--windows", windows, "step windows per stream");
  an->add_option("--out", out, "JSON-lines output (default stdout)");

  std::string workdir;
  bool dry_run = false;
  auto* pl = app.add_subcommand("pipeline", "run every stage, resuming from artifacts on disk");
  pl->add_option("--workdir", workdir)->required();
  pl->add_flag("--dry-run", dry_run, "print the stage plan only");

  auto* cfg = app.add_subcommand("config", "print the merged configuration with key help");

  std::string filter;
  auto* ver = app.add_subcommand("verify", "run the oracle suite");
  ver->add_option("--filter", filter, "substring of case names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? code : kExitInvalidConfig;
  }

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    const RunConfig rc = merged(g);
    auto write_or_print = [&](const std::string& text) {
      if (out.empty()) {
        std::cout << text;
      } else {
        io::write_file_atomic(out, text);
      }
    };
    if (*gen) {
      gen_data(rc, out, force, std::cerr);
    } else if (*fit) {
      fit_codebook(rc, data, out, std::cerr);
    } else if (*enc) {
      encode_corpus_file(rc, data, codebook, out, std::cerr);
    } else if (*tr) {
      train_phase1(rc, data, codebook, pyramids, out, metrics, std::cerr);
    } else if (*ft) {
      finetune_mask(rc, init, data, codebook, pyramids, out, metrics, std::cerr);
    } else if (*smp) {
      sample(rc,
             SampleRequest{checkpoint, codebook, out, classes, opt_if(count_opt, count), opt_if(steps_opt, steps),
                           opt_if(seed_opt, seed)},
             std::cerr);
    } else if (*tf) {
      std::ostringstream lines;
      teacher_force_cmd(rc, TeacherForceRequest{checkpoint, codebook, data, pyramids, class_id, starts, limit,
                                                opt_if(tf_seed, seed)},
                        lines);
      write_or_print(lines.str());
    } else if (*ed) {
      EditRequest req{checkpoint, codebook, pyramids, out, index, region, {}, invert,
                      opt_if(ed_class, class_id), opt_if(ed_seed, seed)};
      if (!box.empty()) {
        std::istringstream parts(box);
        for (std::string part; std::getline(parts, part, ',');) req.box.push_back(parse_double(trim(part), "--box"));
        if (req.box.size() != 4) throw InvalidArgument("--box expects four values y0,x0,y1,x1");
      }
      edit_cmd(rc, req, std::cerr);
    } else if (*bench) {
      bench_attn(rc, out, std::cout, std::cerr);
    } else if (*an) {
      AnalyzeRequest req{kind, schedules, pyramids, {}, windows};
      for (const auto& m : metric_files) req.metrics.emplace_back(m);
      std::ostringstream lines;
      analyze(rc, req, lines, std::cerr);
      write_or_print(lines.str());
    } else if (*pl) {
      pipeline(rc, PipelineOptions{workdir, dry_run}, std::cout, std::cerr);
    } else if (*cfg) {
      for (const auto& k : RunConfig::schema()) {
        std::cout << fmt::format("{:<22} = {:<14} # {}\n", k.name, rc.get(k.name), k.help);
      }
    } else if (*ver) {
      if (verify::run_all_to(std::cout, filter) != 0) {
        std::cerr << "stage verify: one or more oracle cases failed\n";
        return kExitStageFailure;
      }
    }
  } catch (const StageFailure& e) {
    std::cerr << e.what() << '\n';
    return e.code();
  } catch (const std::exception& e) {
    std::cerr << "stage " << stage << ": " << e.what() << '\n';
    return exit_code(e);
  }
  return kExitOk;
}
