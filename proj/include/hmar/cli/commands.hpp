#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmar/cli/run_config.hpp"
#include "hmar/model/checkpoint.hpp"
#include "hmar/msvq/codebook.hpp"

namespace hmar::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitStageFailure = 3;
inline constexpr int kExitNumericFailure = 4;

// A pipeline stage failed; what() is "stage <name>: <cause>".
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, const std::string& cause, int code)
      : std::runtime_error("stage " + stage + ": " + cause), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const noexcept { return stage_; }
  int code() const noexcept { return code_; }

 private:
  std::string stage_;
  int code_;
};

// 2 for InvalidArgument, 4 for NumericFailure, the carried code for
// StageFailure, 3 otherwise.
int exit_code(const std::exception& e);

// Artifact locations inside a pipeline work directory.
struct Layout {
  fs::path root, data, codebook, pyramids, phase1, phase2, metrics1, metrics2, samples, analysis;
  static Layout in(const fs::path& workdir);
};

// Refuses an existing non-empty directory unless `force`.
void gen_data(const RunConfig& rc, const fs::path& out, bool force, std::ostream& log);
Codebook fit_codebook(const RunConfig& rc, const fs::path& data, const fs::path& out, std::ostream& log);
void encode_corpus_file(const RunConfig& rc, const fs::path& data, const fs::path& codebook, const fs::path& out,
                        std::ostream& log);
// Next-scale phase from fresh parameters. The metrics file starts with a
// {"config": ...} header line followed by one JSON line per step.
Checkpoint train_phase1(const RunConfig& rc, const fs::path& data, const fs::path& codebook,
                        const fs::path& pyramids, const fs::path& out, const fs::path& metrics, std::ostream& log);
Checkpoint finetune_mask(const RunConfig& rc, const fs::path& init, const fs::path& data, const fs::path& codebook,
                         const fs::path& pyramids, const fs::path& out, const fs::path& metrics, std::ostream& log);

struct SampleRequest {
  fs::path checkpoint, codebook, out;
  std::vector<std::size_t> classes;  // empty: every class
  std::optional<std::size_t> count;  // per class; sample.count when unset
  std::optional<std::string> steps;  // overrides sample.steps
  std::optional<std::uint64_t> seed;  // overrides the root seed
};
// Writes class<c>-<i>.ppm per image, pyramids.msvq with every pyramid and
// manifest.jsonl (written last). Returns the number of images.
std::size_t sample(const RunConfig& rc, const SampleRequest& req, std::ostream& log);

struct TeacherForceRequest {
  fs::path checkpoint, codebook;
  fs::path data;      // dataset directory (labels from the shards), or
  fs::path pyramids;  // a pyramid file used with `class_id`
  std::size_t class_id = 0;
  std::vector<std::size_t> starts;  // 1-based; empty sweeps 1..K+1
  std::size_t limit = 0;            // 0 uses every sample
  std::optional<std::uint64_t> seed;
};
// One JSON line per (sample, start) plus one summary line per start.
void teacher_force_cmd(const RunConfig& rc, const TeacherForceRequest& req, std::ostream& out);

struct EditRequest {
  fs::path checkpoint, codebook, pyramids, out;
  std::size_t index = 0;
  fs::path region;              // run-length region file, or
  std::vector<double> box;      // y0, x0, y1, x1 in [0, 1]
  bool invert = false;          // flag the outside of the box
  std::optional<std::size_t> class_id;
  std::optional<std::uint64_t> seed;
};
// Writes source.ppm, edited.ppm, edited.msvq and a one-line summary.json.
void edit_cmd(const RunConfig& rc, const EditRequest& req, std::ostream& log);

// JSON lines to `out` (file when non-empty, else `stdout_stream`), table to `log`.
void bench_attn(const RunConfig& rc, const fs::path& out, std::ostream& stdout_stream, std::ostream& log);

struct AnalyzeRequest {
  std::string kind;                    // seqlen | sparsity | codebook | per-scale-loss
  std::vector<std::string> schedules;  // seqlen / sparsity; empty: var256 and the configured schedule
  fs::path pyramids;                   // codebook
  std::vector<fs::path> metrics;       // per-scale-loss
  std::size_t windows = 4;             // per-scale-loss
};
// JSON lines to `out`, a text table to `text`.
void analyze(const RunConfig& rc, const AnalyzeRequest& req, std::ostream& out, std::ostream& text);

struct PipelineOptions {
  fs::path workdir;
  bool dry_run = false;
};
struct PlannedStage {
  std::string name;
  fs::path artifact;
  bool done = false;  // artifact already present
};
std::vector<PlannedStage> pipeline_plan(const PipelineOptions& opts);
// gen-data, fit-codebook, encode, train, finetune-mask, sample, analyze.
// Stages whose artifact exists are skipped; failures raise StageFailure.
void pipeline(const RunConfig& rc, const PipelineOptions& opts, std::ostream& out, std::ostream& log);

// Binary P6 pixmap of the first three channels (fewer channels repeat the
// last), `cell` pixels per grid cell, values mapped 128 + 64 v and clamped.
std::string render_ppm(const LatentGrid& g, std::size_t cell = 8);

}  // namespace hmar::cli
