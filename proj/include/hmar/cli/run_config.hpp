#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hmar/attention/bench.hpp"
#include "hmar/model/config.hpp"
#include "hmar/msvq/kmeans.hpp"
#include "hmar/sampling/generate.hpp"
#include "hmar/training/dataset.hpp"
#include "hmar/training/trainer.hpp"

namespace hmar {

enum class ValueType { size, real, flag, text };

struct ConfigKey {
  std::string name;  // "seed" or "<section>.<key>"
  ValueType type = ValueType::text;
  std::string fallback;
  std::string help;
};

// Every tunable of a run, merged from defaults, a config file, environment
// variables (HMAR_<SECTION>_<KEY>, e.g. HMAR_TRAIN_LR) and command-line
// overrides, in that order. Defaults are the desk-scale toy preset.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& schema();
  // "train.lr" -> "HMAR_TRAIN_LR".
  static std::string env_name(std::string_view key);

  // Throws InvalidArgument naming the key when it is unknown or the value
  // does not parse.
  void set(std::string_view key, std::string_view value);
  // "key = value" lines; throws InvalidArgument with the line number.
  void load_text(std::string_view text, std::string_view what = "config");
  void load_file(const std::filesystem::path& path);
  // Applies every HMAR_* entry of `env` ("NAME=value" strings). An HMAR_
  // variable that maps to no key is rejected. Returns the keys applied.
  std::vector<std::string> apply_env(const std::vector<std::string>& env);
  std::vector<std::string> apply_process_env();

  const std::string& get(std::string_view key) const;
  std::size_t size(std::string_view key) const;
  double real(std::string_view key) const;
  bool flag(std::string_view key) const;

  // Sorted "key = value" lines; load_text(to_text()) reproduces the config.
  std::string to_text() const;
  static RunConfig from_text(std::string_view text);
  // Single-line JSON object of all keys.
  std::string to_json() const;

  std::uint64_t seed() const { return size("seed"); }
  ModelConfig model_config() const;
  ToyCorpusOptions corpus_options() const;
  MultiscaleFitOptions fit_options() const;
  TrainConfig train_config(TrainPhase phase) const;
  SampleSchedule sample_schedule(std::size_t scales) const;
  BenchOptions bench_options() const;
  std::vector<BenchSchedule> bench_schedules() const;

  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.values_ == b.values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

// Seed of a named stage stream derived from the root seed.
std::uint64_t stage_seed(std::uint64_t root, std::string_view stage);

// "0,1,1,1" -> {0, 1, 1, 1}; "default" -> SampleSchedule::defaults(scales).steps.
std::vector<std::size_t> parse_step_list(std::string_view text, std::size_t scales);

}  // namespace hmar
