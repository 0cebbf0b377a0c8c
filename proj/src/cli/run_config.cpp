#include "hmar/cli/run_config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "hmar/common/binary_io.hpp"
#include "hmar/common/kv.hpp"
#include "hmar/numerics/rng.hpp"
#include "hmar/training/optimizer.hpp"
#include "hmar/training/weighting.hpp"

extern char** environ;

namespace hmar {
namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find(sep, start), s.size());
    const std::string part = trim(s.substr(start, end - start));
    if (!part.empty()) out.push_back(part);
    start = end + 1;
  }
  return out;
}

void check_text(std::string_view key, std::string_view value) {
  if (key == "model.schedule") {
    ScaleSchedule::parse(value);
  } else if (key == "model.conditioning") {
    parse_conditioning(value);
  } else if (key == "model.tile_layout") {
    if (value != "block-aligned" && value != "uniform") throw InvalidArgument("expected block-aligned or uniform");
  } else if (key == "train.scheme") {
    parse_weighting(value);
  } else if (key == "train.optimizer") {
    parse_optimizer(value);
  } else if (key == "sample.steps") {
    parse_step_list(value, 0);
  } else if (key == "bench.schedules") {
    const auto names = split(value, ';');
    if (names.empty()) throw InvalidArgument("empty schedule list");
    for (const auto& n : names) ScaleSchedule::parse(n);
  }
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::schema() {
  static const std::vector<ConfigKey> keys = {
      {"seed", ValueType::size, "7", "root seed; stages draw from named substreams"},
      {"data.per_class", ValueType::size, "64", "samples per class"},
      {"data.grid", ValueType::size, "8", "latent grid side, a power of two >= 8"},
      {"data.shard_size", ValueType::size, "256", "samples per shard file"},
      {"msvq.iters", ValueType::size, "40", "Lloyd iterations per k-means round"},
      {"msvq.rounds", ValueType::size, "2", "residual collection / k-means rounds"},
      {"msvq.balance_scales", ValueType::flag, "true", "weight every scale equally in k-means"},
      {"msvq.pin_zero", ValueType::flag, "true", "keep code 0 at the origin"},
      {"msvq.shifts", ValueType::size, "32", "codeword shifts after each k-means round"},
      {"model.depth", ValueType::size, "2", "transformer blocks"},
      {"model.width", ValueType::size, "32", "embedding width"},
      {"model.heads", ValueType::size, "4", "attention heads"},
      {"model.vocab", ValueType::size, "32", "codebook size V"},
      {"model.classes", ValueType::size, "2", "number of classes"},
      {"model.latent_dim", ValueType::size, "3", "latent channels D"},
      {"model.mlp_ratio", ValueType::size, "4", "MLP hidden width / width"},
      {"model.schedule", ValueType::text, "1,2,4,8", "scale schedule (preset, sides or HxW list)"},
      {"model.conditioning", ValueType::text, "markovian", "markovian or full-prefix"},
      {"model.tile", ValueType::size, "64", "attention tile size"},
      {"model.tile_layout", ValueType::text, "block-aligned", "block-aligned or uniform"},
      {"train.steps", ValueType::size, "200", "next-scale phase steps"},
      {"train.batch", ValueType::size, "32", "examples per step"},
      {"train.lr", ValueType::real, "0.003", "peak learning rate"},
      {"train.min_lr_ratio", ValueType::real, "0.1", "cosine floor as a fraction of lr"},
      {"train.warmup", ValueType::size, "0", "linear warmup steps"},
      {"train.optimizer", ValueType::text, "adamw", "adamw or sgd"},
      {"train.beta1", ValueType::real, "0.9", "Adam beta1"},
      {"train.beta2", ValueType::real, "0.95", "Adam beta2"},
      {"train.momentum", ValueType::real, "0.9", "SGD momentum"},
      {"train.weight_decay", ValueType::real, "0.01", "decoupled weight decay on matrices"},
      {"train.clip_norm", ValueType::real, "1", "global gradient-norm clip, 0 disables"},
      {"train.scheme", ValueType::text, "log-normal", "scale weighting scheme"},
      {"train.lambda", ValueType::real, "0.3", "exp-decay rate"},
      {"train.mu", ValueType::real, fmt::format("{}", std::log(0.35)), "log-normal location over k/K"},
      {"train.sigma", ValueType::real, "0.8", "log-normal shape"},
      {"train.class_drop", ValueType::real, "0.1", "probability of the null class during training"},
      {"train.checkpoint_every", ValueType::size, "0", "periodic checkpoint interval, 0 disables"},
      {"train.masked_steps", ValueType::size, "200", "masked fine-tuning steps"},
      {"train.masked_lr", ValueType::real, "0.003", "masked fine-tuning peak learning rate"},
      {"train.gamma", ValueType::real, "-1", "fixed masking ratio; negative draws U(0,1] per example"},
      {"sample.count", ValueType::size, "8", "images per class"},
      {"sample.steps", ValueType::text, "default", "refinement steps per scale, or default"},
      {"sample.temperature", ValueType::real, "1", "softmax temperature"},
      {"sample.top_k", ValueType::size, "900", "top-k, clipped to V"},
      {"sample.top_p", ValueType::real, "0.96", "nucleus mass"},
      {"sample.guidance", ValueType::real, "1.5", "classifier-free guidance scale"},
      {"sample.remask", ValueType::flag, "false", "allow re-masking of finalized tokens"},
      {"sample.greedy", ValueType::flag, "false", "argmax instead of sampling"},
      {"bench.repeats", ValueType::size, "25", "timed repetitions"},
      {"bench.warmup", ValueType::size, "2", "untimed warm-up runs"},
      {"bench.heads", ValueType::size, "4", "heads"},
      {"bench.head_dim", ValueType::size, "64", "per-head width"},
      {"bench.tile", ValueType::size, "64", "tile size"},
      {"bench.f64", ValueType::flag, "false", "64-bit kernels"},
      {"bench.backward", ValueType::flag, "false", "time forward + backward"},
      {"bench.schedules", ValueType::text, "var256", "';'-separated schedules"},
  };
  return keys;
}

std::string RunConfig::env_name(std::string_view key) {
  std::string out = "HMAR_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

RunConfig::RunConfig() {
  for (const auto& k : schema()) values_[k.name] = k.fallback;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& keys = schema();
  const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
  if (it == keys.end()) throw InvalidArgument("unknown config key \"" + std::string(key) + "\"");
  const std::string v = trim(value);
  try {
    switch (it->type) {
      case ValueType::size: parse_size(v, key); break;
      case ValueType::real: parse_double(v, key); break;
      case ValueType::flag: parse_bool(v, key); break;
      case ValueType::text: check_text(key, v); break;
    }
  } catch (const std::exception& e) {
    throw InvalidArgument(fmt::format("config key {}: invalid value \"{}\": {}", key, v, e.what()));
  }
  values_[it->name] = v;
}

void RunConfig::load_text(std::string_view text, std::string_view what) {
  for (const auto& kv : parse_key_values(text, what)) {
    try {
      set(kv.key, kv.value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(fmt::format("{}:{}: {}", what, kv.line, e.what()));
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InvalidArgument("config file " + path.string() + " does not exist");
  load_text(io::read_file(path), path.string());
}

std::vector<std::string> RunConfig::apply_env(const std::vector<std::string>& env) {
  std::map<std::string, std::string> by_env;
  for (const auto& k : schema()) by_env[env_name(k.name)] = k.name;
  std::vector<std::string> applied;
  for (const std::string& entry : env) {
    if (entry.rfind("HMAR_", 0) != 0) continue;
    const std::size_t eq = entry.find('=');
    const std::string name = entry.substr(0, eq);
    const auto it = by_env.find(name);
    if (it == by_env.end()) throw InvalidArgument("environment variable " + name + " maps to no config key");
    set(it->second, eq == std::string::npos ? "" : entry.substr(eq + 1));
    applied.push_back(it->second);
  }
  return applied;
}

std::vector<std::string> RunConfig::apply_process_env() {
  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e) env.emplace_back(*e);
  return apply_env(env);
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("unknown config key \"" + std::string(key) + "\"");
  return it->second;
}

std::size_t RunConfig::size(std::string_view key) const { return parse_size(get(key), key); }
double RunConfig::real(std::string_view key) const { return parse_double(get(key), key); }
bool RunConfig::flag(std::string_view key) const { return parse_bool(get(key), key); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

RunConfig RunConfig::from_text(std::string_view text) {
  RunConfig c;
  c.load_text(text);
  return c;
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : values_) j[k] = v;
  return j.dump();
}

ModelConfig RunConfig::model_config() const {
  std::string text;
  for (const auto& [k, v] : values_) {
    if (k.rfind("model.", 0) == 0) text += k + " = " + v + "\n";
  }
  ModelConfig c = ModelConfig::from_text(text);
  c.validate();
  return c;
}

ToyCorpusOptions RunConfig::corpus_options() const {
  ToyCorpusOptions o;
  o.classes = size("model.classes");
  o.per_class = size("data.per_class");
  o.grid = size("data.grid");
  o.dim = size("model.latent_dim");
  o.seed = seed();
  return o;
}

MultiscaleFitOptions RunConfig::fit_options() const {
  MultiscaleFitOptions o;
  o.vocab = size("model.vocab");
  o.iters = size("msvq.iters");
  o.rounds = size("msvq.rounds");
  o.seed = stage_seed(seed(), "codebook");
  o.balance_scales = flag("msvq.balance_scales");
  o.pin_zero = flag("msvq.pin_zero");
  o.shifts = size("msvq.shifts");
  return o;
}

TrainConfig RunConfig::train_config(TrainPhase phase) const {
  TrainConfig t;
  t.phase = phase;
  const bool masked = phase == TrainPhase::masked;
  t.steps = size(masked ? "train.masked_steps" : "train.steps");
  t.batch = size("train.batch");
  t.scheme.kind = parse_weighting(get("train.scheme"));
  t.scheme.lambda = real("train.lambda");
  t.scheme.mu = real("train.mu");
  t.scheme.sigma = real("train.sigma");
  t.optim.kind = parse_optimizer(get("train.optimizer"));
  t.optim.lr = real(masked ? "train.masked_lr" : "train.lr");
  t.optim.min_lr_ratio = real("train.min_lr_ratio");
  t.optim.warmup = size("train.warmup");
  t.optim.beta1 = real("train.beta1");
  t.optim.beta2 = real("train.beta2");
  t.optim.momentum = real("train.momentum");
  t.optim.weight_decay = real("train.weight_decay");
  t.optim.clip_norm = real("train.clip_norm");
  t.class_drop = real("train.class_drop");
  t.gamma = real("train.gamma");
  t.seed = stage_seed(seed(), masked ? "train-masked" : "train");
  t.checkpoint_every = size("train.checkpoint_every");
  t.run_config = to_text();
  return t;
}

SampleSchedule RunConfig::sample_schedule(std::size_t scales) const {
  SampleSchedule s;
  s.steps = parse_step_list(get("sample.steps"), scales);
  s.temperature = real("sample.temperature");
  s.top_k = size("sample.top_k");
  s.top_p = real("sample.top_p");
  s.guidance = real("sample.guidance");
  s.allow_remask = flag("sample.remask");
  s.greedy = flag("sample.greedy");
  return s;
}

BenchOptions RunConfig::bench_options() const {
  BenchOptions o;
  o.repeats = size("bench.repeats");
  o.warmup = size("bench.warmup");
  o.heads = size("bench.heads");
  o.head_dim = size("bench.head_dim");
  o.tile = size("bench.tile");
  o.f64 = flag("bench.f64");
  o.backward = flag("bench.backward");
  o.seed = stage_seed(seed(), "bench");
  return o;
}

std::vector<BenchSchedule> RunConfig::bench_schedules() const {
  std::vector<BenchSchedule> out;
  for (const auto& n : split(get("bench.schedules"), ';')) out.push_back({n, ScaleSchedule::parse(n)});
  return out;
}

std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) { return splitmix64(root ^ fnv1a(stage)); }

std::vector<std::size_t> parse_step_list(std::string_view text, std::size_t scales) {
  const std::string t = trim(text);
  if (t == "default") return SampleSchedule::defaults(scales).steps;
  std::vector<std::size_t> out;
  for (const auto& part : split(t, ',')) out.push_back(parse_size(part, "sample.steps"));
  if (out.empty()) throw InvalidArgument("sample.steps: empty list");
  if (scales > 0 && out.size() > scales) {
    throw InvalidArgument(fmt::format("sample.steps: {} entries for {} scales", out.size(), scales));
  }
  return out;
}

}  // namespace hmar
