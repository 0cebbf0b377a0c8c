#include <gtest/gtest.h>

#include <filesystem>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "hmar/cli/commands.hpp"
#include "hmar/common/binary_io.hpp"
#include "hmar/msvq/serialize.hpp"
#include "hmar/training/trainer.hpp"

namespace hmar::cli {
namespace {

using Json = nlohmann::json;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hmar-cli-" + name);
  fs::remove_all(p);
  return p;
}

std::vector<Json> json_lines(const std::string& text) {
  std::vector<Json> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) out.push_back(Json::parse(line));
  }
  return out;
}

RunConfig quick_config() {
  RunConfig rc;
  rc.load_text(
      "data.per_class = 16\n"
      "model.width = 16\n"
      "model.heads = 2\n"
      "train.steps = 12\n"
      "train.batch = 8\n"
      "train.masked_steps = 8\n"
      "sample.count = 1\n");
  return rc;
}

TEST(RunConfig, UnknownKeysAndBadValuesNameTheKey) {
  RunConfig rc;
  try {
    rc.set("train.lrr", "1");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("train.lrr"), std::string::npos);
  }
  EXPECT_THROW(rc.set("train.steps", "-3"), InvalidArgument);
  EXPECT_THROW(rc.set("model.conditioning", "sideways"), InvalidArgument);
  try {
    rc.load_text("seed = 3\nmodel.depth = 2\nbogus.key = 1\n");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("config:3"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, PrecedenceAndRoundTrip) {
  EXPECT_EQ(RunConfig::env_name("train.lr"), "HMAR_TRAIN_LR");
  RunConfig rc;
  EXPECT_EQ(rc.get("train.lr"), "0.003");
  rc.load_text("train.lr = 0.01\ntrain.steps = 50\n");
  const auto applied = rc.apply_env({"PATH=/bin", "HMAR_TRAIN_LR=0.02", "HMAR_SEED=11"});
  EXPECT_EQ(applied.size(), 2u);
  rc.set("seed", "12");
  EXPECT_EQ(rc.real("train.lr"), 0.02);
  EXPECT_EQ(rc.size("train.steps"), 50u);
  EXPECT_EQ(rc.seed(), 12u);
  EXPECT_THROW(rc.apply_env({"HMAR_TRAIN_NOPE=1"}), InvalidArgument);
  EXPECT_EQ(RunConfig::from_text(rc.to_text()), rc);
  const Json j = Json::parse(rc.to_json());
  EXPECT_EQ(j.size(), RunConfig::schema().size());
  EXPECT_EQ(j["train.lr"], "0.02");
}

TEST(RunConfig, TypedViews) {
  RunConfig rc;
  rc.load_text("model.schedule = 1,2,4\nsample.steps = 0,2,1\ntrain.masked_lr = 0.001\n");
  EXPECT_EQ(rc.model_config().schedule.scales(), 3u);
  EXPECT_EQ(rc.sample_schedule(3).steps, (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_EQ(parse_step_list("default", 10), SampleSchedule::defaults(10).steps);
  EXPECT_EQ(parse_step_list("1,2", 3), (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(parse_step_list("1,2,3,4", 3), InvalidArgument);
  EXPECT_EQ(rc.train_config(TrainPhase::masked).optim.lr, 0.001);
  EXPECT_NE(stage_seed(7, "train"), stage_seed(7, "init"));
  EXPECT_NE(rc.train_config(TrainPhase::nextscale).seed, rc.train_config(TrainPhase::masked).seed);
}

TEST(GenData, RefusesWithoutForceAndIsByteIdentical) {
  const fs::path a = scratch("gen-a"), b = scratch("gen-b");
  RunConfig rc;
  std::ostringstream log;
  gen_data(rc, a, false, log);
  gen_data(rc, b, false, log);
  EXPECT_THROW(gen_data(rc, a, false, log), InvalidState);
  gen_data(rc, a, true, log);
  std::size_t shards = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(io::read_file(e.path()), io::read_file(b / e.path().filename())) << e.path();
    shards += e.path().extension() == ".hmds";
  }
  EXPECT_GE(shards, 1u);
  const Json m = Json::parse(io::read_file(a / "manifest.json"));
  EXPECT_EQ(m["class_histogram"], Json::array({64, 64}));
  EXPECT_EQ(m["seed"], 7);
}

TEST(GenData, CoarseTokensSeparateTheClasses) {
  const fs::path w = scratch("purity");
  RunConfig rc;
  std::ostringstream log;
  gen_data(rc, w / "data", false, log);
  const Codebook cb = fit_codebook(rc, w / "data", w / "cb", log);
  const auto ex = encode_corpus(load_dataset(w / "data"), cb, rc.model_config().schedule);
  std::map<TokenId, std::map<std::size_t, std::size_t>> by_token;
  for (const auto& e : ex) ++by_token[e.tokens.scale(0)[0]][e.label];
  std::size_t majority = 0;
  for (const auto& [tok, counts] : by_token) {
    std::size_t best = 0;
    for (const auto& [label, n] : counts) best = std::max(best, n);
    majority += best;
  }
  EXPECT_GT(static_cast<double>(majority) / static_cast<double>(ex.size()), 0.9);
  // Each class's coarse token is also predictable from the class alone.
  std::map<std::size_t, std::map<TokenId, std::size_t>> by_class;
  for (const auto& e : ex) ++by_class[e.label][e.tokens.scale(0)[0]];
  for (const auto& [label, counts] : by_class) {
    std::size_t best = 0, total = 0;
    for (const auto& [tok, n] : counts) {
      best = std::max(best, n);
      total += n;
    }
    EXPECT_GT(static_cast<double>(best) / static_cast<double>(total), 0.9) << "class " << label;
  }
}

TEST(GenData, WithoutCodewordShiftsAClassSplitsAcrossTwoCoarseCodes) {
  // Regression pin for the default corpus: plain Lloyd leaves two codes
  // about 0.01 apart inside the class-0 coarse cloud.
  const fs::path w = scratch("no-shift");
  RunConfig rc;
  rc.set("msvq.shifts", "0");
  std::ostringstream log;
  gen_data(rc, w / "data", false, log);
  const Codebook cb = fit_codebook(rc, w / "data", w / "cb", log);
  std::map<std::size_t, std::set<TokenId>> used;
  for (const auto& e : encode_corpus(load_dataset(w / "data"), cb, rc.model_config().schedule)) {
    used[e.label].insert(e.tokens.scale(0)[0]);
  }
  EXPECT_EQ(used[0].size(), 2u);
}

TEST(Analyze, SequenceLengthAndSparsity) {
  RunConfig rc;
  std::ostringstream out, text;
  analyze(rc, AnalyzeRequest{"seqlen", {"var256"}, {}, {}, 4}, out, text);
  auto j = json_lines(out.str());
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["N"], 680);
  EXPECT_NEAR(j[0]["ratio"].get<double>(), 2.656, 5e-4);
  out.str("");
  analyze(rc, AnalyzeRequest{"sparsity", {"var256"}, {}, {}, 4}, out, text);
  j = json_lines(out.str());
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["nnz_block_causal"], 286434);
  EXPECT_EQ(j[0]["nnz_block_diagonal"], 110468);
  EXPECT_NEAR(j[0]["density_block_causal"].get<double>(), 0.6194, 1e-4);
  EXPECT_NEAR(j[0]["density_block_diagonal"].get<double>(), 0.2389, 1e-4);
  EXPECT_THROW(analyze(rc, AnalyzeRequest{"histogram", {}, {}, {}, 4}, out, text), InvalidArgument);
}

TEST(Analyze, OneTokenCorpusHasZeroEntropy) {
  const fs::path w = scratch("entropy");
  fs::create_directories(w);
  const auto sched = ScaleSchedule::toy();
  save_pyramids(w / "p.msvq", std::vector<TokenPyramid>(5, TokenPyramid(sched)));
  RunConfig rc;
  std::ostringstream out, text;
  analyze(rc, AnalyzeRequest{"codebook", {}, w / "p.msvq", {}, 4}, out, text);
  const auto j = json_lines(out.str());
  ASSERT_EQ(j.size(), sched.scales());
  for (const auto& r : j) {
    EXPECT_EQ(r["entropy_bits"].get<double>(), 0.0);
    EXPECT_EQ(r["used"], 1);
  }
  try {
    analyze(rc, AnalyzeRequest{"codebook", {}, w / "missing.msvq", {}, 4}, out, text);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("missing.msvq"), std::string::npos);
  }
}

TEST(Pipeline, DryRunHasNoSideEffects) {
  const fs::path w = scratch("dry");
  std::ostringstream out, log;
  pipeline(RunConfig{}, PipelineOptions{w, true}, out, log);
  EXPECT_FALSE(fs::exists(w));
  const auto plan = json_lines(out.str());
  ASSERT_EQ(plan.size(), 7u);
  EXPECT_EQ(plan.front()["stage"], "gen-data");
  EXPECT_EQ(plan.back()["stage"], "analyze");
  for (const auto& s : plan) EXPECT_EQ(s["action"], "run");
}

TEST(Pipeline, RunsResumesAndTagsFailures) {
  const fs::path w = scratch("pipeline");
  const RunConfig rc = quick_config();
  std::ostringstream out, log;
  pipeline(rc, PipelineOptions{w, false}, out, log);
  const Layout L = Layout::in(w);
  for (const auto& s : json_lines(out.str())) EXPECT_EQ(s["status"], "ran") << s.dump();
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(L.samples)) images += e.path().extension() == ".ppm";
  EXPECT_EQ(images, 2u);
  EXPECT_EQ(json_lines(io::read_file(L.samples / "manifest.jsonl")).size(), 2u);

  const auto header = json_lines(io::read_file(L.metrics1)).front();
  EXPECT_EQ(header["config"]["train.steps"], "12");
  EXPECT_EQ(load_checkpoint(L.phase2).run_config, rc.to_text());

  const std::string phase1 = io::read_file(L.phase1);
  fs::remove_all(L.samples);
  std::ostringstream again;
  pipeline(rc, PipelineOptions{w, false}, again, log);
  std::map<std::string, std::string> status;
  for (const auto& s : json_lines(again.str())) status[s["stage"]] = s["status"];
  EXPECT_EQ(status["sample"], "ran");
  for (const char* s : {"gen-data", "fit-codebook", "encode", "train", "finetune-mask"}) EXPECT_EQ(status[s], "skipped");
  EXPECT_EQ(io::read_file(L.phase1), phase1);

  fs::remove(L.phase1);
  fs::remove(L.phase2);
  io::write_file_atomic(L.pyramids, "junk");
  try {
    pipeline(rc, PipelineOptions{w, false}, again, log);
    FAIL();
  } catch (const StageFailure& e) {
    EXPECT_EQ(e.stage(), "train");
    EXPECT_EQ(e.code(), kExitStageFailure);
    EXPECT_EQ(std::string(e.what()).rfind("stage train: ", 0), 0u) << e.what();
  }
}

TEST(Train, CheckpointConfigReproducesPhaseOneWeights) {
  const fs::path w = scratch("repro");
  const RunConfig rc = quick_config();
  std::ostringstream log;
  gen_data(rc, w / "data", false, log);
  fit_codebook(rc, w / "data", w / "cb", log);
  encode_corpus_file(rc, w / "data", w / "cb", w / "p.msvq", log);
  const Checkpoint a = train_phase1(rc, w / "data", w / "cb", w / "p.msvq", w / "a.hmar", {}, log);
  const RunConfig echoed = RunConfig::from_text(load_checkpoint(w / "a.hmar").run_config);
  const Checkpoint b = train_phase1(echoed, w / "data", w / "cb", w / "p.msvq", w / "b.hmar", {}, log);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(io::read_file(w / "a.hmar"), io::read_file(w / "b.hmar"));
}

TEST(Commands, SampleEditAndTeacherForceOnATinyRun) {
  const fs::path w = scratch("commands");
  const RunConfig rc = quick_config();
  std::ostringstream out, log;
  pipeline(rc, PipelineOptions{w, false}, out, log);
  const Layout L = Layout::in(w);

  SampleRequest sr{L.phase1, L.codebook, w / "s", {1}, 3, std::string("0"), 5};
  EXPECT_EQ(sample(rc, sr, log), 3u);
  EXPECT_TRUE(fs::exists(w / "s" / "class1-002.ppm"));
  sr.steps = "default";
  EXPECT_THROW(sample(rc, sr, log), InvalidState);

  std::ostringstream tf;
  teacher_force_cmd(rc, TeacherForceRequest{L.phase2, L.codebook, L.data, {}, 0, {}, 4, {}}, tf);
  std::vector<Json> summaries;
  for (const auto& j : json_lines(tf.str())) {
    if (j.contains("summary")) summaries.push_back(j);
  }
  ASSERT_EQ(summaries.size(), 5u);
  EXPECT_EQ(summaries.back()["mean_error"].get<double>(), 0.0);

  EditRequest er{L.phase2, L.codebook, L.pyramids, w / "e", 1, {}, {0.0, 0.0, 1.0, 0.5}, false, 1, 3};
  edit_cmd(rc, er, log);
  const Json s = Json::parse(io::read_file(w / "e" / "summary.json"));
  EXPECT_EQ(s["pinned_altered"], 0);
  EXPECT_GT(s["flagged"].get<int>(), 0);
  er.box.clear();
  EXPECT_THROW(edit_cmd(rc, er, log), InvalidArgument);
}

TEST(Commands, ExitCodesAndPixmaps) {
  EXPECT_EQ(exit_code(InvalidArgument("x")), kExitInvalidConfig);
  EXPECT_EQ(exit_code(NumericFailure("x")), kExitNumericFailure);
  EXPECT_EQ(exit_code(FormatError("x")), kExitStageFailure);
  EXPECT_EQ(exit_code(StageFailure("train", "x", kExitNumericFailure)), kExitNumericFailure);

  LatentGrid g(2, 3, 1);
  g.at(0, 0, 0) = 10.0;
  g.at(1, 2, 0) = -1.0;
  const std::string ppm = render_ppm(g, 2);
  const std::string head = "P6\n6 4\n255\n";
  ASSERT_EQ(ppm.size(), head.size() + 6 * 4 * 3);
  EXPECT_EQ(ppm.substr(0, head.size()), head);
  EXPECT_EQ(static_cast<unsigned char>(ppm[head.size()]), 255);
  EXPECT_EQ(static_cast<unsigned char>(ppm.back()), 64);
}

}  // namespace
}  // namespace hmar::cli
