#include <gtest/gtest.h>

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "cli.hpp"
#include "pfm/checkpoint.hpp"
#include "pfm/metrics.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using pfm::testing::ScratchDir;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::initializer_list<std::string> args) {
  std::vector<std::string> storage{"pfm"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : storage) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = pfm::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string tree_contents(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.string() + "\n" + slurp(root / f);
  return all;
}

// Small corpus with flows, shared by the pipeline tests.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new ScratchDir("cli");
    corpus_ = (*dir_ / "corpus").string();
    ASSERT_EQ(run({"corpus-gen", "--out", corpus_, "--clips", "6", "--frames", "12", "--seed", "5"}).code, 0);
    ASSERT_EQ(run({"flow-precompute", "--corpus", corpus_}).code, 0);
    const Outcome t = run({"train-unsup", "--corpus", corpus_, "--out", (*dir_ / "unsup").string(), "--set",
                           "train.schedule=0.01:20", "--set", "train.log_interval=10", "--set",
                           "train.checkpoint_interval=10", "--set", "train.validation_samples=30"});
    ASSERT_EQ(t.code, 0) << t.err;
    train_out_ = t.out;
  }
  static void TearDownTestSuite() { delete dir_; }

  static ScratchDir* dir_;
  static std::string corpus_;
  static std::string train_out_;
};

ScratchDir* CliPipeline::dir_ = nullptr;
std::string CliPipeline::corpus_;
std::string CliPipeline::train_out_;

}  // namespace

TEST(Cli, HelpExitsZero) {
  const Outcome o = run({"--help"});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("train-unsup"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  const Outcome o = run({"train-everything"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("Usage"), std::string::npos);
}

TEST(Cli, UnknownFlagIsUsageError) {
  ScratchDir d("cli_flag");
  EXPECT_EQ(run({"corpus-gen", "--out", (d / "c").string(), "--colour", "red"}).code, 1);
}

TEST(Cli, MissingRequiredFlagIsUsageError) { EXPECT_EQ(run({"train-unsup", "--out", "x"}).code, 1); }

TEST(Cli, UnknownConfigKeyIsRejectedBeforeWork) {
  ScratchDir d("cli_key");
  const Outcome o = run({"corpus-gen", "--out", (d / "c").string(), "--set", "train.learning_rate=3"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("train.learning_rate"), std::string::npos);
  EXPECT_FALSE(fs::exists(d / "c" / "index.txt"));
}

TEST(Cli, ConfigFileKeysAreChecked) {
  ScratchDir d("cli_cfg");
  std::ofstream(d / "bad.config") << "# comment\n\ncorpus.clips=4\ncorpus.colour=blue\n";
  EXPECT_EQ(run({"corpus-gen", "--out", (d / "c").string(), "--config", (d / "bad.config").string()}).code, 1);
  std::ofstream(d / "malformed.config") << "corpus.clips 4\n";
  EXPECT_EQ(run({"corpus-gen", "--out", (d / "c").string(), "--config", (d / "malformed.config").string()}).code, 1);
}

TEST(Cli, BadValueTypeIsRejected) {
  ScratchDir d("cli_val");
  EXPECT_EQ(run({"corpus-gen", "--out", (d / "c").string(), "--set", "corpus.frames=many"}).code, 1);
  EXPECT_EQ(run({"corpus-gen", "--out", (d / "c").string(), "--set", "train.schedule=0.1"}).code, 1);
}

TEST(Cli, EffectiveConfigIsWrittenAndReplays) {
  ScratchDir d("cli_replay");
  ASSERT_EQ(run({"corpus-gen", "--out", (d / "a").string(), "--clips", "3", "--frames", "6", "--seed", "9"}).code, 0);
  const fs::path cfg = d / "a" / "corpus-gen.config";
  ASSERT_TRUE(fs::exists(cfg));
  const std::string text = slurp(cfg);
  for (const char* key : {"seed=9\n", "corpus.clips=3\n", "train.schedule=", "arch.stage1.kernel=", "flow.alpha="})
    EXPECT_NE(text.find(key), std::string::npos) << key;
  ASSERT_EQ(run({"corpus-gen", "--out", (d / "b").string(), "--config", cfg.string()}).code, 0);
  EXPECT_EQ(slurp(d / "b" / "corpus-gen.config"), text);
}

TEST(Cli, CorpusGenIsDeterministic) {
  ScratchDir d("cli_det");
  for (const char* name : {"a", "b"})
    ASSERT_EQ(run({"corpus-gen", "--out", (d / name).string(), "--clips", "3", "--frames", "6", "--seed", "4"}).code, 0);
  EXPECT_EQ(tree_contents(d / "a"), tree_contents(d / "b"));
  ASSERT_EQ(run({"corpus-gen", "--out", (d / "c").string(), "--clips", "3", "--frames", "6", "--seed", "5"}).code, 0);
  EXPECT_NE(slurp(d / "a" / "clip_0000" / "frames" / "00000.pgm"), slurp(d / "c" / "clip_0000" / "frames" / "00000.pgm"));
}

TEST(Cli, MissingCheckpointIsRejected) {
  ScratchDir d("cli_missing");
  EXPECT_EQ(run({"viz-filters", "--ckpt", (d / "none.mpck").string(), "--out", (d / "f.pgm").string()}).code, 1);
}

TEST_F(CliPipeline, TrainingReportsFinalAccuracy) {
  EXPECT_NE(train_out_.find("iter=10 loss="), std::string::npos);
  EXPECT_NE(train_out_.find("final val_acc="), std::string::npos);
  EXPECT_NE(train_out_.find("chance=0.667"), std::string::npos);
  const fs::path run_dir = *dir_ / "unsup";
  EXPECT_TRUE(fs::exists(run_dir / "unsup.mpck"));
  EXPECT_TRUE(fs::exists(run_dir / "train.log"));
  EXPECT_EQ(pfm::read_metrics_kv(run_dir / "metrics.kv").count("binary_acc"), 1u);
}

TEST_F(CliPipeline, PoseFinetuneAndEvalAgree) {
  const std::string out = (*dir_ / "pose").string();
  const Outcome f = run({"finetune-pose", "--corpus", corpus_, "--out", out, "--init",
                         (*dir_ / "unsup" / "unsup.mpck").string(), "--set", "pose.schedule=0.03:10"});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_NE(f.out.find("upper_arms"), std::string::npos);
  EXPECT_NE(f.out.find("l_wrist"), std::string::npos);
  EXPECT_TRUE(fs::exists(fs::path(out) / "pdj_curve.ppm"));
  const auto metrics = pfm::read_metrics_kv(fs::path(out) / "metrics.kv");
  EXPECT_EQ(metrics.count("pcp.upper_arms"), 1u);
  EXPECT_EQ(metrics.count("pcp.lower_arms"), 1u);
  EXPECT_EQ(metrics.count("pdj.l_wrist.0.2"), 1u);

  const Outcome e = run({"eval-pose", "--corpus", corpus_, "--ckpt", out + "/pose.mpck", "--out", (*dir_ / "pe").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(slurp(*dir_ / "pe" / "pose_eval.txt"), slurp(fs::path(out) / "pose_eval.txt"));
}

TEST_F(CliPipeline, ActionFinetuneReportsAccuracy) {
  const std::string out = (*dir_ / "action").string();
  const Outcome f = run({"finetune-action", "--corpus", corpus_, "--out", out, "--set", "action.schedule=0.01:5", "--set",
                         "action.eval.num_frames=2"});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_NE(f.out.find("samples_per_clip=20"), std::string::npos);
  const double acc = pfm::read_metrics_kv(fs::path(out) / "metrics.kv").at("action_acc");
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
  const Outcome e = run({"eval-action", "--corpus", corpus_, "--ckpt", out + "/action.mpck"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("samples_per_clip=20"), std::string::npos);
}

TEST_F(CliPipeline, CheckpointArchitectureMustMatch) {
  const Outcome o = run({"eval-pose", "--corpus", corpus_, "--ckpt", (*dir_ / "unsup" / "unsup.mpck").string(), "--out",
                         (*dir_ / "wrong").string()});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("pose.heat"), std::string::npos);
}

TEST_F(CliPipeline, ProbeWritesMetrics) {
  const std::string out = (*dir_ / "probe").string();
  const Outcome o = run({"probe-nn", "--corpus", corpus_, "--ckpt", (*dir_ / "unsup" / "unsup.mpck").string(), "--out",
                         out, "--set", "probe.num_queries=8", "--set", "probe.permutations=100"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto m = pfm::read_metrics_kv(fs::path(out) / "metrics.kv");
  EXPECT_GT(m.at("nn.p_value"), 0.0);
  EXPECT_LE(m.at("nn.p_value"), 1.0);
  EXPECT_GE(m.at("nn.random_distance"), 0.0);
}

TEST_F(CliPipeline, VisualisationsProduceImages) {
  const fs::path pgm = *dir_ / "viz" / "filters.pgm";
  fs::create_directories(pgm.parent_path());
  ASSERT_EQ(run({"viz-filters", "--ckpt", (*dir_ / "unsup" / "unsup.mpck").string(), "--out", pgm.string()}).code, 0);
  const pfm::GrayImage img = pfm::read_pgm(pgm);
  EXPECT_GT(img.width, 0);
  const fs::path ppm = *dir_ / "viz" / "flow.ppm";
  ASSERT_EQ(run({"viz-flow", "--corpus", corpus_, "--clip", "clip_0002", "--frame", "3", "--out", ppm.string()}).code, 0);
  EXPECT_EQ(slurp(ppm).rfind("P6\n96 96\n", 0), 0u);
  EXPECT_EQ(run({"viz-flow", "--corpus", corpus_, "--clip", "clip_0002", "--frame", "11", "--out", ppm.string()}).code, 1);
}
