#include <gtest/gtest.h>

#include <filesystem>

#include "json.hpp"
#include "spnas/cli.hpp"
#include "spnas/io.hpp"

using namespace spnas;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "spnas");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("spnas_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    RunConfig c;
    c.macro.blocks = {{2, 8, 1}};
    c.macro.stem_channels = 8;
    c.macro.head_channels = 16;
    c.macro.input_resolution = 8;
    c.search.epochs = 1;
    c.search.batch_size = 16;
    c.train.epochs = 1;
    c.train.batch_size = 16;
    c.data.n_train = 32;
    c.data.n_eval = 16;
    cfg_ = path("run.cfg");
    write_file_atomic(cfg_, write_config(c));
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::string cfg_;
};

}  // namespace

TEST_F(Cli, SearchThenDeriveIsIdempotent) {
  ASSERT_EQ(run({"search", "--config", cfg_, "--out", path("s"), "--seed", "4"}), 0);
  for (const char* f : {"architecture.json", "trace.csv", "snapshots.jsonl", "checkpoint.spnas"})
    EXPECT_TRUE(fs::exists(dir_ / "s" / f)) << f;
  ASSERT_EQ(run({"derive", "--checkpoint", path("s/checkpoint.spnas"), "--out", path("d.json")}), 0);
  EXPECT_EQ(read_text_file(path("d.json")), read_text_file(path("s/architecture.json")));
  const std::string trace = read_text_file(path("s/trace.csv"));
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "step,ce,runtime_ms,total");
}

TEST_F(Cli, PredictRuntimeOfAllSkipIsTheOverhead) {
  ASSERT_EQ(run({"lut", "synth", "--config", cfg_, "--out", path("lut.csv")}), 0);
  const RunConfig c = read_config(read_text_file(cfg_));
  ArchitectureFile f{{c.macro, {LayerDecision::skip(), LayerDecision::skip()}}, {}};
  write_file_atomic(path("a.json"), write_architecture(f));
  testing::internal::CaptureStdout();
  ASSERT_EQ(run({"predict-runtime", "--arch", path("a.json"), "--lut", path("lut.csv")}), 0);
  const std::string out = testing::internal::GetCapturedStdout();
  EXPECT_EQ(std::stod(out), read_lut(read_text_file(path("lut.csv"))).fixed_overhead_ms);
}

TEST_F(Cli, LutValidateSelfConsistent) {
  ASSERT_EQ(run({"lut", "synth", "--config", cfg_, "--out", path("lut.csv")}), 0);
  ASSERT_EQ(run({"lut", "sample", "--config", cfg_, "--lut", path("lut.csv"), "--noise", "0", "-n", "20", "--out", path("s.csv")}), 0);
  testing::internal::CaptureStdout();
  ASSERT_EQ(run({"lut", "validate", "--config", cfg_, "--lut", path("lut.csv"), "--samples", path("s.csv")}), 0);
  const std::string out = testing::internal::GetCapturedStdout();
  EXPECT_NE(out.find("RMSE 0.00 ms"), std::string::npos) << out;
}

TEST_F(Cli, TrainEvalAndBaselineWriteResults) {
  ASSERT_EQ(run({"search", "--config", cfg_, "--out", path("s")}), 0);
  ASSERT_EQ(run({"train", "--config", cfg_, "--arch", path("s/architecture.json"), "--out", path("t.json")}), 0);
  const auto t = nlohmann::json::parse(read_text_file(path("t.json")));
  EXPECT_TRUE(t["eval"]["top1"].is_number());
  ASSERT_EQ(run({"eval", "--config", cfg_, "--checkpoint", path("s/checkpoint.spnas"), "--out", path("e.json")}), 0);
  ASSERT_EQ(run({"random-baseline", "--config", cfg_, "--window", "0:inf", "-n", "3", "--out", path("r.json")}), 0);
  EXPECT_EQ(nlohmann::json::parse(read_text_file(path("r.json")))["acceptance_rate"], 1.0);
}

TEST_F(Cli, ErrorsAreReportedWithNonZeroExit) {
  testing::internal::CaptureStderr();
  EXPECT_NE(run({"search", "--config", path("missing.cfg"), "--out", path("x")}), 0);
  write_file_atomic(path("bad.cfg"), "search.nope = 1\n");
  EXPECT_NE(run({"search", "--config", path("bad.cfg"), "--out", path("x")}), 0);
  EXPECT_NE(run({"frobnicate"}), 0);
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("line 1"), std::string::npos) << err;
  EXPECT_FALSE(fs::exists(dir_ / "x" / "architecture.json"));
}
