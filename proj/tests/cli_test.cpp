// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aems/aems.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("aems_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliResult run(const std::string& args, const std::string& stdin_text = "") {
    const std::string in = path("stdin.txt"), out = path("stdout.txt"), err = path("stderr.txt");
    std::ofstream(in) << stdin_text;
    const std::string cmd = std::string(AEMS_CLI_PATH) + " " + args + " <" + in + " >" + out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  // Small but complete training run shared by the eval and score tests.
  std::string trained_checkpoint() {
    EXPECT_EQ(run("synth --n 40 --seed 3 --out " + path("train.csv")).code, 0);
    std::ofstream(path("tiny.cfg")) << "num_train_epochs = 2\nbatch_size = 8\ncontrastive_learning_batch_size = 8\n"
                                       "warmup_steps = 2\nlearning_rate = 0.1\nd_model = 8\nn_heads = 2\n"
                                       "d_ff = 16\nn_layers = 1\n";
    const CliResult r = run("train --config " + path("tiny.cfg") + " --train " + path("train.csv") + " --out " +
                      path("model.ckpt"));
    EXPECT_EQ(r.code, 0) << r.err;
    return path("model.ckpt");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run("").code, 2); }

TEST_F(Cli, UnknownFlagIsUsageError) { EXPECT_EQ(run("synth --bogus 1 --out x.csv").code, 2); }

TEST_F(Cli, HelpExitsZero) {
  const CliResult r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train"), std::string::npos);
}

TEST_F(Cli, SynthIsDeterministicAndLoadable) {
  ASSERT_EQ(run("synth --n 50 --seed 9 --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run("synth --n 50 --seed 9 --out " + path("b.csv")).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  const aems::Corpus c = aems::load_corpus(path("a.csv"), aems::ellipse_rubric());
  EXPECT_EQ(c.size(), 50u);
  EXPECT_NO_THROW(aems::validate_corpus(c));
}

TEST_F(Cli, SynthTwoThousandWithinBudget) {
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run("synth --n 2000 --out " + path("big.csv")).code, 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 10.0);
}

TEST_F(Cli, SynthUnwritablePathIsDataError) { EXPECT_EQ(run("synth --n 20 --out /nonexistent/dir/x.csv").code, 2); }

TEST_F(Cli, TrainPrintsResolvedPresetToStderr) {
  ASSERT_EQ(run("synth --n 20 --out " + path("t.csv")).code, 0);
  // A missing required flag fails before any work, after nothing is written.
  const CliResult r = run("train --config distilbert-style --train " + path("t.csv"));
  EXPECT_EQ(r.code, 2);
  std::ofstream(path("one.cfg")) << "preset = distilbert-style\nnum_train_epochs = 1\nd_model = 8\nn_heads = 2\n"
                                    "d_ff = 8\nn_layers = 0\nbatch_size = 10\n";
  const CliResult ok = run("train --config " + path("one.cfg") + " --train " + path("t.csv") + " --out " + path("m.ckpt"));
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.err.find("# warmup_steps = 500"), std::string::npos) << ok.err;
  EXPECT_NE(ok.err.find("# contrastive_learning_batch_size = 130"), std::string::npos);
  EXPECT_NE(ok.err.find("# learning_rate = 2e-05"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("m.ckpt.log.csv")));
}

TEST_F(Cli, TrainMissingColumnIsDataError) {
  std::ofstream(path("bad.csv")) << "essay_id,full_text,cohesion\ne1,hello,3.0\n";
  const CliResult r = run("train --train " + path("bad.csv") + " --out " + path("m.ckpt"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing column"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainBadConfigIsDataError) {
  ASSERT_EQ(run("synth --n 20 --out " + path("t.csv")).code, 0);
  std::ofstream(path("bad.cfg")) << "learning_rate = -1\n";
  EXPECT_EQ(run("train --config " + path("bad.cfg") + " --train " + path("t.csv") + " --out " + path("m.ckpt")).code,
            2);
}

TEST_F(Cli, TrainDivergenceIsNumericAbort) {
  ASSERT_EQ(run("synth --n 20 --out " + path("t.csv")).code, 0);
  std::ofstream(path("hot.cfg")) << "learning_rate = 1e300\nwarmup_steps = 1\nnum_train_epochs = 3\nd_model = 8\n"
                                    "n_heads = 2\nd_ff = 8\nn_layers = 1\nbatch_size = 10\n"
                                    "contrastive_learning_batch_size = 10\n";
  const CliResult r = run("train --config " + path("hot.cfg") + " --train " + path("t.csv") + " --out " + path("m.ckpt"));
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("batch"), std::string::npos);
}

TEST_F(Cli, EvalTextAndCsv) {
  const std::string ckpt = trained_checkpoint();
  ASSERT_EQ(run("synth --n 30 --seed 4 --out " + path("test.csv")).code, 0);
  const CliResult text = run("eval --ckpt " + ckpt + " --test " + path("test.csv"));
  ASSERT_EQ(text.code, 0) << text.err;
  EXPECT_NE(text.out.find("Dimension"), std::string::npos);
  EXPECT_NE(text.out.find("conventions"), std::string::npos);
  const CliResult csv = run("eval --ckpt " + ckpt + " --test " + path("test.csv") + " --format csv");
  ASSERT_EQ(csv.code, 0);
  const aems::MetricsReport rep = aems::parse_report_csv(csv.out);
  EXPECT_EQ(rep.rows.size(), 6u);
  std::ofstream(path("metrics.csv")) << csv.out;
  const CliResult again = run("report --in " + path("metrics.csv") + " --format csv");
  EXPECT_EQ(again.out, csv.out);
  EXPECT_EQ(run("report --in " + path("metrics.csv")).code, 0);
}

TEST_F(Cli, EvalCorruptCheckpointIsDataError) {
  std::ofstream(path("junk.ckpt")) << "not a checkpoint";
  ASSERT_EQ(run("synth --n 20 --out " + path("t.csv")).code, 0);
  const CliResult r = run("eval --ckpt " + path("junk.ckpt") + " --test " + path("t.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("magic"), std::string::npos) << r.err;
}

TEST_F(Cli, ScoreIsDeterministicAndLegal) {
  const std::string ckpt = trained_checkpoint();
  const std::string essay = "However, schools teach many lessons. Moreover the teachers are good.";
  std::ofstream(path("essay.txt")) << essay;
  const CliResult a = run("score --ckpt " + ckpt + " --essay " + path("essay.txt"));
  const CliResult b = run("score --ckpt " + ckpt, essay);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  std::istringstream lines(a.out);
  std::string name;
  double band, raw;
  std::size_t n = 0;
  const aems::RubricSpec r = aems::ellipse_rubric();
  while (lines >> name >> band >> raw) {
    EXPECT_EQ(name, r.dimensions[n]);
    EXPECT_TRUE(r.band_index(band)) << band;
    ++n;
  }
  EXPECT_EQ(n, 6u);
}

TEST_F(Cli, ScoreEmptyEssayWarns) {
  const std::string ckpt = trained_checkpoint();
  const CliResult r = run("score --ckpt " + ckpt, "");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST_F(Cli, GradcheckPassesQuickly) {
  const auto t0 = std::chrono::steady_clock::now();
  const CliResult r = run("gradcheck");
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("full_loss"), std::string::npos);
}

TEST_F(Cli, GradcheckSabotageFails) {
  const CliResult r = run("gradcheck --sabotage");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("gradient check failed"), std::string::npos);
}
