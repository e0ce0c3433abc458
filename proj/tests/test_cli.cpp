#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <string>

#include "test_support.hpp"

using coftad::testing::read_file;
using coftad::testing::TempDir;
using coftad::testing::write_file;

namespace {

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("'") + COFTAD_CLI_PATH + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallRun = R"(
[dataset]
protocol = "synthetic"
k = 3
reserve_normal = 9
reserve_abnormal = 6

[synth]
n_normal = 12
n_abnormal = 6
image_size = 16

[encoder]
arch = "tiny-cnn"
input_size = 16
tiny_channels = [4, 8]
projector_hidden_dim = 16
projector_out_dim = 8
predictor_hidden_dim = 16

[train]
steps = 2
batch_size = 4

[density]
n_a = 2
)";

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
  TempDir dir;
  EXPECT_EQ(run_cli("", dir / "log"), 2);
  EXPECT_EQ(run_cli("frobnicate", dir / "log"), 2);
  EXPECT_EQ(run_cli("run --config /no/such/file.toml --out x", dir / "log"), 2);
  EXPECT_EQ(run_cli("--help", dir / "log"), 0);
  EXPECT_NE(read_file(dir / "log").find("fit-density"), std::string::npos);
}

TEST(Cli, Validate) {
  TempDir dir;
  EXPECT_EQ(run_cli(std::string("validate --config '") + COFTAD_SOURCE_DIR + "/configs/demo.toml'", dir / "log"), 0);
  write_file(dir / "bad.toml", "[train]\nlamda_pp = 0.5\nlambda_np = -1.0\n");
  EXPECT_EQ(run_cli("validate --config '" + (dir / "bad.toml").string() + "'", dir / "log"), 2);
  const std::string out = read_file(dir / "log");
  EXPECT_NE(out.find("did you mean 'lambda_pp'"), std::string::npos) << out;
  EXPECT_NE(out.find("train.lambda_np"), std::string::npos) << out;
}

TEST(Cli, Synth) {
  TempDir dir;
  ASSERT_EQ(run_cli("synth --out '" + (dir / "ds").string() + "' --n-normal 3 --n-abnormal 2 --image-size 16 --seed 4",
                    dir / "log"),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir / "ds/normal/normal_0002.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "ds/abnormal/abnormal_0001.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "ds/synth.json"));
  EXPECT_EQ(run_cli("synth --out '" + (dir / "ds2").string() + "' --shape hexagon", dir / "log"), 2);
}

TEST(Cli, RunEvalAndScore) {
  TempDir dir;
  write_file(dir / "small.toml", kSmallRun);
  const std::string cfg = "'" + (dir / "small.toml").string() + "'";
  const std::string run = (dir / "run").string();
  ASSERT_EQ(run_cli("run --config " + cfg + " --out '" + run + "'", dir / "log"), 0) << read_file(dir / "log");

  // eval from the saved artifacts reproduces the pipeline report.
  ASSERT_EQ(run_cli("eval --checkpoint '" + run + "/checkpoint.bin' --density '" + run + "/density.bin' --split '" + run +
                        "/split.json' --out '" + (dir / "again").string() + "'",
                    dir / "log"),
            0)
      << read_file(dir / "log");
  EXPECT_EQ(read_file(dir / "again/report.json"), read_file(dir / "run/eval/report.json"));
  EXPECT_EQ(read_file(dir / "again/scores.csv"), read_file(dir / "run/eval/scores.csv"));

  ASSERT_EQ(run_cli("score --model '" + run + "/density.bin' --images '" + run + "/data/abnormal' --out '" +
                        (dir / "scores.csv").string() + "'",
                    dir / "log"),
            0)
      << read_file(dir / "log");
  const std::string scores = read_file(dir / "scores.csv");
  EXPECT_EQ(scores.substr(0, scores.find('\n')), "id,raw_score,percentile");
  EXPECT_EQ(line_count(scores), 7u);

  // Stage-by-stage: train on the same split, then fit the density.
  ASSERT_EQ(run_cli("train --config " + cfg + " --split '" + run + "/split.json' --out '" + (dir / "t").string() + "'",
                    dir / "log"),
            0)
      << read_file(dir / "log");
  EXPECT_EQ(read_file(dir / "t/checkpoint.bin"), read_file(dir / "run/checkpoint.bin"));
  ASSERT_EQ(run_cli("fit-density --config " + cfg + " --checkpoint '" + (dir / "t").string() + "/checkpoint.bin' --split '" +
                        run + "/split.json' --out '" + (dir / "t").string() + "'",
                    dir / "log"),
            0)
      << read_file(dir / "log");
  EXPECT_EQ(read_file(dir / "t/density.bin"), read_file(dir / "run/density.bin"));
}

TEST(Cli, DataErrorsExitWithThree) {
  TempDir dir;
  std::string text = kSmallRun;
  text.replace(text.find("reserve_normal = 9"), 18, "reserve_normal = 90");
  write_file(dir / "short.toml", text);
  EXPECT_EQ(run_cli("run --config '" + (dir / "short.toml").string() + "' --out '" + (dir / "r").string() + "'",
                    dir / "log"),
            3);
  EXPECT_NE(read_file(dir / "log").find("short by"), std::string::npos);
  std::filesystem::create_directories(dir / "empty");
  write_file(dir / "junk.bin", "junk\n");
  EXPECT_EQ(run_cli("score --model '" + (dir / "junk.bin").string() + "' --images '" + (dir / "empty").string() +
                        "' --out '" + (dir / "s.csv").string() + "'",
                    dir / "log"),
            3);
}
