#include <gtest/gtest.h>

#include <string>

#include "coftad/pipeline.hpp"
#include "test_support.hpp"

using namespace coftad;
using coftad::testing::read_file;
using coftad::testing::smooth_image;
using coftad::testing::TempDir;

namespace {

const char* kSmallRun = R"(
[dataset]
protocol = "synthetic"
k = 3
seed = 5
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
steps = 3
batch_size = 4

[density]
n_a = 2
)";

RunConfig small_config(const std::string& extra = "") {
  const auto parsed = read_config(toml::parse(std::string(kSmallRun) + extra));
  EXPECT_TRUE(parsed.diagnostics.empty());
  return parsed.config;
}

}  // namespace

TEST(Pipeline, RunWritesEveryArtifact) {
  TempDir dir;
  const auto r = run_pipeline(small_config(), dir / "run");
  for (const char* f : {"split.json", "checkpoint.bin", "checkpoint.bin.json", "train_log.csv", "run_meta.json",
                        "density.bin", "eval/report.json", "eval/scores.csv", "eval/hist.csv", "eval/hist.png",
                        "eval/embeddings.csv", "manifest.json", "data/synth.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  }
  EXPECT_EQ(r.report.n_normal, 9u);
  EXPECT_EQ(r.report.n_abnormal, 6u);
  const auto manifest = nlohmann::json::parse(read_file(dir / "run" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["stages"].size(), 4u);
  EXPECT_EQ(manifest["artifacts"]["eval/report.json"], file_hash(dir / "run" / "eval" / "report.json"));
  // The split stores its root relative to the run directory.
  EXPECT_EQ(nlohmann::json::parse(read_file(dir / "run" / "split.json"))["root"], "data");
}

TEST(Pipeline, RerunIsBitwiseIdentical) {
  TempDir a, b;
  run_pipeline(small_config(), a.path());
  run_pipeline(small_config(), b.path());
  for (const char* f : {"train_log.csv", "eval/report.json", "eval/scores.csv", "checkpoint.bin", "density.bin"}) {
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  }
  const auto ma = nlohmann::json::parse(read_file(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(read_file(b / "manifest.json"));
  EXPECT_EQ(ma["artifacts"], mb["artifacts"]);
}

TEST(Pipeline, SeedChangesTheRun) {
  TempDir a, b;
  run_pipeline(small_config(), a.path());
  RunConfig c = small_config();
  apply_seed_override(c, "6");
  run_pipeline(c, b.path());
  EXPECT_NE(read_file(a / "train_log.csv"), read_file(b / "train_log.csv"));
}

TEST(Pipeline, FailureIsRecordedInTheManifest) {
  TempDir dir;
  RunConfig c = small_config();
  c.dataset.reserve_normal = 50;
  EXPECT_THROW(run_pipeline(c, dir.path()), DataError);
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["status"], "error");
  EXPECT_EQ(manifest["error"]["stage"], "data");
  EXPECT_EQ(manifest["error"]["exit_code"], 3);
}

TEST(Pipeline, CorruptionProtocol) {
  TempDir dir;
  Rng rng(1);
  for (int i = 0; i < 8; ++i) write_png(dir / ("clean/normal/c" + std::to_string(i) + ".png"), smooth_image(20, rng));
  RunConfig c = small_config();
  c.dataset.protocol = "corruption";
  c.dataset.root = dir / "clean";
  c.dataset.reserve_normal = 5;
  c.dataset.reserve_abnormal = 4;
  c.dataset.corruption.types = {"fog", "gaussian_noise"};
  const auto r = run_pipeline(c, dir / "run");
  EXPECT_EQ(r.report.n_normal, 5u);
  EXPECT_EQ(r.report.n_abnormal, 4u);
  const auto split = load_split(dir / "run" / "split.json");
  EXPECT_EQ(split.train_ids.size(), 3u);
  for (const auto& id : split.train_ids) EXPECT_EQ(id.rfind("train/", 0), 0u);
}
