#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "coftad/config.hpp"
#include "test_support.hpp"

using namespace coftad;
using coftad::testing::TempDir;
using coftad::testing::write_file;

namespace {

ParsedConfig parse(const std::string& text) { return read_config(toml::parse(text)); }

bool has(const std::vector<Diagnostic>& diags, Diagnostic::Kind kind, const std::string& key) {
  return std::any_of(diags.begin(), diags.end(), [&](const auto& d) { return d.kind == kind && d.key == key; });
}

std::string dump(const std::vector<Diagnostic>& diags) {
  std::string s;
  for (const auto& d : diags) s += format(d) + "\n";
  return s;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  const auto p = parse("");
  EXPECT_TRUE(p.diagnostics.empty()) << dump(p.diagnostics);
  EXPECT_DOUBLE_EQ(p.config.train.weights.lambda_pp, 0.8);
  EXPECT_DOUBLE_EQ(p.config.train.weights.lambda_np, 0.6);
  EXPECT_DOUBLE_EQ(p.config.train.lr, 3e-4);
  EXPECT_EQ(p.config.train.batch_size, 64);
  EXPECT_EQ(p.config.density.n_a, 10);
  EXPECT_DOUBLE_EQ(p.config.train.ema_beta, 0.99);
}

TEST(Config, DemoFileIsValid) {
  const auto diags = validate_config(std::filesystem::path(COFTAD_SOURCE_DIR) / "configs" / "demo.toml");
  EXPECT_TRUE(diags.empty()) << dump(diags);
}

TEST(Config, NegativeWeightIsARangeError) {
  const auto p = parse("[train]\nlambda_pp = -1.0\n");
  ASSERT_EQ(p.diagnostics.size(), 1u) << dump(p.diagnostics);
  EXPECT_EQ(p.diagnostics[0].kind, Diagnostic::Kind::kRange);
  EXPECT_EQ(p.diagnostics[0].key, "train.lambda_pp");
}

TEST(Config, MisspelledKeyGetsASuggestion) {
  const auto p = parse("[train]\nlamda_pp = 0.5\n");
  ASSERT_TRUE(has(p.diagnostics, Diagnostic::Kind::kUnknownKey, "train.lamda_pp")) << dump(p.diagnostics);
  EXPECT_NE(p.diagnostics[0].message.find("lambda_pp"), std::string::npos);
  EXPECT_EQ(suggest("lamda_pp", {"lambda_pp", "lambda_np", "lr"}), "lambda_pp");
  EXPECT_FALSE(suggest("zzzzzz", {"lambda_pp", "lr"}));
  EXPECT_EQ(edit_distance("kitten", "sitting"), 3u);
}

TEST(Config, ZeroShotIsRejected) {
  const auto p = parse("[dataset]\nk = 0\n");
  EXPECT_TRUE(has(p.diagnostics, Diagnostic::Kind::kRange, "dataset.k")) << dump(p.diagnostics);
}

TEST(Config, TypeErrors) {
  const auto p = parse("[train]\nsteps = \"many\"\n[density]\nepsilon = true\n");
  EXPECT_TRUE(has(p.diagnostics, Diagnostic::Kind::kType, "train.steps"));
  EXPECT_TRUE(has(p.diagnostics, Diagnostic::Kind::kType, "density.epsilon"));
  const auto q = parse("train = 3\n");
  EXPECT_TRUE(has(q.diagnostics, Diagnostic::Kind::kType, "train"));
}

TEST(Config, MissingPaths) {
  const auto p = parse("[dataset]\nprotocol = \"folder\"\n");
  EXPECT_TRUE(has(p.diagnostics, Diagnostic::Kind::kMissingPath, "dataset.root"));
  const auto q = parse("[encoder]\npretrained_checkpoint = \"/definitely/not/here.bin\"\n");
  EXPECT_TRUE(has(q.diagnostics, Diagnostic::Kind::kMissingPath, "encoder.pretrained_checkpoint"));
}

TEST(Config, ParseErrorCarriesLocation) {
  TempDir dir;
  write_file(dir / "bad.toml", "[train]\nlr = = 3\n");
  try {
    load_config(dir / "bad.toml");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad.toml:2:"), std::string::npos) << msg;
  }
  EXPECT_THROW(load_config(dir / "absent.toml"), ConfigError);
}

TEST(Config, LoadConfigListsEveryDiagnostic) {
  TempDir dir;
  write_file(dir / "c.toml", "[train]\nlambda_pp = -1.0\nlambda_np = -2.0\n");
  try {
    load_config(dir / "c.toml");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train.lambda_pp"), std::string::npos);
    EXPECT_NE(msg.find("train.lambda_np"), std::string::npos);
    EXPECT_EQ(e.code(), ExitCode::kConfig);
  }
}

TEST(Config, SeedOverride) {
  RunConfig c = parse("[dataset]\nseed = 4\n").config;
  EXPECT_EQ(c.train.seed, stage_seed(4, "train"));
  apply_seed_override(c, "17");
  EXPECT_EQ(c.dataset.seed, 17u);
  EXPECT_EQ(c.train.seed, stage_seed(17, "train"));
  EXPECT_EQ(c.encoder.init_seed, stage_seed(17, "init"));
  EXPECT_TRUE(c.seed_from_env);
  EXPECT_THROW(apply_seed_override(c, "-3"), ConfigError);
  EXPECT_THROW(apply_seed_override(c, "12abc"), ConfigError);
  RunConfig d;
  apply_seed_override(d, nullptr);
  EXPECT_FALSE(d.seed_from_env);
  EXPECT_NE(stage_seed(1, "train"), stage_seed(1, "init"));
}

TEST(Config, PositiveRecipeAndReflectBorder) {
  const auto p = parse(R"(
[augment]
[[augment.positive]]
kind = "affine"
degrees = [-5.0, 5.0]
reflect_border = false
[[augment.positive]]
kind = "grayscale"
p = 0.5
)");
  ASSERT_TRUE(p.diagnostics.empty()) << dump(p.diagnostics);
  ASSERT_EQ(p.config.positive.recipe.size(), 2u);
  const auto& a = std::get<AffineSpec>(p.config.positive.recipe[0]);
  EXPECT_FALSE(a.reflect_border);
  EXPECT_EQ(a.degrees[1], 5.0);
  EXPECT_EQ(std::get<GrayscaleSpec>(p.config.positive.recipe[1]).p, 0.5);
  EXPECT_EQ(config_echo(p.config)["augment"]["positive"][0]["reflect_border"], false);
}

TEST(Config, NegativeKinds) {
  const auto p = parse("[augment.negative]\nkind = \"scar\"\nwidth_range = [1.0, 3.0]\n");
  ASSERT_TRUE(p.diagnostics.empty()) << dump(p.diagnostics);
  EXPECT_EQ(p.config.negative.kind(), "scar");
  EXPECT_EQ(std::get<ScarSpec>(p.config.negative.recipe).width[1], 3.0);
  const auto q = parse("[augment.negative]\nkind = \"cutpaste\"\narea_range = [0.5, 0.1]\n");
  EXPECT_TRUE(has(q.diagnostics, Diagnostic::Kind::kRange, "augment.negative")) << dump(q.diagnostics);
}

TEST(Config, FeatureDimFollowsTinyChannels) {
  const auto p = parse("[encoder]\narch = \"tiny-cnn\"\ntiny_channels = [4, 12]\n");
  EXPECT_TRUE(p.diagnostics.empty()) << dump(p.diagnostics);
  EXPECT_EQ(p.config.encoder.feature_dim, 12);
  const auto q = parse("[encoder]\narch = \"tiny-cnn\"\ntiny_channels = [4, 12]\nfeature_dim = 7\n");
  EXPECT_TRUE(has(q.diagnostics, Diagnostic::Kind::kRange, "encoder.feature_dim"));
}

TEST(Config, HashTracksContent) {
  const auto a = parse("[train]\nsteps = 10\n").config;
  const auto b = parse("[train]\nsteps = 10\n").config;
  const auto c = parse("[train]\nsteps = 11\n").config;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Config, RelativePathsResolveAgainstFile) {
  TempDir dir;
  std::filesystem::create_directories(dir / "data" / "normal");
  write_file(dir / "c.toml", "[dataset]\nprotocol = \"folder\"\nroot = \"data\"\n");
  const RunConfig c = load_config(dir / "c.toml");
  EXPECT_EQ(c.dataset.root, dir / "data");
}
