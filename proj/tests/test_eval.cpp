#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "coftad/eval.hpp"
#include "test_support.hpp"

using namespace coftad;
using coftad::testing::random_image;
using coftad::testing::read_file;
using coftad::testing::TempDir;
using coftad::testing::tiny_config;

namespace {

double pairwise_auroc(const std::vector<double>& abn, const std::vector<double>& norm) {
  double wins = 0;
  for (double a : abn) {
    for (double n : norm) wins += a > n ? 1.0 : (a == n ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(abn.size() * norm.size());
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    out.push_back(text.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

std::size_t columns(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

Image flat_image(float v, Rng& rng) {
  Image img(3, 16, 16);
  for (auto& x : img.data) x = v + 0.01f * static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(std::vector<double>{0.9, 0.8}, std::vector<double>{0.1, 0.2}), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 1}), 0.5);
  EXPECT_NEAR(auroc(std::vector<double>{2.5, 4}, std::vector<double>{1, 2, 3}), 5.0 / 6.0, 1e-12);
  EXPECT_THROW(auroc(std::vector<double>{}, std::vector<double>{1}), DataError);
  EXPECT_THROW(auroc(std::vector<double>{1}, std::vector<double>{}), DataError);
}

TEST(Auroc, MatchesPairwiseOracleWithTies) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(1 + rng.uniform_index(30)), n(1 + rng.uniform_index(30));
    for (auto& x : a) x = std::round(rng.normal() * 3.0 + 1.0);
    for (auto& x : n) x = std::round(rng.normal() * 3.0);
    ASSERT_NEAR(auroc(a, n), pairwise_auroc(a, n), 1e-12);
    // Swapping the classes gives the complement.
    ASSERT_NEAR(auroc(a, n) + auroc(n, a), 1.0, 1e-12);
  }
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  std::vector<double> a(25), n(40);
  for (auto& x : a) x = rng.normal() + 0.5;
  for (auto& x : n) x = rng.normal();
  auto f = [](std::vector<double> v) {
    for (auto& x : v) x = std::exp(3.0 * x) + 2.0;
    return v;
  };
  EXPECT_EQ(auroc(a, n), auroc(f(a), f(n)));
}

TEST(Summary, Values) {
  const auto s = summarize(std::vector<double>{4, 1, 3, 2});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.max, 4.0);
  EXPECT_DOUBLE_EQ(s.stddev, std::sqrt(1.25));
}

TEST(Histogram, CountsAndSupports) {
  Rng rng(3);
  std::vector<double> scores;
  for (int i = 0; i < 30; ++i) scores.push_back(rng.normal());
  const bool labels_raw[30] = {true, false, true, true, false, false, true, false, false, false,
                               true, true,  true, false, false, true,  false, false, true, false,
                               false, true, false, false, true, false, true,  true,  false, false};
  const auto h = score_histogram(scores, labels_raw, 7);
  ASSERT_EQ(h.edges.size(), 8u);
  const int n_abn = static_cast<int>(std::count(std::begin(labels_raw), std::end(labels_raw), true));
  EXPECT_EQ(std::accumulate(h.abnormal.begin(), h.abnormal.end(), 0), n_abn);
  EXPECT_EQ(std::accumulate(h.normal.begin(), h.normal.end(), 0), 30 - n_abn);

  // Two point masses land in disjoint bins.
  const std::vector<double> masses{1, 1, 1, 9, 9};
  const bool mass_labels[5] = {false, false, false, true, true};
  const auto hm = score_histogram(masses, mass_labels, 10);
  for (std::size_t b = 0; b < 10; ++b) EXPECT_FALSE(hm.normal[b] > 0 && hm.abnormal[b] > 0);
  EXPECT_EQ(hm.normal.front(), 3);
  EXPECT_EQ(hm.abnormal.back(), 2);

  // One record per class.
  const std::vector<double> two{0.2, 0.7};
  const bool two_labels[2] = {false, true};
  const auto h2 = score_histogram(two, two_labels, 5);
  EXPECT_EQ(std::count(h2.normal.begin(), h2.normal.end(), 1), 1);
  EXPECT_EQ(std::count(h2.abnormal.begin(), h2.abnormal.end(), 1), 1);
  EXPECT_THROW(score_histogram(two, std::span<const bool>(two_labels, 1), 5), ContractError);
}

TEST(Histogram, ExportWritesCsvAndPng) {
  TempDir dir;
  const std::vector<double> scores{0.1, 0.4, 0.5, 2.0};
  const bool labels[4] = {false, false, true, true};
  export_score_distribution(scores, labels, dir.path(), 4);
  const auto rows = csv_lines(read_file(dir / "hist.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "bin_lo,bin_hi,normal,abnormal");
  const Image png = read_png(dir / "hist.png");
  EXPECT_GT(png.width, 0);
}

TEST(Embeddings, CsvShapeAndDuplicates) {
  TempDir dir;
  Rng rng(4);
  const OnlineNetwork net = create_online(tiny_config());
  std::vector<Image> imgs{random_image(3, 16, rng), random_image(3, 16, rng)};
  imgs.push_back(imgs[0]);
  const bool labels[3] = {false, true, false};
  const auto e = export_embeddings(net, imgs, labels, dir / "emb.csv");
  const auto rows = csv_lines(read_file(dir / "emb.csv"));
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) EXPECT_EQ(columns(r), 17u);
  EXPECT_EQ(rows[1], rows[3]);
  EXPECT_EQ(rows[2].substr(0, 2), "1,");
  EXPECT_EQ(e.vectors.rows(), 3);
}

TEST(Report, JsonRoundTrip) {
  EvalReport r;
  r.auroc = 0.8125;
  r.n_normal = 3;
  r.n_abnormal = 4;
  r.normal_scores = summarize(std::vector<double>{1, 2, 3});
  r.scorer = "knn";
  r.split_hash = "00ff";
  r.config = {{"seed", 3}};
  const nlohmann::json j = r;
  EXPECT_EQ(j.get<EvalReport>(), r);
  EXPECT_TRUE(j.contains("score_summary"));
}

TEST(Report, SplitHashIgnoresRoot) {
  FewShotSplit s;
  s.train_ids = {"a"};
  s.root = "/one";
  FewShotSplit t = s;
  t.root = "/two";
  EXPECT_EQ(split_hash(s), split_hash(t));
  t.train_ids = {"b"};
  EXPECT_NE(split_hash(s), split_hash(t));
  EXPECT_EQ(split_hash(s).size(), 16u);
}

class EvaluateFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(5);
    for (int i = 0; i < 10; ++i) write_png(dir / ("normal/n" + std::to_string(i) + ".png"), flat_image(0.5f, rng));
    for (int i = 0; i < 6; ++i) write_png(dir / ("abnormal/a" + std::to_string(i) + ".png"), random_image(3, 16, rng));
    manifest = load_image_folder(dir.path());
    split = sample_few_shot(manifest, 4, 1);
    std::vector<Image> fit;
    for (const auto& id : split.train_ids) fit.push_back(load_image(manifest, id, 16));
    density = fit_density(net, fit, PositivePolicy::identity(), 1, 1e-3, Rng(2));
  }

  TempDir dir;
  OnlineNetwork net = create_online(tiny_config());
  DatasetManifest manifest;
  FewShotSplit split;
  DensityModel density;
};

TEST_F(EvaluateFixture, SeparableFixtureScoresPerfectly) {
  const auto res = evaluate(net, density, split, dir / "eval");
  EXPECT_EQ(res.report.auroc, 1.0);
  EXPECT_EQ(res.report.n_normal, 6u);
  EXPECT_EQ(res.report.n_abnormal, 6u);
  EXPECT_EQ(res.report.split_hash, split_hash(split));
  for (const char* f : {"report.json", "scores.csv", "hist.csv", "hist.png", "embeddings.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "eval" / f)) << f;
  }
  const auto rows = csv_lines(read_file(dir / "eval" / "scores.csv"));
  ASSERT_EQ(rows.size(), 13u);
  EXPECT_EQ(rows[0], "id,label,raw_score,percentile");
  const auto back = nlohmann::json::parse(read_file(dir / "eval" / "report.json")).get<EvalReport>();
  EXPECT_EQ(back, res.report);
}

TEST_F(EvaluateFixture, KnnScorer) {
  EvalOptions opt;
  opt.scorer = "knn";
  opt.k_nn = 2;
  opt.export_embeddings = false;
  const auto res = evaluate(net, density, split, dir / "knn", opt);
  EXPECT_EQ(res.report.scorer, "knn");
  EXPECT_EQ(res.report.auroc, 1.0);
  EXPECT_FALSE(std::filesystem::exists(dir / "knn" / "embeddings.csv"));
  opt.k_nn = 99;
  EXPECT_THROW(evaluate(net, density, split, dir / "knn2", opt), ContractError);
  opt.scorer = "forest";
  EXPECT_THROW(evaluate(net, density, split, dir / "knn3", opt), ConfigError);
}

TEST_F(EvaluateFixture, DimensionMismatch) {
  const auto other = DensityModel::fit(Eigen::MatrixXd::Random(5, 8), 1e-3);
  EXPECT_THROW(evaluate(net, other, split, dir / "bad"), DataError);
}

TEST_F(EvaluateFixture, RelabeledHalvesAverageToChance) {
  std::vector<Image> imgs;
  for (const auto& e : manifest.entries) imgs.push_back(load_image(manifest, e.id, 16));
  std::vector<double> scores;
  for (const auto& r : score_images(density, net, imgs)) scores.push_back(r.raw_score);
  double total = 0;
  const int seeds = 200;
  for (int seed = 0; seed < seeds; ++seed) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng(static_cast<std::uint64_t>(seed)).shuffle(idx);
    std::vector<double> a, n;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < idx.size() / 2 ? a : n).push_back(scores[idx[i]]);
    total += auroc(a, n);
  }
  EXPECT_NEAR(total / seeds, 0.5, 0.05);
}
