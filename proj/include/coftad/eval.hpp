#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "coftad/data.hpp"
#include "coftad/density.hpp"
#include "coftad/encoder.hpp"
#include "coftad/error.hpp"
#include "coftad/image.hpp"
#include "coftad/train.hpp"

namespace coftad {

/// Probability that a random abnormal score exceeds a random normal score,
/// ties counted 1/2 (Mann-Whitney U from midranks, O(n log n)).
inline double auroc(std::span<const double> scores_abnormal, std::span<const double> scores_normal) {
  if (scores_abnormal.empty() || scores_normal.empty()) {
    throw DataError("auroc: both classes need at least one score");
  }
  const std::size_t na = scores_abnormal.size(), nn_ = scores_normal.size(), n = na + nn_;
  std::vector<std::pair<double, bool>> all;
  all.reserve(n);
  for (double s : scores_abnormal) all.emplace_back(s, true);
  for (double s : scores_normal) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Twice the abnormal rank sum; twice a midrank is the integer (i+1)+(j+1).
  std::int64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && all[j + 1].first == all[i].first) ++j;
    const auto twice_midrank = static_cast<std::int64_t>(i + 1 + j + 1);
    for (std::size_t t = i; t <= j; ++t) {
      if (all[t].second) twice_rank_sum += twice_midrank;
    }
    i = j + 1;
  }
  const auto twice_u = twice_rank_sum - static_cast<std::int64_t>(na * (na + 1));
  return static_cast<double>(twice_u) / static_cast<double>(2 * na * nn_);
}

struct ScoreSummary {
  double mean = 0, stddev = 0, min = 0, max = 0, median = 0;
  friend bool operator==(const ScoreSummary&, const ScoreSummary&) = default;
};

inline ScoreSummary summarize(std::span<const double> xs) {
  ScoreSummary s;
  if (xs.empty()) return s;
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  s.median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

inline void to_json(nlohmann::json& j, const ScoreSummary& s) {
  j = nlohmann::json{{"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}, {"median", s.median}};
}
inline void from_json(const nlohmann::json& j, ScoreSummary& s) {
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("std").get<double>();
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  s.median = j.at("median").get<double>();
}

struct EvalReport {
  double auroc = 0.5;
  std::size_t n_normal = 0;
  std::size_t n_abnormal = 0;
  ScoreSummary normal_scores;
  ScoreSummary abnormal_scores;
  std::string scorer = "gaussian";
  std::string split_hash;
  nlohmann::json config = nlohmann::json::object();

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"auroc", r.auroc},
                     {"n_normal", r.n_normal},
                     {"n_abnormal", r.n_abnormal},
                     {"score_summary", {{"normal", r.normal_scores}, {"abnormal", r.abnormal_scores}}},
                     {"scorer", r.scorer},
                     {"split_hash", r.split_hash},
                     {"config", r.config}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r.auroc = j.at("auroc").get<double>();
  r.n_normal = j.at("n_normal").get<std::size_t>();
  r.n_abnormal = j.at("n_abnormal").get<std::size_t>();
  r.normal_scores = j.at("score_summary").at("normal").get<ScoreSummary>();
  r.abnormal_scores = j.at("score_summary").at("abnormal").get<ScoreSummary>();
  r.scorer = j.at("scorer").get<std::string>();
  r.split_hash = j.at("split_hash").get<std::string>();
  r.config = j.value("config", nlohmann::json::object());
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of the protocol, seed and id lists; the dataset root is excluded.
inline std::string split_hash(const FewShotSplit& split) {
  nlohmann::json j = split;
  j.erase("root");
  return hex64(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// Score distribution export

struct Histogram {
  std::vector<double> edges;  // bins + 1 shared edges
  std::vector<int> normal;
  std::vector<int> abnormal;
};

/// Per-class histograms over shared, equal-width bin edges spanning all scores.
inline Histogram score_histogram(std::span<const double> scores, std::span<const bool> abnormal, int bins) {
  if (scores.size() != abnormal.size()) throw ContractError("score_histogram: label count mismatch");
  if (bins < 1) throw ContractError("score_histogram: bins must be >= 1");
  Histogram h;
  if (scores.empty()) return h;
  double lo = *std::min_element(scores.begin(), scores.end());
  double hi = *std::max_element(scores.begin(), scores.end());
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * i / bins);
  h.normal.assign(static_cast<std::size_t>(bins), 0);
  h.abnormal.assign(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    int b = static_cast<int>(std::floor((scores[i] - lo) / (hi - lo) * bins));
    b = std::clamp(b, 0, bins - 1);
    (abnormal[i] ? h.abnormal : h.normal)[static_cast<std::size_t>(b)]++;
  }
  return h;
}

inline void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "bin_lo,bin_hi,normal,abnormal\n";
  for (std::size_t b = 0; b < h.normal.size(); ++b) {
    os << format_real(h.edges[b]) << ',' << format_real(h.edges[b + 1]) << ',' << h.normal[b] << ',' << h.abnormal[b]
       << '\n';
  }
}

/// Side-by-side bar chart: normal counts in blue, abnormal in red.
inline Image render_histogram(const Histogram& h, int width = 480, int height = 240) {
  Image img(3, height, width, 1.0f);
  const std::size_t bins = h.normal.size();
  if (bins == 0) return img;
  int peak = 1;
  for (std::size_t b = 0; b < bins; ++b) peak = std::max({peak, h.normal[b], h.abnormal[b]});
  const int margin = 10;
  const double slot = static_cast<double>(width - 2 * margin) / static_cast<double>(bins);
  auto bar = [&](int x0, int x1, int count, const float (&rgb)[3]) {
    const int top = height - margin - static_cast<int>(std::lround((height - 2.0 * margin) * count / peak));
    for (int y = std::max(0, top); y < height - margin; ++y) {
      for (int x = std::max(0, x0); x < std::min(width, x1); ++x) {
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
      }
    }
  };
  constexpr float kBlue[3] = {0.2f, 0.4f, 0.85f};
  constexpr float kRed[3] = {0.85f, 0.25f, 0.2f};
  for (std::size_t b = 0; b < bins; ++b) {
    const int x0 = margin + static_cast<int>(slot * static_cast<double>(b));
    const int mid = margin + static_cast<int>(slot * (static_cast<double>(b) + 0.5));
    const int x1 = margin + static_cast<int>(slot * static_cast<double>(b + 1));
    bar(x0 + 1, mid, h.normal[b], kBlue);
    bar(mid, x1 - 1, h.abnormal[b], kRed);
  }
  for (int x = margin; x < width - margin; ++x) {
    for (int c = 0; c < 3; ++c) img.at(c, height - margin, x) = 0.0f;
  }
  return img;
}

/// Writes hist.csv and hist.png into dir.
inline Histogram export_score_distribution(std::span<const double> scores, std::span<const bool> abnormal,
                                           const std::filesystem::path& dir, int bins = 20) {
  const Histogram h = score_histogram(scores, abnormal, bins);
  std::filesystem::create_directories(dir);
  write_histogram_csv(dir / "hist.csv", h);
  write_png(dir / "hist.png", render_histogram(h));
  return h;
}

/// One row per embedding: label (1 = abnormal), then the D feature values.
inline void write_embeddings_csv(const std::filesystem::path& path, const Eigen::MatrixXd& vectors,
                                 std::span<const bool> abnormal) {
  if (static_cast<std::size_t>(vectors.rows()) != abnormal.size()) throw ContractError("embedding/label count mismatch");
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "label";
  for (Eigen::Index d = 0; d < vectors.cols(); ++d) os << ",f" << d;
  os << '\n';
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    os << (abnormal[static_cast<std::size_t>(i)] ? 1 : 0);
    for (Eigen::Index d = 0; d < vectors.cols(); ++d) os << ',' << format_real(vectors(i, d));
    os << '\n';
  }
}

/// Backbone embeddings of the images, written row-aligned with their labels.
inline EmbeddingSet export_embeddings(const OnlineNetwork& encoder, std::span<const Image> images,
                                      std::span<const bool> abnormal, const std::filesystem::path& path) {
  EmbeddingSet e = embed(encoder, images, Depth::kBackbone);
  write_embeddings_csv(path, e.vectors, abnormal);
  return e;
}

// ---------------------------------------------------------------------------
// End-to-end evaluation

struct EvalOptions {
  std::string scorer = "gaussian";  // gaussian | knn
  int k_nn = 5;
  int histogram_bins = 20;
  bool export_embeddings = true;
  nlohmann::json config_echo = nlohmann::json::object();
};

struct EvalResult {
  EvalReport report;
  std::vector<ScoreRecord> records;
  std::vector<bool> abnormal;
};

/// Test images of a split, resized to the encoder input; normals first.
inline std::vector<ImageSample> load_test_set(const FewShotSplit& split, int input_size) {
  std::vector<ImageSample> out;
  DatasetManifest m;
  m.root = split.root;
  for (const auto& id : split.test_normal_ids) out.push_back({load_image(m, id, input_size), false, id});
  for (const auto& id : split.test_abnormal_ids) out.push_back({load_image(m, id, input_size), true, id});
  return out;
}

/// Scores the split's test set, computes AUROC and writes report.json,
/// scores.csv, hist.csv, hist.png and (optionally) embeddings.csv into out_dir.
inline EvalResult evaluate(const OnlineNetwork& encoder, const DensityModel& density, const FewShotSplit& split,
                           const std::filesystem::path& out_dir, const EvalOptions& opt = {}) {
  if (density.dim() != encoder.config.feature_dim) {
    throw DataError("evaluate: density model dimension " + std::to_string(density.dim()) +
                    " does not match encoder feature width " + std::to_string(encoder.config.feature_dim));
  }
  if (opt.scorer != "gaussian" && opt.scorer != "knn") throw ConfigError("unknown scorer '" + opt.scorer + "'");
  if (opt.scorer == "knn" && density.fit_vectors().rows() == 0) {
    throw DataError("evaluate: knn scoring needs a density model saved with its fit vectors");
  }
  const auto samples = load_test_set(split, encoder.config.input_size);
  std::vector<Image> images;
  std::vector<std::string> ids;
  EvalResult result;
  for (const auto& s : samples) {
    images.push_back(s.image);
    ids.push_back(s.id);
    result.abnormal.push_back(s.abnormal);
  }
  const EmbeddingSet emb = embed(encoder, images, Depth::kBackbone, ids);
  std::vector<double> scores;
  for (Eigen::Index i = 0; i < emb.vectors.rows(); ++i) {
    const Eigen::VectorXd v = emb.vectors.row(i).transpose();
    scores.push_back(opt.scorer == "gaussian" ? density.score(v) : knn_score(density.fit_vectors(), v, opt.k_nn));
  }
  const auto pct = percentile_normalize(scores);
  std::vector<double> s_norm, s_abn;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    result.records.push_back({ids[i], scores[i], pct[i]});
    (result.abnormal[i] ? s_abn : s_norm).push_back(scores[i]);
  }
  EvalReport& r = result.report;
  r.auroc = auroc(s_abn, s_norm);
  r.n_normal = s_norm.size();
  r.n_abnormal = s_abn.size();
  r.normal_scores = summarize(s_norm);
  r.abnormal_scores = summarize(s_abn);
  r.scorer = opt.scorer;
  r.split_hash = split_hash(split);
  r.config = opt.config_echo;

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "report.json");
    os << nlohmann::json(r).dump(2) << '\n';
    if (!os) throw DataError("cannot write report.json");
  }
  {
    std::ofstream os(out_dir / "scores.csv");
    os << "id,label,raw_score,percentile\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
      os << ids[i] << ',' << (result.abnormal[i] ? "abnormal" : "normal") << ',' << format_real(scores[i]) << ','
         << format_real(pct[i]) << '\n';
    }
  }
  const auto flags = std::make_unique<bool[]>(result.abnormal.size());
  std::copy(result.abnormal.begin(), result.abnormal.end(), flags.get());
  const std::span<const bool> labels(flags.get(), result.abnormal.size());
  export_score_distribution(scores, labels, out_dir, opt.histogram_bins);
  if (opt.export_embeddings) write_embeddings_csv(out_dir / "embeddings.csv", emb.vectors, labels);
  return result;
}

}  // namespace coftad
