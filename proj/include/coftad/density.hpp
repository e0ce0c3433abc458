#pragma once

// Gaussian density over L2-normalized embeddings and Mahalanobis scoring.
//
// Fitting: mu and Sigma are the maximum-likelihood (1/N) moments of the
// normalized fit vectors; epsilon * I is added to Sigma and a Cholesky factor
// is stored. Scoring solves against the factor; no explicit inverse is formed.

#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coftad/augment.hpp"
#include "coftad/encoder.hpp"
#include "coftad/error.hpp"
#include "coftad/image.hpp"
#include "coftad/rng.hpp"

namespace coftad {

inline Eigen::VectorXd normalize(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("normalize: vector has zero or non-finite norm");
  return v / n;
}

/// Normalizes every row of m.
inline Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = normalize(m.row(i).transpose()).transpose();
  return out;
}

class DensityModel {
 public:
  DensityModel() = default;

  /// Fits mean and biased covariance to the normalized rows of embeddings.
  static DensityModel fit(const Eigen::MatrixXd& embeddings, double epsilon) {
    if (embeddings.rows() < 2) {
      throw DataError("fit_density: need at least 2 fit vectors, got " + std::to_string(embeddings.rows()));
    }
    if (!embeddings.allFinite()) throw NumericalError("fit_density: non-finite embeddings");
    const Eigen::MatrixXd x = normalize_rows(embeddings);
    const Eigen::VectorXd mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    const Eigen::MatrixXd sigma = (centered.transpose() * centered) / static_cast<double>(x.rows());
    DensityModel m = from_moments(mu, sigma, epsilon);
    m.n_fit_ = static_cast<int>(x.rows());
    m.fit_vectors_ = x;
    return m;
  }

  /// Model from explicit moments; sigma is taken before the epsilon shift.
  static DensityModel from_moments(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("density epsilon must be positive");
    if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) throw ContractError("density: moment shapes differ");
    if (!mu.allFinite() || !sigma.allFinite()) throw NumericalError("density: non-finite moments");
    DensityModel m;
    m.mu_ = mu;
    m.epsilon_ = epsilon;
    // Symmetrize exactly before the shift.
    m.sigma_ = 0.5 * (sigma + sigma.transpose());
    m.sigma_.diagonal().array() += epsilon;
    m.factorize();
    return m;
  }

  int dim() const noexcept { return static_cast<int>(mu_.size()); }
  int n_fit() const noexcept { return n_fit_; }
  double epsilon() const noexcept { return epsilon_; }
  const Eigen::VectorXd& mu() const noexcept { return mu_; }
  /// Covariance including the epsilon shift.
  const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
  /// Normalized fit vectors (kept for the kNN scorer); may be empty.
  const Eigen::MatrixXd& fit_vectors() const noexcept { return fit_vectors_; }

  /// Mahalanobis distance of normalize(v) from mu.
  double score(const Eigen::VectorXd& v) const {
    if (v.size() != mu_.size()) {
      throw ContractError("score_embedding: dimension " + std::to_string(v.size()) + " does not match model " +
                          std::to_string(mu_.size()));
    }
    const Eigen::VectorXd d = normalize(v) - mu_;
    const Eigen::VectorXd y = llt_.matrixL().solve(d);
    return std::sqrt(std::max(0.0, y.squaredNorm()));
  }

  // Serialized as one JSON header line followed by little-endian float64
  // blobs: mu (dim), sigma (dim x dim, row-major, epsilon included) and the
  // normalized fit vectors (n_fit x dim, row-major) when present.
  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const {
    nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
    header["format"] = "coftad-density/1";
    header["dim"] = dim();
    header["epsilon"] = epsilon_;
    header["n_fit"] = n_fit_;
    header["has_fit_vectors"] = fit_vectors_.size() > 0;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write density model " + path.string());
    os << header.dump() << '\n';
    auto write_block = [&](const Eigen::MatrixXd& m) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
      os.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
    };
    write_block(mu_);
    write_block(sigma_);
    if (fit_vectors_.size() > 0) write_block(fit_vectors_);
    if (!os) throw DataError("failed writing density model " + path.string());
  }

  static DensityModel load(const std::filesystem::path& path, nlohmann::json* header_out = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open density model " + path.string());
    std::string line;
    std::getline(is, line);
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad density model header in " + path.string() + ": " + e.what());
    }
    if (header.value("format", "") != "coftad-density/1") throw DataError(path.string() + " is not a density model");
    const int dim = header.at("dim").get<int>();
    DensityModel m;
    m.epsilon_ = header.at("epsilon").get<double>();
    m.n_fit_ = header.at("n_fit").get<int>();
    auto read_block = [&](Eigen::Index rows, Eigen::Index cols) {
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
      if (!is.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)))) {
        throw DataError("truncated density model " + path.string());
      }
      return Eigen::MatrixXd(rm);
    };
    m.mu_ = read_block(dim, 1);
    m.sigma_ = read_block(dim, dim);
    if (header.value("has_fit_vectors", false)) m.fit_vectors_ = read_block(m.n_fit_, dim);
    m.factorize();
    if (header_out) *header_out = header;
    return m;
  }

 private:
  void factorize() {
    llt_.compute(sigma_);
    if (llt_.info() != Eigen::Success) throw NumericalError("density: covariance is not positive definite");
  }

  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd fit_vectors_;
  double epsilon_ = 1e-3;
  int n_fit_ = 0;
};

inline double score_embedding(const DensityModel& model, const Eigen::VectorXd& v) { return model.score(v); }

/// Builds n_a independently augmented copies of each few-shot image, embeds
/// them at backbone depth and fits the Gaussian. Copy a of image i uses the
/// stream rng.split("copy", a * k + i).
inline DensityModel fit_density(const OnlineNetwork& encoder, std::span<const Image> fewshot,
                                const PositivePolicy& pos, int n_a, double epsilon, const Rng& rng) {
  if (fewshot.empty()) throw DataError("fit_density: few-shot set is empty");
  if (n_a < 1) throw ConfigError("density.n_a must be >= 1");
  std::vector<Image> augmented;
  augmented.reserve(fewshot.size() * static_cast<std::size_t>(n_a));
  for (int a = 0; a < n_a; ++a) {
    for (std::size_t i = 0; i < fewshot.size(); ++i) {
      Rng r = rng.split("copy", static_cast<std::uint64_t>(a) * fewshot.size() + i);
      augmented.push_back(apply_positive(fewshot[i], pos, r));
    }
  }
  const EmbeddingSet emb = embed(encoder, augmented, Depth::kBackbone);
  return DensityModel::fit(emb.vectors, epsilon);
}

struct ScoreRecord {
  std::string sample_id;
  double raw_score = 0.0;
  std::optional<double> percentile;
};

/// Scores un-augmented images with the Gaussian model; order is preserved.
inline std::vector<ScoreRecord> score_images(const DensityModel& model, const OnlineNetwork& encoder,
                                             std::span<const Image> images, std::span<const std::string> ids = {}) {
  if (images.empty()) return {};
  const EmbeddingSet emb = embed(encoder, images, Depth::kBackbone, ids);
  std::vector<ScoreRecord> out;
  out.reserve(images.size());
  for (Eigen::Index i = 0; i < emb.vectors.rows(); ++i) {
    out.push_back({emb.source_ids[static_cast<std::size_t>(i)], model.score(emb.vectors.row(i).transpose()), {}});
  }
  return out;
}

/// Mean Euclidean distance from normalize(v) to its k nearest normalized training rows.
inline double knn_score(const Eigen::MatrixXd& train_embeddings, const Eigen::VectorXd& v, int k) {
  const auto n = train_embeddings.rows();
  if (k < 1 || k > n) {
    throw ContractError("knn_score: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  if (train_embeddings.cols() != v.size()) throw ContractError("knn_score: dimension mismatch");
  const Eigen::VectorXd q = normalize(v);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    dist[static_cast<std::size_t>(i)] = (normalize(train_embeddings.row(i).transpose()) - q).norm();
  }
  std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
  std::sort(dist.begin(), dist.begin() + k);
  return std::accumulate(dist.begin(), dist.begin() + k, 0.0) / k;
}

/// Midrank of every score divided by the list length: (midrank - 1/2) / N.
inline std::vector<double> percentile_normalize(std::span<const double> scores) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // 1-based ranks i+1..j+1 share the midrank.
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) out[order[t]] = (midrank - 0.5) / static_cast<double>(n);
    i = j + 1;
  }
  return out;
}

}  // namespace coftad
