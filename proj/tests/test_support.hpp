#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <Eigen/Core>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "coftad/encoder.hpp"
#include "coftad/image.hpp"
#include "coftad/rng.hpp"

namespace coftad::testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng) { return random_matrix(n, 1, rng).col(0); }

inline Image random_image(int channels, int size, Rng& rng) {
  Image img(channels, size, size);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

/// Smooth image (a few low-frequency sinusoids) so crops and warps look natural.
inline Image smooth_image(int size, Rng& rng) {
  Image img(3, size, size);
  for (int c = 0; c < 3; ++c) {
    const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0), ph = rng.uniform(0.0, 6.28);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        img.at(c, y, x) = static_cast<float>(0.5 + 0.4 * std::sin(fx * x * 6.28 / size + fy * y * 6.28 / size + ph));
      }
    }
  }
  return img;
}

/// Small tiny-cnn encoder used across tests.
inline EncoderConfig tiny_config(int input_size = 16, std::vector<int> channels = {8, 16}, std::uint64_t seed = 7) {
  EncoderConfig c;
  c.backbone_arch = BackboneArch::kTinyCnn;
  c.input_size = input_size;
  c.tiny_channels = std::move(channels);
  c.feature_dim = c.tiny_channels.back();
  c.projector_hidden_dim = 32;
  c.projector_out_dim = 16;
  c.predictor_hidden_dim = 32;
  c.init_seed = seed;
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("coftad_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  os << text;
}

}  // namespace coftad::testing
