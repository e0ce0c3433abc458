#pragma once

// Dataset ingestion, few-shot split protocols and the synthetic benchmark.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "coftad/augment.hpp"
#include "coftad/error.hpp"
#include "coftad/image.hpp"
#include "coftad/rng.hpp"

namespace coftad {

namespace fs = std::filesystem;

struct ManifestEntry {
  /// Root-relative, path-qualified id, e.g. "normal/0001.png".
  std::string id;
  bool abnormal = false;
  std::string group;
  int height = 0;
  int width = 0;
};

struct DatasetManifest {
  fs::path root;
  std::vector<ManifestEntry> entries;
  /// Files that were found but could not be read.
  std::vector<std::string> errors;

  std::size_t count(bool abnormal) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.abnormal == abnormal; }));
  }
  fs::path path_of(const std::string& id) const { return root / id; }
};

namespace detail {
inline std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}
}  // namespace detail

/// Enumerates root/normal/*.png and root/abnormal/*.png in lexicographic order.
/// Unreadable files are reported in DatasetManifest::errors and skipped.
inline DatasetManifest load_image_folder(const fs::path& root) {
  if (!fs::is_directory(root / "normal")) throw DataError("dataset root " + root.string() + " has no normal/ folder");
  DatasetManifest m;
  m.root = root;
  for (const bool abnormal : {false, true}) {
    const std::string folder = abnormal ? "abnormal" : "normal";
    for (const auto& file : detail::sorted_pngs(root / folder)) {
      try {
        const Image img = read_png(file);
        m.entries.push_back({folder + "/" + file.filename().string(), abnormal, folder, img.height, img.width});
      } catch (const DataError& e) {
        m.errors.push_back(e.what());
      }
    }
  }
  if (m.count(false) == 0) throw DataError("dataset " + root.string() + " has no readable normal images");
  return m;
}

inline Image load_image(const DatasetManifest& m, const std::string& id, int size) {
  return resize(read_png(m.path_of(id)), size, size);
}

// ---------------------------------------------------------------------------
// Splits

struct FewShotSplit {
  std::string protocol = "few-shot";
  std::uint64_t seed = 0;
  fs::path root;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_normal_ids;
  std::vector<std::string> test_abnormal_ids;

  friend bool operator==(const FewShotSplit&, const FewShotSplit&) = default;
};

inline void to_json(nlohmann::json& j, const FewShotSplit& s) {
  j = nlohmann::json{{"protocol", s.protocol},       {"seed", s.seed},
                     {"root", s.root.string()},      {"train_ids", s.train_ids},
                     {"test_normal_ids", s.test_normal_ids}, {"test_abnormal_ids", s.test_abnormal_ids}};
}

inline void from_json(const nlohmann::json& j, FewShotSplit& s) {
  s.protocol = j.at("protocol").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.root = j.at("root").get<std::string>();
  s.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  s.test_normal_ids = j.at("test_normal_ids").get<std::vector<std::string>>();
  s.test_abnormal_ids = j.at("test_abnormal_ids").get<std::vector<std::string>>();
}

inline void save_split(const fs::path& path, const FewShotSplit& s) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  os << nlohmann::json(s).dump(2) << '\n';
  if (!os) throw DataError("cannot write split " + path.string());
}

/// A relative root is resolved against the split file's directory.
inline FewShotSplit load_split(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open split " + path.string());
  try {
    auto s = nlohmann::json::parse(is).get<FewShotSplit>();
    if (s.root.is_relative()) s.root = path.parent_path() / s.root;
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad split file " + path.string() + ": " + e.what());
  }
}

/// Test-set reservation; nullopt means "everything not used for training".
struct Reserve {
  std::optional<std::size_t> normal;
  std::optional<std::size_t> abnormal;
};

/// Samples k training normals and the reserved test sets without replacement.
inline FewShotSplit sample_few_shot(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed,
                                    Reserve reserve = {}) {
  std::vector<std::string> normals, abnormals;
  for (const auto& e : manifest.entries) (e.abnormal ? abnormals : normals).push_back(e.id);
  const std::size_t n_norm = reserve.normal.value_or(normals.size() >= k ? normals.size() - k : 0);
  const std::size_t n_abn = reserve.abnormal.value_or(abnormals.size());
  if (normals.size() < k + n_norm) {
    throw DataError("sample_few_shot: need " + std::to_string(k + n_norm) + " normal images, manifest has " +
                    std::to_string(normals.size()) + " (short by " + std::to_string(k + n_norm - normals.size()) + ")");
  }
  if (abnormals.size() < n_abn) {
    throw DataError("sample_few_shot: need " + std::to_string(n_abn) + " abnormal images, manifest has " +
                    std::to_string(abnormals.size()) + " (short by " + std::to_string(n_abn - abnormals.size()) + ")");
  }
  const Rng rng(seed);
  Rng normal_rng = rng.split("normal"), abnormal_rng = rng.split("abnormal");
  normal_rng.shuffle(normals);
  abnormal_rng.shuffle(abnormals);
  FewShotSplit s;
  s.protocol = std::to_string(k) + "-shot";
  s.seed = seed;
  s.root = manifest.root;
  s.train_ids.assign(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(k));
  s.test_normal_ids.assign(normals.begin() + static_cast<std::ptrdiff_t>(k),
                           normals.begin() + static_cast<std::ptrdiff_t>(k + n_norm));
  s.test_abnormal_ids.assign(abnormals.begin(), abnormals.begin() + static_cast<std::ptrdiff_t>(n_abn));
  return s;
}

/// Keeps a seeded random subset of n_abn test anomalies (original order kept).
inline FewShotSplit subsample_anomalies(const FewShotSplit& split, std::size_t n_abn, std::uint64_t seed) {
  if (n_abn > split.test_abnormal_ids.size()) {
    throw DataError("subsample_anomalies: requested " + std::to_string(n_abn) + " anomalies, split has " +
                    std::to_string(split.test_abnormal_ids.size()));
  }
  std::vector<std::size_t> idx(split.test_abnormal_ids.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng(seed).split("subsample").shuffle(idx);
  idx.resize(n_abn);
  std::sort(idx.begin(), idx.end());
  FewShotSplit out = split;
  out.test_abnormal_ids.clear();
  for (auto i : idx) out.test_abnormal_ids.push_back(split.test_abnormal_ids[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Corruption-as-anomaly protocol

using CorruptionFn = std::function<Image(const Image&, const std::string& type, int severity, Rng&)>;

struct CorruptionSpec {
  std::vector<std::string> types = {"gaussian_noise", "gaussian_blur", "fog",      "brightness", "contrast",
                                    "pixelate",       "jpeg_blocking", "elastic", "saturate"};
  int severity = 4;
};

namespace corruptions {

inline Image gaussian_noise(const Image& img, int sev, Rng& rng) {
  Image out = img;
  const double sigma = 0.03 * sev;
  for (auto& v : out.data) v = static_cast<float>(v + sigma * rng.normal());
  clamp_unit(out);
  return out;
}

inline Image blur(const Image& img, int sev, Rng&) { return gaussian_blur(img, 2 * sev + 1, 0.5 * sev); }

inline Image fog(const Image& img, int sev, Rng& rng) {
  Image out = img;
  const double alpha = 0.12 * sev;
  const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5), phase = rng.uniform(0.0, 2 * std::numbers::pi);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const double haze = 0.75 + 0.15 * std::sin(2 * std::numbers::pi * (fx * x / img.width + fy * y / img.height) + phase);
        out.at(c, y, x) = static_cast<float>((1.0 - alpha) * img.at(c, y, x) + alpha * haze);
      }
    }
  }
  clamp_unit(out);
  return out;
}

inline Image brightness(const Image& img, int sev, Rng&) {
  Image out = img;
  for (auto& v : out.data) v = static_cast<float>(v + 0.1 * sev);
  clamp_unit(out);
  return out;
}

inline Image contrast(const Image& img, int sev, Rng&) {
  Image out = img;
  adjust_contrast(out, std::max(0.05, 1.0 - 0.18 * sev));
  return out;
}

inline Image pixelate(const Image& img, int sev, Rng&) {
  const int block = 1 + sev;
  Image out = img;
  for (int c = 0; c < img.channels; ++c) {
    for (int by = 0; by < img.height; by += block) {
      for (int bx = 0; bx < img.width; bx += block) {
        double s = 0.0;
        int n = 0;
        for (int y = by; y < std::min(img.height, by + block); ++y) {
          for (int x = bx; x < std::min(img.width, bx + block); ++x, ++n) s += img.at(c, y, x);
        }
        for (int y = by; y < std::min(img.height, by + block); ++y) {
          for (int x = bx; x < std::min(img.width, bx + block); ++x) out.at(c, y, x) = static_cast<float>(s / n);
        }
      }
    }
  }
  return out;
}

/// Blends 8x8 blocks toward their mean and quantizes, mimicking block compression.
inline Image jpeg_blocking(const Image& img, int sev, Rng&) {
  Image out = img;
  const double w = std::min(1.0, 0.18 * sev);
  const double levels = 32.0 / sev;
  for (int c = 0; c < img.channels; ++c) {
    for (int by = 0; by < img.height; by += 8) {
      for (int bx = 0; bx < img.width; bx += 8) {
        double s = 0.0;
        int n = 0;
        for (int y = by; y < std::min(img.height, by + 8); ++y) {
          for (int x = bx; x < std::min(img.width, bx + 8); ++x, ++n) s += img.at(c, y, x);
        }
        const double mean = s / n;
        for (int y = by; y < std::min(img.height, by + 8); ++y) {
          for (int x = bx; x < std::min(img.width, bx + 8); ++x) {
            const double v = (1.0 - w) * img.at(c, y, x) + w * mean;
            out.at(c, y, x) = static_cast<float>(std::round(v * levels) / levels);
          }
        }
      }
    }
  }
  clamp_unit(out);
  return out;
}

/// Smooth sinusoidal displacement field.
inline Image elastic(const Image& img, int sev, Rng& rng) {
  const double amp = 0.4 * sev;
  const double fx = rng.uniform(1.0, 3.0), fy = rng.uniform(1.0, 3.0);
  const double px = rng.uniform(0.0, 2 * std::numbers::pi), py = rng.uniform(0.0, 2 * std::numbers::pi);
  Image out(img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = amp * std::sin(2 * std::numbers::pi * fy * y / img.height + px);
      const double dy = amp * std::sin(2 * std::numbers::pi * fx * x / img.width + py);
      const double sx = std::clamp(x + dx, 0.0, img.width - 1.0), sy = std::clamp(y + dy, 0.0, img.height - 1.0);
      for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = sample_bilinear(img, c, sy, sx);
    }
  }
  return out;
}

inline Image saturate(const Image& img, int sev, Rng&) {
  Image out = img;
  adjust_saturation(out, 1.0 + 0.5 * sev);
  return out;
}

inline const std::map<std::string, std::function<Image(const Image&, int, Rng&)>>& registry() {
  static const std::map<std::string, std::function<Image(const Image&, int, Rng&)>> r{
      {"gaussian_noise", gaussian_noise}, {"gaussian_blur", blur},       {"fog", fog},
      {"brightness", brightness},         {"contrast", contrast},        {"pixelate", pixelate},
      {"jpeg_blocking", jpeg_blocking},   {"elastic", elastic},          {"saturate", saturate}};
  return r;
}

}  // namespace corruptions

/// The built-in lightweight corruption kernels.
inline Image default_corruption(const Image& img, const std::string& type, int severity, Rng& rng) {
  const auto& r = corruptions::registry();
  auto it = r.find(type);
  if (it == r.end()) throw ConfigError("unknown corruption type '" + type + "'");
  return it->second(img, severity, rng);
}

/// Copies the clean images to out_root/normal and writes, for every selected
/// corruption type, corrupted copies to out_root/abnormal/<type>__<name>.
inline DatasetManifest build_corruption_protocol(const DatasetManifest& clean, const CorruptionSpec& spec,
                                                 const fs::path& out_root, const CorruptionFn& corrupt_fn = default_corruption,
                                                 std::uint64_t seed = 0) {
  if (spec.types.empty()) throw ConfigError("corruption spec selects no corruption types");
  for (const auto& t : spec.types) {
    if (!corruptions::registry().contains(t)) throw ConfigError("unknown corruption type '" + t + "'");
  }
  if (spec.severity < 1 || spec.severity > 5) throw ConfigError("corruption severity must lie in [1, 5]");
  for (const auto& e : clean.entries) {
    if (e.abnormal) throw DataError("build_corruption_protocol: clean manifest contains abnormal entry " + e.id);
  }
  DatasetManifest out;
  out.root = out_root;
  const Rng rng(seed);
  std::vector<ManifestEntry> abnormal;
  for (std::size_t i = 0; i < clean.entries.size(); ++i) {
    const auto& e = clean.entries[i];
    const Image img = read_png(clean.path_of(e.id));
    const std::string name = fs::path(e.id).filename().string();
    const std::string normal_id = "normal/" + name;
    write_png(out_root / normal_id, img);
    out.entries.push_back({normal_id, false, "clean", img.height, img.width});
    for (const auto& type : spec.types) {
      Rng r = rng.split(type, i);
      const Image bad = corrupt_fn(img, type, spec.severity, r);
      const std::string id = "abnormal/" + type + "__" + name;
      write_png(out_root / id, bad);
      abnormal.push_back({id, true, type, bad.height, bad.width});
    }
  }
  out.entries.insert(out.entries.end(), abnormal.begin(), abnormal.end());
  return out;
}

/// n random size x size crops of one image.
inline std::vector<Image> crop_patches(const Image& image, int size, int n, Rng& rng) {
  if (size < 1 || image.height < size || image.width < size) {
    throw DataError("crop_patches: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                    " is smaller than the patch size " + std::to_string(size));
  }
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    const int y0 = static_cast<int>(rng.uniform_int(0, image.height - size));
    const int x0 = static_cast<int>(rng.uniform_int(0, image.width - size));
    Image patch(image.channels, size, size);
    for (int c = 0; c < image.channels; ++c) {
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) patch.at(c, y, x) = image.at(c, y0 + y, x0 + x);
      }
    }
    out.push_back(std::move(patch));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark: textured background plus one canonical shape with pose
// and color jitter. Abnormal samples add one local defect to a normal render.

struct SynthSpec {
  int n_normal = 105;
  int n_abnormal = 100;
  int image_size = 32;
  std::string shape = "circle";  // circle | square | triangle
  std::string defect = "paste";  // paste | scar | blur
  /// Scales every nuisance range of the normal renders (pose, color, texture phase).
  double jitter = 1.0;

  void validate() const {
    if (n_normal < 0 || n_abnormal < 0) throw ConfigError("synth counts must be >= 0");
    if (image_size < 8) throw ConfigError("synth.image_size must be >= 8");
    if (!(jitter >= 0.0 && jitter <= 1.0)) throw ConfigError("synth.jitter must lie in [0, 1]");
    if (shape != "circle" && shape != "square" && shape != "triangle") {
      throw ConfigError("synth.shape must be circle, square or triangle");
    }
    if (defect != "paste" && defect != "scar" && defect != "blur") {
      throw ConfigError("synth.defect must be paste, scar or blur");
    }
  }
};

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"n_normal", s.n_normal},     {"n_abnormal", s.n_abnormal}, {"image_size", s.image_size},
                     {"shape", s.shape},           {"defect", s.defect},
                     {"jitter", s.jitter}};
}

inline constexpr double kMinPasteDifference = 0.1;

struct SynthPair {
  Image normal;
  Image abnormal;
  /// Bounding box of the defect.
  Box defect;
};

namespace detail {

inline bool inside_shape(const std::string& shape, double x, double y, double cx, double cy, double radius,
                         double angle) {
  const double dx = x - cx, dy = y - cy;
  const double u = std::cos(angle) * dx + std::sin(angle) * dy;
  const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
  if (shape == "circle") {
    // Slightly elliptic so that rotation is visible.
    return (u * u) / (radius * radius) + (v * v) / (0.7 * 0.7 * radius * radius) <= 1.0;
  }
  if (shape == "square") return std::abs(u) <= radius * 0.85 && std::abs(v) <= radius * 0.85;
  // Triangle pointing along +u.
  return u >= -radius * 0.5 && u <= radius && std::abs(v) <= (radius - u) * 0.6;
}

inline Image render_normal(const SynthSpec& spec, Rng& rng) {
  const int s = spec.image_size;
  Image img(3, s, s);
  const double base[3] = {0.55, 0.52, 0.45};
  const double j = spec.jitter;
  const double bright = rng.uniform(-0.05, 0.05) * j;
  const double phase = rng.uniform(-std::numbers::pi, std::numbers::pi) * j;
  // Roughly aligned object: small pose jitter, as on an inspection line.
  const double cx = s / 2.0 + rng.uniform(-0.06, 0.06) * j * s, cy = s / 2.0 + rng.uniform(-0.06, 0.06) * j * s;
  const double radius = 0.3 * s * (1.0 + rng.uniform(-0.08, 0.08) * j);
  const double angle = rng.uniform(-15.0, 15.0) * j * std::numbers::pi / 180.0;
  double color[3] = {0.2, 0.35, 0.75};
  for (auto& c : color) c += rng.uniform(-0.08, 0.08) * j;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double texture = 0.05 * std::sin(2 * std::numbers::pi * (3.0 * x + 2.0 * y) / s + phase);
      const bool in = inside_shape(spec.shape, x, y, cx, cy, radius, angle);
      for (int c = 0; c < 3; ++c) {
        const double v = in ? color[c] : base[c] + texture;
        img.at(c, y, x) = static_cast<float>(v + bright + 0.015 * rng.normal());
      }
    }
  }
  clamp_unit(img);
  return img;
}

}  // namespace detail

/// Renders a normal image and its defective counterpart from one stream.
///  - paste: a rectangle copied from elsewhere in the same image, with a mean
///    absolute difference of at least kMinPasteDifference to what it covers
///    (best of 32 source draws otherwise);
///  - scar: a thin rotated rectangle of random color;
///  - blur: a strongly blurred rectangle.
inline SynthPair render_synth_pair(const SynthSpec& spec, Rng& rng) {
  SynthPair p;
  p.normal = detail::render_normal(spec, rng);
  p.abnormal = p.normal;
  const int s = spec.image_size;
  if (spec.defect == "scar") {
    ScarSpec scar_spec{{1.5, 2.5}, {0.3 * s, 0.5 * s}, {-90.0, 90.0}};
    auto r = scar(p.normal, scar_spec, rng);
    p.abnormal = r.image;
    int x0 = s, y0 = s, x1 = -1, y1 = -1;
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        if (!r.shape.covers(x, y)) continue;
        x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
      }
    }
    p.defect = x1 >= 0 ? Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1} : Box{};
    return p;
  }
  const int w = static_cast<int>(rng.uniform_int(s * 3 / 20, s * 3 / 10));
  const int h = static_cast<int>(rng.uniform_int(s * 3 / 20, s * 3 / 10));
  p.defect = Box{static_cast<int>(rng.uniform_int(0, s - w)), static_cast<int>(rng.uniform_int(0, s - h)), w, h};
  if (spec.defect == "paste") {
    // Source drawn until its content visibly differs from the destination.
    auto mean_abs_diff = [&](int sx, int sy) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            d += std::abs(p.normal.at(c, sy + y, sx + x) - p.normal.at(c, p.defect.y + y, p.defect.x + x));
          }
        }
      }
      return d / (3.0 * w * h);
    };
    int best_x = 0, best_y = 0;
    double best = -1.0;
    for (int attempt = 0; attempt < 32 && best < kMinPasteDifference; ++attempt) {
      const int sx = static_cast<int>(rng.uniform_int(0, s - w)), sy = static_cast<int>(rng.uniform_int(0, s - h));
      const double d = mean_abs_diff(sx, sy);
      if (d > best) best = d, best_x = sx, best_y = sy;
    }
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          p.abnormal.at(c, p.defect.y + y, p.defect.x + x) = p.normal.at(c, best_y + y, best_x + x);
        }
      }
    }
  } else {
    const Image blurred = gaussian_blur(p.normal, 9, 3.0);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          p.abnormal.at(c, p.defect.y + y, p.defect.x + x) = blurred.at(c, p.defect.y + y, p.defect.x + x);
        }
      }
    }
  }
  return p;
}

/// Writes root/normal/normal_NNNN.png, root/abnormal/abnormal_NNNN.png and
/// root/synth.json. Normal i uses stream split("normal", i); abnormal i uses
/// split("abnormal", i) and keeps only the defective half of its pair.
inline DatasetManifest synth_dataset(const SynthSpec& spec, const fs::path& root, std::uint64_t seed) {
  spec.validate();
  const Rng rng(seed);
  DatasetManifest m;
  m.root = root;
  nlohmann::json truth = nlohmann::json::array();
  auto name = [](const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d.png", prefix, i);
    return std::string(buf);
  };
  fs::create_directories(root / "normal");
  fs::create_directories(root / "abnormal");
  for (int i = 0; i < spec.n_normal; ++i) {
    Rng r = rng.split("normal", static_cast<std::uint64_t>(i));
    const Image img = detail::render_normal(spec, r);
    const std::string id = "normal/" + name("normal", i);
    write_png(root / id, img);
    m.entries.push_back({id, false, "normal", img.height, img.width});
  }
  for (int i = 0; i < spec.n_abnormal; ++i) {
    Rng r = rng.split("abnormal", static_cast<std::uint64_t>(i));
    const SynthPair pair = render_synth_pair(spec, r);
    const std::string id = "abnormal/" + name("abnormal", i);
    write_png(root / id, pair.abnormal);
    m.entries.push_back({id, true, spec.defect, pair.abnormal.height, pair.abnormal.width});
    truth.push_back({{"id", id},
                     {"defect", spec.defect},
                     {"box", {pair.defect.x, pair.defect.y, pair.defect.width, pair.defect.height}}});
  }
  nlohmann::json meta;
  meta["spec"] = spec;
  meta["seed"] = seed;
  meta["defects"] = truth;
  std::ofstream os(root / "synth.json");
  os << meta.dump(2) << '\n';
  if (!os) throw DataError("cannot write " + (root / "synth.json").string());
  return m;
}

}  // namespace coftad
