#pragma once

// Positive augmentations t(X) model benign variation of normal images;
// negative augmentations t_n(X) synthesize pseudo-anomalies. All transforms
// are pure functions of (image, policy, rng state) and clamp to [0, 1].

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coftad/error.hpp"
#include "coftad/image.hpp"
#include "coftad/rng.hpp"
#include "coftad/tensor.hpp"

namespace coftad {

using Range = std::array<double, 2>;

struct AffineSpec {
  double p = 1.0;
  Range degrees{-15.0, 15.0};
  /// Maximum translation as a fraction of width / height.
  Range translate{0.1, 0.1};
  Range scale{0.9, 1.1};
  /// Reflect the image at its borders instead of filling uncovered pixels with zero.
  bool reflect_border = true;
};

struct ColorJitterSpec {
  double p = 1.0;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
};

struct BlurSpec {
  double p = 1.0;
  int kernel = 5;
  Range sigma{0.1, 2.0};
};

struct GrayscaleSpec {
  double p = 0.2;
};

using TransformSpec = std::variant<AffineSpec, ColorJitterSpec, BlurSpec, GrayscaleSpec>;

inline std::string transform_name(const TransformSpec& t) {
  constexpr std::array<const char*, 4> names{"affine", "color_jitter", "blur", "grayscale"};
  return names[t.index()];
}

/// Ordered recipe of positive transforms, each applied with its own probability.
struct PositivePolicy {
  std::vector<TransformSpec> recipe;

  /// Returns the first range violation, if any.
  std::optional<std::string> check() const {
    if (recipe.empty()) return "positive recipe is empty";
    auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
    auto range_ok = [](const Range& r) { return std::isfinite(r[0]) && std::isfinite(r[1]) && r[0] <= r[1]; };
    for (const auto& t : recipe) {
      const std::string name = transform_name(t);
      if (const auto* a = std::get_if<AffineSpec>(&t)) {
        if (!prob_ok(a->p)) return name + ".p must lie in [0, 1]";
        if (!range_ok(a->degrees)) return name + ".degrees must be an ordered range";
        if (a->translate[0] < 0 || a->translate[0] > 1 || a->translate[1] < 0 || a->translate[1] > 1) {
          return name + ".translate fractions must lie in [0, 1]";
        }
        if (!range_ok(a->scale) || a->scale[0] <= 0) return name + ".scale must be a positive ordered range";
      } else if (const auto* j = std::get_if<ColorJitterSpec>(&t)) {
        if (!prob_ok(j->p)) return name + ".p must lie in [0, 1]";
        if (j->brightness < 0 || j->contrast < 0 || j->saturation < 0) {
          return name + " brightness/contrast/saturation must be >= 0";
        }
        if (j->hue < 0 || j->hue > 0.5) return name + ".hue must lie in [0, 0.5]";
      } else if (const auto* b = std::get_if<BlurSpec>(&t)) {
        if (!prob_ok(b->p)) return name + ".p must lie in [0, 1]";
        if (b->kernel < 1 || b->kernel % 2 == 0) return name + ".kernel must be a positive odd integer";
        if (!range_ok(b->sigma) || b->sigma[0] < 0) return name + ".sigma must be a nonnegative ordered range";
      } else if (const auto* g = std::get_if<GrayscaleSpec>(&t)) {
        if (!prob_ok(g->p)) return name + ".p must lie in [0, 1]";
      }
    }
    return std::nullopt;
  }

  void validate() const {
    if (auto problem = check()) throw ConfigError("invalid positive policy: " + *problem);
  }

  /// Affine + color jitter (natural-image datasets such as flower species).
  static PositivePolicy flowers() { return {{AffineSpec{}, ColorJitterSpec{}}}; }
  /// Affine only (corruption benchmarks, where color shifts are the anomalies).
  static PositivePolicy cifar_c() { return {{AffineSpec{}}}; }
  /// Affine + blur + grayscale (industrial inspection).
  static PositivePolicy industrial() {
    return {{AffineSpec{}, BlurSpec{0.5, 5, {0.1, 1.5}}, GrayscaleSpec{0.2}}};
  }
  /// Every transform disabled; output equals input.
  static PositivePolicy identity() { return {{AffineSpec{0.0}}}; }
};

struct CutPasteSpec {
  Range area{0.02, 0.15};
  Range aspect{0.3, 1.0 / 0.3};
};

/// Thin rotated rectangle filled with a random color. Pixel units.
struct ScarSpec {
  Range width{2.0, 16.0};
  Range length{10.0, 25.0};
  Range rotation{-45.0, 45.0};
};

/// Blur followed by brightness and contrast perturbation. The jitter ranges
/// are magnitudes: factor = 1 +/- U(lo, hi) with a random sign.
struct CorruptionNegSpec {
  Range sigma{1.0, 2.0};
  Range brightness{0.2, 0.5};
  Range contrast{0.2, 0.5};
};

struct NegativePolicy {
  std::variant<CutPasteSpec, ScarSpec, CorruptionNegSpec> recipe = CutPasteSpec{};

  std::string kind() const {
    constexpr std::array<const char*, 3> names{"cutpaste", "scar", "corruption"};
    return names[recipe.index()];
  }

  std::optional<std::string> check() const {
    auto ordered = [](const Range& r) { return std::isfinite(r[0]) && std::isfinite(r[1]) && r[0] <= r[1]; };
    if (const auto* c = std::get_if<CutPasteSpec>(&recipe)) {
      if (!ordered(c->area) || c->area[0] <= 0 || c->area[1] >= 1) return "cutpaste.area_range must lie inside (0, 1)";
      if (!ordered(c->aspect) || c->aspect[0] <= 0) return "cutpaste.aspect_range must be positive";
    } else if (const auto* s = std::get_if<ScarSpec>(&recipe)) {
      if (!ordered(s->width) || s->width[0] <= 0) return "scar.width_range must be positive";
      if (!ordered(s->length) || s->length[0] <= 0) return "scar.length_range must be positive";
      if (!ordered(s->rotation)) return "scar.rotation_range must be ordered";
    } else if (const auto* k = std::get_if<CorruptionNegSpec>(&recipe)) {
      if (!ordered(k->sigma) || k->sigma[0] < 0) return "corruption.sigma_range must be nonnegative";
      if (!ordered(k->brightness) || k->brightness[0] < 0 || k->brightness[1] >= 1) {
        return "corruption.brightness_range must lie in [0, 1)";
      }
      if (!ordered(k->contrast) || k->contrast[0] < 0 || k->contrast[1] >= 1) {
        return "corruption.contrast_range must lie in [0, 1)";
      }
    }
    return std::nullopt;
  }

  void validate() const {
    if (auto problem = check()) throw ConfigError("invalid negative policy: " + *problem);
  }
};

// ---------------------------------------------------------------------------
// Primitive transforms

/// Mirrors a pixel coordinate into [0, n - 1] about the outer pixel edges.
inline double reflect_coordinate(double v, int n) {
  const double period = 2.0 * n;
  double u = std::fmod(v + 0.5, period);
  if (u < 0) u += period;
  if (u >= n) u = period - u;
  return std::clamp(u - 0.5, 0.0, n - 1.0);
}

/// Affine warp about the image center: output(p) = input(c + R(-angle)(p - c - t) / scale),
/// with bilinear sampling. Uncovered pixels are zero, or mirrored from the image
/// with reflect_border. Angles are in degrees; multiples of 90 use exact
/// rotation coefficients.
inline Image affine_warp(const Image& img, double angle_deg, double tx, double ty, double scale,
                         bool reflect_border = false) {
  double c = 0.0, s = 0.0;
  const double quarter = angle_deg / 90.0;
  if (quarter == std::floor(quarter)) {
    const auto q = static_cast<long long>(quarter);
    constexpr std::array<std::array<double, 2>, 4> exact{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
    const auto& e = exact[static_cast<std::size_t>(((q % 4) + 4) % 4)];
    c = e[0];
    s = e[1];
  } else {
    const double rad = angle_deg * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  Image out(img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - cx - tx, dy = y - cy - ty;
      // Inverse rotation R(-angle) = [[c, s], [-s, c]].
      double sx = cx + (c * dx + s * dy) / scale;
      double sy = cy + (-s * dx + c * dy) / scale;
      if (reflect_border) {
        sx = reflect_coordinate(sx, img.width);
        sy = reflect_coordinate(sy, img.height);
      }
      for (int ch = 0; ch < img.channels; ++ch) out.at(ch, y, x) = sample_bilinear(img, ch, sy, sx);
    }
  }
  return out;
}

inline void adjust_brightness(Image& img, double factor) {
  if (factor == 1.0) return;
  for (auto& v : img.data) v = static_cast<float>(v * factor);
  clamp_unit(img);
}

/// Blends every pixel with the mean luminance of the image.
inline void adjust_contrast(Image& img, double factor) {
  if (factor == 1.0) return;
  const auto lum = luminance(img);
  double mean = 0.0;
  for (float v : lum) mean += v;
  mean /= static_cast<double>(lum.size());
  for (auto& v : img.data) v = static_cast<float>(factor * v + (1.0 - factor) * mean);
  clamp_unit(img);
}

inline void adjust_saturation(Image& img, double factor) {
  if (factor == 1.0 || img.channels != 3) return;
  const auto lum = luminance(img);
  const std::size_t n = img.pixels();
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < n; ++p) {
      float& v = img.data[c * n + p];
      v = static_cast<float>(factor * v + (1.0 - factor) * lum[p]);
    }
  }
  clamp_unit(img);
}

/// Rotates hue by shift (fraction of a full turn) in HSV space.
inline void adjust_hue(Image& img, double shift) {
  if (shift == 0.0 || img.channels != 3) return;
  const std::size_t n = img.pixels();
  for (std::size_t p = 0; p < n; ++p) {
    const double r = img.data[p], g = img.data[n + p], b = img.data[2 * n + p];
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0.0) {
      if (mx == r) h = std::fmod((g - b) / delta, 6.0);
      else if (mx == g) h = (b - r) / delta + 2.0;
      else h = (r - g) / delta + 4.0;
      h /= 6.0;
    }
    const double sat = mx > 0.0 ? delta / mx : 0.0;
    h = h + shift;
    h -= std::floor(h);
    const double hh = h * 6.0;
    const int sector = static_cast<int>(std::floor(hh)) % 6;
    const double f = hh - std::floor(hh);
    const double v = mx;
    const double pp = v * (1.0 - sat), q = v * (1.0 - sat * f), t = v * (1.0 - sat * (1.0 - f));
    double rr = v, gg = v, bb = v;
    switch (sector) {
      case 0: rr = v; gg = t; bb = pp; break;
      case 1: rr = q; gg = v; bb = pp; break;
      case 2: rr = pp; gg = v; bb = t; break;
      case 3: rr = pp; gg = q; bb = v; break;
      case 4: rr = t; gg = pp; bb = v; break;
      default: rr = v; gg = pp; bb = q; break;
    }
    img.data[p] = static_cast<float>(rr);
    img.data[n + p] = static_cast<float>(gg);
    img.data[2 * n + p] = static_cast<float>(bb);
  }
  clamp_unit(img);
}

/// Separable Gaussian blur with reflect padding. sigma <= 0 is the identity.
inline Image gaussian_blur(const Image& img, int kernel, double sigma) {
  if (sigma <= 0.0 || kernel <= 1) return img;
  const int r = kernel / 2;
  std::vector<double> w(static_cast<std::size_t>(kernel));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += w[static_cast<std::size_t>(i + r)];
  }
  for (auto& v : w) v /= sum;
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
    return i;
  };
  Image tmp(img.channels, img.height, img.width), out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += w[static_cast<std::size_t>(k + r)] * img.at(c, y, reflect(x + k, img.width));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    }
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += w[static_cast<std::size_t>(k + r)] * tmp.at(c, reflect(y + k, img.height), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  clamp_unit(out);
  return out;
}

inline Image grayscale(const Image& img) {
  if (img.channels != 3) return img;
  const auto lum = luminance(img);
  Image out = img;
  for (int c = 0; c < 3; ++c) std::copy(lum.begin(), lum.end(), out.data.begin() + c * img.pixels());
  clamp_unit(out);
  return out;
}

// ---------------------------------------------------------------------------
// Positive augmentation

/// Applies each transform of the recipe in order. Every transform consumes the
/// same number of draws whether or not it fires, so the stream layout does not
/// depend on the outcome of earlier coin flips.
inline Image apply_positive(const Image& image, const PositivePolicy& policy, Rng& rng) {
  Image img = image;
  for (const auto& t : policy.recipe) {
    if (const auto* a = std::get_if<AffineSpec>(&t)) {
      const bool fire = rng.bernoulli(a->p);
      const double angle = rng.uniform(a->degrees[0], a->degrees[1]);
      const double tx = rng.uniform(-a->translate[0], a->translate[0]) * img.width;
      const double ty = rng.uniform(-a->translate[1], a->translate[1]) * img.height;
      const double scale = rng.uniform(a->scale[0], a->scale[1]);
      if (fire) img = affine_warp(img, angle, tx, ty, scale, a->reflect_border);
    } else if (const auto* j = std::get_if<ColorJitterSpec>(&t)) {
      const bool fire = rng.bernoulli(j->p);
      const double b = rng.uniform(std::max(0.0, 1.0 - j->brightness), 1.0 + j->brightness);
      const double c = rng.uniform(std::max(0.0, 1.0 - j->contrast), 1.0 + j->contrast);
      const double s = rng.uniform(std::max(0.0, 1.0 - j->saturation), 1.0 + j->saturation);
      const double h = rng.uniform(-j->hue, j->hue);
      if (fire) {
        adjust_brightness(img, b);
        adjust_contrast(img, c);
        adjust_saturation(img, s);
        adjust_hue(img, h);
      }
    } else if (const auto* bl = std::get_if<BlurSpec>(&t)) {
      const bool fire = rng.bernoulli(bl->p);
      const double sigma = rng.uniform(bl->sigma[0], bl->sigma[1]);
      if (fire) img = gaussian_blur(img, bl->kernel, sigma);
    } else if (const auto* g = std::get_if<GrayscaleSpec>(&t)) {
      if (rng.bernoulli(g->p)) img = grayscale(img);
    }
  }
  clamp_unit(img);
  return img;
}

// ---------------------------------------------------------------------------
// Negative augmentation

struct Box {
  int x = 0, y = 0, width = 0, height = 0;
  int area() const { return width * height; }
  bool contains(int px, int py) const { return px >= x && px < x + width && py >= y && py < y + height; }
  friend bool operator==(const Box&, const Box&) = default;
};

struct CutPasteResult {
  Image image;
  Box cut;
  Box paste;
};

namespace detail {

/// Integer patch size whose area fraction lies in [lo, hi] and whose aspect
/// ratio is closest (in log space) to the requested one. Falls back to the
/// rounded target when the range admits no integer rectangle.
inline std::pair<int, int> patch_size(int height, int width, double area_fraction, double aspect, double lo,
                                      double hi) {
  const double total = static_cast<double>(height) * width;
  const double target = area_fraction * total;
  long min_area = static_cast<long>(std::ceil(lo * total - 1e-9));
  long max_area = static_cast<long>(std::floor(hi * total + 1e-9));
  if (min_area > max_area) {
    // No integer area inside [lo, hi]: aim for the rounded target exactly.
    min_area = max_area = std::clamp(std::lround(target), 1L, static_cast<long>(total));
  }
  int w = std::clamp(static_cast<int>(std::lround(std::sqrt(target * aspect))), 1, width);
  int h = std::clamp(static_cast<int>(std::lround(std::sqrt(target / aspect))), 1, height);
  const auto in_range = [&](int ww, int hh) {
    const long a = static_cast<long>(ww) * hh;
    return a >= std::max(min_area, 1L) && a <= max_area;
  };
  if (in_range(w, h)) return {w, h};
  // Search every width for the closest admissible rectangle.
  double best = std::numeric_limits<double>::infinity();
  std::pair<int, int> chosen{w, h};
  for (int ww = 1; ww <= width; ++ww) {
    const int base = static_cast<int>(std::lround(target / ww));
    for (int hh = base - 1; hh <= base + 1; ++hh) {
      if (hh < 1 || hh > height || !in_range(ww, hh)) continue;
      const double cost = std::abs(std::log(static_cast<double>(ww) / hh) - std::log(aspect)) +
                          std::abs(static_cast<double>(ww) * hh - target) / total;
      if (cost < best) {
        best = cost;
        chosen = {ww, hh};
      }
    }
  }
  if (best < std::numeric_limits<double>::infinity()) return chosen;
  // The area has no factorization that fits (e.g. a large prime): take the nearest area.
  for (int ww = 1; ww <= width; ++ww) {
    const int hh = std::clamp(static_cast<int>(std::lround(target / ww)), 1, height);
    const double cost = std::abs(static_cast<double>(ww) * hh - target) +
                        1e-3 * std::abs(std::log(static_cast<double>(ww) / hh) - std::log(aspect));
    if (cost < best) {
      best = cost;
      chosen = {ww, hh};
    }
  }
  return chosen;
}

}  // namespace detail

/// Copies a random rectangle of the image to an independently drawn random
/// location. Pixels outside the paste box are unchanged bit for bit.
inline CutPasteResult cut_paste(const Image& image, Range area_range, Range aspect_range, Rng& rng) {
  if (!(area_range[0] > 0.0 && area_range[0] <= area_range[1] && area_range[1] < 1.0)) {
    throw ContractError("cut_paste: area range must satisfy 0 < lo <= hi < 1");
  }
  if (!(aspect_range[0] > 0.0 && aspect_range[0] <= aspect_range[1])) {
    throw ContractError("cut_paste: aspect range must be positive and ordered");
  }
  const double total = static_cast<double>(image.height) * image.width;
  if (image.height < 2 || image.width < 2 || area_range[1] * total < 1.0) {
    throw DataError("cut_paste: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                    " is too small for the requested patch area");
  }
  const double frac = rng.uniform(area_range[0], area_range[1]);
  const double aspect = std::exp(rng.uniform(std::log(aspect_range[0]), std::log(aspect_range[1])));
  const auto [w, h] = detail::patch_size(image.height, image.width, frac, aspect, area_range[0], area_range[1]);
  CutPasteResult r;
  r.cut = Box{static_cast<int>(rng.uniform_int(0, image.width - w)), static_cast<int>(rng.uniform_int(0, image.height - h)), w, h};
  r.paste = Box{static_cast<int>(rng.uniform_int(0, image.width - w)), static_cast<int>(rng.uniform_int(0, image.height - h)), w, h};
  r.image = image;
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) r.image.at(c, r.paste.y + y, r.paste.x + x) = image.at(c, r.cut.y + y, r.cut.x + x);
    }
  }
  return r;
}

struct ScarShape {
  double center_x = 0, center_y = 0;
  double width = 0, length = 0;
  double angle_deg = 0;
  std::vector<float> color;

  /// True when the pixel center (x, y) falls inside the rotated rectangle.
  bool covers(int x, int y) const {
    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double dx = x - center_x, dy = y - center_y;
    const double u = std::cos(rad) * dx + std::sin(rad) * dy;
    const double v = -std::sin(rad) * dx + std::cos(rad) * dy;
    return std::abs(u) <= length / 2.0 && std::abs(v) <= width / 2.0;
  }
};

struct ScarResult {
  Image image;
  ScarShape shape;
};

/// Paints one thin rotated rectangle of a random color at a random location.
inline ScarResult scar(const Image& image, const ScarSpec& spec, Rng& rng) {
  ScarResult r;
  r.shape.width = rng.uniform(spec.width[0], spec.width[1]);
  r.shape.length = rng.uniform(spec.length[0], spec.length[1]);
  r.shape.angle_deg = rng.uniform(spec.rotation[0], spec.rotation[1]);
  r.shape.center_x = rng.uniform(0.0, image.width - 1.0);
  r.shape.center_y = rng.uniform(0.0, image.height - 1.0);
  r.shape.color.resize(static_cast<std::size_t>(image.channels));
  for (auto& c : r.shape.color) c = static_cast<float>(rng.uniform());
  r.image = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!r.shape.covers(x, y)) continue;
      for (int c = 0; c < image.channels; ++c) r.image.at(c, y, x) = r.shape.color[static_cast<std::size_t>(c)];
    }
  }
  return r;
}

/// Blur then brightness/contrast perturbation.
inline Image corrupt(const Image& image, const CorruptionNegSpec& spec, Rng& rng) {
  const double sigma = rng.uniform(spec.sigma[0], spec.sigma[1]);
  const double b_sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const double b = 1.0 + b_sign * rng.uniform(spec.brightness[0], spec.brightness[1]);
  const double c_sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const double c = 1.0 + c_sign * rng.uniform(spec.contrast[0], spec.contrast[1]);
  const int kernel = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
  Image img = gaussian_blur(image, kernel, sigma);
  adjust_brightness(img, b);
  adjust_contrast(img, c);
  return img;
}

inline Image apply_negative(const Image& image, const NegativePolicy& policy, Rng& rng) {
  if (const auto* c = std::get_if<CutPasteSpec>(&policy.recipe)) return cut_paste(image, c->area, c->aspect, rng).image;
  if (const auto* s = std::get_if<ScarSpec>(&policy.recipe)) return scar(image, *s, rng).image;
  return corrupt(image, std::get<CorruptionNegSpec>(policy.recipe), rng);
}

// ---------------------------------------------------------------------------
// Training batches

struct TrainingBatch {
  nn::Tensor view1;
  nn::Tensor view2;
  nn::Tensor negatives;
  nn::Tensor originals;
  /// Cross-instance partner of each row.
  std::vector<int> pairing;
  /// Few-shot index each row was drawn from.
  std::vector<int> base_indices;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(pairing.size()); }
};

/// Uniform random permutation of 0..n-1 without fixed points (rejection
/// sampling); n = 1 yields the identity.
inline std::vector<int> derangement(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (;;) {
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    rng.shuffle(p);
    if (n < 2) return p;
    bool fixed = false;
    for (int i = 0; i < n && !fixed; ++i) fixed = p[static_cast<std::size_t>(i)] == i;
    if (!fixed) return p;
  }
}

/// Draws batch_size base images uniformly with replacement and builds two
/// positive views plus one negative per row. Row i uses the streams
/// rng.split("row", i).split("view1" | "view2" | "negative").
inline TrainingBatch make_training_batch(std::span<const Image> fewshot, int batch_size, const PositivePolicy& pos,
                                         const NegativePolicy& neg, const Rng& rng, bool with_negatives = true) {
  if (fewshot.empty()) throw DataError("make_training_batch: few-shot set is empty");
  if (batch_size < 1) throw ContractError("make_training_batch: batch size must be positive");
  for (const auto& img : fewshot) {
    if (!img.same_shape(fewshot.front())) throw DataError("make_training_batch: few-shot images differ in shape");
  }
  TrainingBatch batch;
  batch.seed = rng.seed();
  Rng base_rng = rng.split("base");
  Rng pairing_rng = rng.split("pairing");
  std::vector<Image> v1, v2, negs, orig;
  for (int i = 0; i < batch_size; ++i) {
    const int base = static_cast<int>(base_rng.uniform_index(fewshot.size()));
    batch.base_indices.push_back(base);
    const Image& img = fewshot[static_cast<std::size_t>(base)];
    const Rng row = rng.split("row", static_cast<std::uint64_t>(i));
    Rng r1 = row.split("view1"), r2 = row.split("view2"), rn = row.split("negative");
    v1.push_back(apply_positive(img, pos, r1));
    v2.push_back(apply_positive(img, pos, r2));
    if (with_negatives) negs.push_back(apply_negative(img, neg, rn));
    orig.push_back(img);
  }
  batch.pairing = derangement(batch_size, pairing_rng);
  batch.view1 = to_batch(v1);
  batch.view2 = to_batch(v2);
  batch.originals = to_batch(orig);
  batch.negatives = with_negatives ? to_batch(negs) : nn::Tensor();
  return batch;
}

}  // namespace coftad
