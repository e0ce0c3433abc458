#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "coftad/error.hpp"
#include "coftad/tensor.hpp"

namespace coftad {

/// Planar (CHW) float image with values in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data == b.data;
  }
};

/// A labeled image. Labels are "normal" or "abnormal".
struct ImageSample {
  Image image;
  bool abnormal = false;
  std::string id;
};

inline void clamp_unit(Image& img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

/// Luma per pixel (ITU-R 601 weights); single channel images pass through.
inline std::vector<float> luminance(const Image& img) {
  std::vector<float> y(img.pixels());
  if (img.channels < 3) {
    std::copy_n(img.data.begin(), img.pixels(), y.begin());
    return y;
  }
  const std::size_t n = img.pixels();
  for (std::size_t p = 0; p < n; ++p) {
    y[p] = 0.299f * img.data[p] + 0.587f * img.data[n + p] + 0.114f * img.data[2 * n + p];
  }
  return y;
}

/// Samples channel c at a real-valued location; out-of-range reads return fill.
inline float sample_bilinear(const Image& img, int c, double y, double x, float fill = 0.0f) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) return fill;
    return img.at(c, yy, xx);
  };
  double v = px(y0, x0) * (1.0 - fy) * (1.0 - fx);
  if (fx != 0.0) v += px(y0, x0 + 1) * (1.0 - fy) * fx;
  if (fy != 0.0) v += px(y0 + 1, x0) * fy * (1.0 - fx);
  if (fx != 0.0 && fy != 0.0) v += px(y0 + 1, x0 + 1) * fy * fx;
  return static_cast<float>(v);
}

/// Bilinear resize with pixel-center alignment. Same-size input is returned unchanged.
inline Image resize(const Image& img, int height, int width) {
  if (img.height == height && img.width == width) return img;
  Image out(img.channels, height, width);
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
      for (int x = 0; x < width; ++x) {
        const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
        out.at(c, y, x) = sample_bilinear(img, c, src_y, src_x);
      }
    }
  }
  return out;
}

inline Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  if (img.channels != 1) throw DataError("to_rgb: unsupported channel count");
  Image out(3, img.height, img.width);
  for (int c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * img.pixels());
  return out;
}

/// Stacks equally sized images into an [N, C, H, W] tensor.
inline nn::Tensor to_batch(std::span<const Image> images) {
  if (images.empty()) throw ContractError("to_batch: empty image list");
  const Image& first = images.front();
  std::vector<float> data;
  data.reserve(images.size() * first.data.size());
  for (const auto& img : images) {
    if (!img.same_shape(first)) throw ContractError("to_batch: images differ in shape");
    data.insert(data.end(), img.data.begin(), img.data.end());
  }
  return nn::Tensor({static_cast<int>(images.size()), first.channels, first.height, first.width},
                    std::move(data));
}

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Reads an 8-bit PNG as an RGB image (grayscale and alpha are converted).
inline Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image img(3, static_cast<int>(png.height), static_cast<int>(png.width));
  const std::size_t n = img.pixels();
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) img.data[c * n + p] = buffer[p * 3 + c] / 255.0f;
  }
  return img;
}

/// Writes an RGB (or single-channel) image as an 8-bit PNG.
inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3 && img.channels != 1) throw DataError("write_png: need 1 or 3 channels");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t n = img.pixels();
  std::vector<std::uint8_t> buffer(n * img.channels);
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < img.channels; ++c) buffer[p * img.channels + c] = to_byte(img.data[c * n + p]);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

}  // namespace coftad
