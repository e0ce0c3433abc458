#pragma once

// Named-tensor container file.
//
// Layout (little-endian):
//   char[8]  magic "COFTADNT"
//   u32      format version (1)
//   u32      tensor count
//   per tensor:
//     u32    name length, then the UTF-8 name bytes
//     u32    rank, then rank x i64 dimensions
//     f32    values, row-major
//
// Pretrained backbones are consumed in the same container. Names follow the
// torchvision ResNet convention ("conv1.weight", "layer2.0.downsample.1.running_var", ...);
// tools/export_torchvision_resnet18.py converts a torchvision state dict.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "coftad/error.hpp"
#include "coftad/tensor.hpp"

namespace coftad {

using NamedTensors = std::vector<std::pair<std::string, nn::Tensor>>;

namespace detail {
inline constexpr char kTensorMagic[8] = {'C', 'O', 'F', 'T', 'A', 'D', 'N', 'T'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CheckpointError("truncated tensor file " + path.string());
  }
  return v;
}
}  // namespace detail

inline void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os.write(detail::kTensorMagic, sizeof(detail::kTensorMagic));
  detail::write_pod(os, detail::kTensorFormatVersion);
  detail::write_pod(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) detail::write_pod(os, static_cast<std::int64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!os) throw CheckpointError("failed writing " + path.string());
}

inline NamedTensors read_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, detail::kTensorMagic, sizeof(magic)) != 0) {
    throw CheckpointError(path.string() + " is not a tensor container file");
  }
  const auto version = detail::read_pod<std::uint32_t>(is, path);
  if (version != detail::kTensorFormatVersion) {
    throw CheckpointError("unsupported tensor file version " + std::to_string(version));
  }
  const auto count = detail::read_pod<std::uint32_t>(is, path);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::read_pod<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("truncated tensor file " + path.string());
    const auto rank = detail::read_pod<std::uint32_t>(is, path);
    nn::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = detail::read_pod<std::int64_t>(is, path);
      if (dim < 0 || dim > (1ll << 31)) throw CheckpointError("bad dimension in " + path.string());
      shape.push_back(static_cast<int>(dim));
    }
    nn::Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw CheckpointError("truncated tensor file " + path.string());
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace coftad
