#pragma once

// Online / target encoder networks.
//
// The online network is backbone f -> projector g -> predictor q. The target
// network holds EMA copies of f and g only and never records gradients.
// Backbone normalization layers run with frozen running statistics; their
// affine parameters remain trainable.

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coftad/checkpoint.hpp"
#include "coftad/error.hpp"
#include "coftad/image.hpp"
#include "coftad/rng.hpp"
#include "coftad/tensor.hpp"

namespace coftad {

enum class BackboneArch { kResNet18, kTinyCnn };
enum class Depth { kBackbone, kProjected, kPredicted };

inline std::string to_string(BackboneArch a) {
  return a == BackboneArch::kResNet18 ? "resnet18" : "tiny-cnn";
}

inline BackboneArch parse_backbone_arch(const std::string& s) {
  if (s == "resnet18") return BackboneArch::kResNet18;
  if (s == "tiny-cnn") return BackboneArch::kTinyCnn;
  throw ConfigError("unknown backbone architecture '" + s + "' (expected resnet18 or tiny-cnn)");
}

inline std::string to_string(Depth d) {
  switch (d) {
    case Depth::kBackbone: return "backbone";
    case Depth::kProjected: return "projected";
    case Depth::kPredicted: return "predicted";
  }
  return "?";
}

struct EncoderConfig {
  BackboneArch backbone_arch = BackboneArch::kResNet18;
  int input_size = 224;
  int in_channels = 3;
  int feature_dim = 512;
  int projector_hidden_dim = 512;
  int projector_out_dim = 128;
  int predictor_hidden_dim = 512;
  /// Conv widths of the tiny-cnn fixture; the last entry is its feature width.
  std::vector<int> tiny_channels = {16, 32, 64};
  std::optional<std::filesystem::path> pretrained_checkpoint;
  /// Seed for fresh initialization of the backbone (when no checkpoint) and heads.
  std::uint64_t init_seed = 0;

  /// Pooled output width of the configured backbone.
  int backbone_width() const {
    if (backbone_arch == BackboneArch::kResNet18) return 512;
    if (tiny_channels.empty()) throw ConfigError("tiny-cnn needs at least one conv layer");
    return tiny_channels.back();
  }

  void validate() const {
    if (input_size <= 0 || in_channels <= 0 || projector_hidden_dim <= 0 || projector_out_dim <= 0 ||
        predictor_hidden_dim <= 0) {
      throw ConfigError("encoder dimensions must be positive");
    }
    if (feature_dim != backbone_width()) {
      throw ConfigError("feature_dim " + std::to_string(feature_dim) + " does not match the " +
                        to_string(backbone_arch) + " pooled width " + std::to_string(backbone_width()));
    }
  }

  int depth_width(Depth d) const {
    return d == Depth::kBackbone ? feature_dim : projector_out_dim;
  }
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"arch", to_string(c.backbone_arch)},
                     {"input_size", c.input_size},
                     {"in_channels", c.in_channels},
                     {"feature_dim", c.feature_dim},
                     {"projector_hidden_dim", c.projector_hidden_dim},
                     {"projector_out_dim", c.projector_out_dim},
                     {"predictor_hidden_dim", c.predictor_hidden_dim},
                     {"tiny_channels", c.tiny_channels},
                     {"init_seed", c.init_seed}};
  if (c.pretrained_checkpoint) j["pretrained_checkpoint"] = c.pretrained_checkpoint->string();
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.backbone_arch = parse_backbone_arch(j.at("arch").get<std::string>());
  c.input_size = j.at("input_size").get<int>();
  c.in_channels = j.value("in_channels", 3);
  c.feature_dim = j.at("feature_dim").get<int>();
  c.projector_hidden_dim = j.at("projector_hidden_dim").get<int>();
  c.projector_out_dim = j.at("projector_out_dim").get<int>();
  c.predictor_hidden_dim = j.at("predictor_hidden_dim").get<int>();
  c.tiny_channels = j.value("tiny_channels", std::vector<int>{16, 32, 64});
  c.init_seed = j.value("init_seed", std::uint64_t{0});
  if (j.contains("pretrained_checkpoint")) c.pretrained_checkpoint = j["pretrained_checkpoint"].get<std::string>();
}

using ParamVisitor = std::function<void(const std::string&, nn::Var&)>;
using BufferVisitor = std::function<void(const std::string&, nn::Tensor&)>;

namespace layers {

/// Kaiming-uniform (ReLU gain): U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
inline nn::Tensor kaiming_uniform(nn::Shape shape, int fan_in, Rng& rng) {
  nn::Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

struct Conv {
  nn::Var weight;
  nn::Var bias;  // null when the layer has no bias
  int stride = 1;
  int pad = 0;

  static Conv create(int in, int out, int k, int stride, int pad, bool with_bias, Rng& rng) {
    Conv c;
    c.weight = nn::parameter(kaiming_uniform({out, in, k, k}, in * k * k, rng));
    if (with_bias) c.bias = nn::parameter(nn::Tensor({out}));
    c.stride = stride;
    c.pad = pad;
    return c;
  }
  nn::Var operator()(const nn::Var& x) const { return nn::conv2d(x, weight, bias, stride, pad); }
  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + "weight", weight);
    if (bias) f(prefix + "bias", bias);
  }
};

struct FrozenNorm {
  nn::Var weight;
  nn::Var bias;
  nn::Tensor running_mean;
  nn::Tensor running_var;
  float eps = 1e-5f;

  static FrozenNorm create(int channels) {
    return FrozenNorm{nn::parameter(nn::Tensor({channels}, 1.0f)), nn::parameter(nn::Tensor({channels})),
                      nn::Tensor({channels}), nn::Tensor({channels}, 1.0f)};
  }
  nn::Var operator()(const nn::Var& x) const {
    return nn::frozen_batch_norm2d(x, weight, bias, running_mean, running_var, eps);
  }
  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + "weight", weight);
    f(prefix + "bias", bias);
  }
  void visit_buffers(const std::string& prefix, const BufferVisitor& f) {
    f(prefix + "running_mean", running_mean);
    f(prefix + "running_var", running_var);
  }
};

struct BasicBlock {
  Conv conv1, conv2;
  FrozenNorm bn1, bn2;
  std::optional<std::pair<Conv, FrozenNorm>> downsample;

  static BasicBlock create(int in, int out, int stride, Rng& rng) {
    BasicBlock b{Conv::create(in, out, 3, stride, 1, false, rng), Conv::create(out, out, 3, 1, 1, false, rng),
                 FrozenNorm::create(out), FrozenNorm::create(out), std::nullopt};
    if (stride != 1 || in != out) {
      b.downsample.emplace(Conv::create(in, out, 1, stride, 0, false, rng), FrozenNorm::create(out));
    }
    return b;
  }
  nn::Var operator()(const nn::Var& x) const {
    auto out = nn::relu(bn1(conv1(x)));
    out = bn2(conv2(out));
    auto shortcut = downsample ? downsample->second(downsample->first(x)) : x;
    return nn::relu(nn::add(out, shortcut));
  }
  void visit(const std::string& prefix, const ParamVisitor& f) {
    conv1.visit(prefix + "conv1.", f);
    bn1.visit(prefix + "bn1.", f);
    conv2.visit(prefix + "conv2.", f);
    bn2.visit(prefix + "bn2.", f);
    if (downsample) {
      downsample->first.visit(prefix + "downsample.0.", f);
      downsample->second.visit(prefix + "downsample.1.", f);
    }
  }
  void visit_buffers(const std::string& prefix, const BufferVisitor& f) {
    bn1.visit_buffers(prefix + "bn1.", f);
    bn2.visit_buffers(prefix + "bn2.", f);
    if (downsample) downsample->second.visit_buffers(prefix + "downsample.1.", f);
  }
};

}  // namespace layers

/// Feature extractor f. Either a ResNet18-style residual CNN or the tiny-cnn
/// fixture (3x3 stride-2 conv + bias + ReLU per entry of tiny_channels,
/// followed by global average pooling).
class Backbone {
 public:
  static Backbone create(const EncoderConfig& cfg, Rng& rng) {
    Backbone b;
    b.arch_ = cfg.backbone_arch;
    b.input_norm_ = input_normalization(cfg.in_channels);
    if (cfg.backbone_arch == BackboneArch::kTinyCnn) {
      int in = cfg.in_channels;
      for (int width : cfg.tiny_channels) {
        b.tiny_.push_back(layers::Conv::create(in, width, 3, 2, 1, true, rng));
        in = width;
      }
    } else {
      b.stem_ = layers::Conv::create(cfg.in_channels, 64, 7, 2, 3, false, rng);
      b.stem_norm_ = layers::FrozenNorm::create(64);
      int in = 64;
      for (int stage = 0; stage < 4; ++stage) {
        const int width = 64 << stage;
        b.blocks_.push_back(layers::BasicBlock::create(in, width, stage == 0 ? 1 : 2, rng));
        b.blocks_.push_back(layers::BasicBlock::create(width, width, 1, rng));
        in = width;
      }
    }
    return b;
  }

  /// Fixed per-channel input standardization with the ImageNet statistics
  /// (mean 0.5, std 0.25 for non-RGB inputs). Not a parameter.
  static layers::FrozenNorm input_normalization(int channels) {
    constexpr float kMean[3] = {0.485f, 0.456f, 0.406f};
    constexpr float kStd[3] = {0.229f, 0.224f, 0.225f};
    layers::FrozenNorm n = layers::FrozenNorm::create(channels);
    n.weight->requires_grad = false;
    n.bias->requires_grad = false;
    n.eps = 0.0f;
    for (int c = 0; c < channels; ++c) {
      const float std = channels == 3 ? kStd[c] : 0.25f;
      n.running_mean[c] = channels == 3 ? kMean[c] : 0.5f;
      n.running_var[c] = std * std;
    }
    return n;
  }

  nn::Var forward(const nn::Var& input) const {
    const nn::Var x = input_norm_(input);
    if (arch_ == BackboneArch::kTinyCnn) {
      nn::Var h = x;
      for (const auto& conv : tiny_) h = nn::relu(conv(h));
      return nn::global_avg_pool(h);
    }
    auto h = nn::relu(stem_norm_(stem_(x)));
    h = nn::max_pool2d(h, 3, 2, 1);
    for (const auto& block : blocks_) h = block(h);
    return nn::global_avg_pool(h);
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    if (arch_ == BackboneArch::kTinyCnn) {
      for (std::size_t i = 0; i < tiny_.size(); ++i) tiny_[i].visit(prefix + "conv" + std::to_string(i + 1) + ".", f);
      return;
    }
    stem_.visit(prefix + "conv1.", f);
    stem_norm_.visit(prefix + "bn1.", f);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      blocks_[i].visit(prefix + "layer" + std::to_string(i / 2 + 1) + "." + std::to_string(i % 2) + ".", f);
    }
  }

  void visit_buffers(const std::string& prefix, const BufferVisitor& f) {
    if (arch_ == BackboneArch::kTinyCnn) return;
    stem_norm_.visit_buffers(prefix + "bn1.", f);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      blocks_[i].visit_buffers(
          prefix + "layer" + std::to_string(i / 2 + 1) + "." + std::to_string(i % 2) + ".", f);
    }
  }

  BackboneArch arch() const noexcept { return arch_; }

 private:
  BackboneArch arch_ = BackboneArch::kTinyCnn;
  layers::FrozenNorm input_norm_;
  std::vector<layers::Conv> tiny_;
  layers::Conv stem_;
  layers::FrozenNorm stem_norm_;
  std::vector<layers::BasicBlock> blocks_;
};

/// Two-layer MLP: linear -> batch norm -> ReLU -> linear.
class MlpHead {
 public:
  static MlpHead create(int in, int hidden, int out, Rng& rng) {
    MlpHead h;
    h.fc1_weight_ = nn::parameter(layers::kaiming_uniform({hidden, in}, in, rng));
    h.fc1_bias_ = nn::parameter(nn::Tensor({hidden}));
    h.bn_weight_ = nn::parameter(nn::Tensor({hidden}, 1.0f));
    h.bn_bias_ = nn::parameter(nn::Tensor({hidden}));
    h.bn_mean_ = nn::Tensor({hidden});
    h.bn_var_ = nn::Tensor({hidden}, 1.0f);
    h.fc2_weight_ = nn::parameter(layers::kaiming_uniform({out, hidden}, hidden, rng));
    h.fc2_bias_ = nn::parameter(nn::Tensor({out}));
    return h;
  }

  /// Training mode normalizes with batch statistics and updates the running buffers.
  nn::Var forward(const nn::Var& x, bool training) {
    auto h = nn::linear(x, fc1_weight_, fc1_bias_);
    h = nn::batch_norm1d(h, bn_weight_, bn_bias_, bn_mean_, bn_var_, training, 0.1f, 1e-5f);
    return nn::linear(nn::relu(h), fc2_weight_, fc2_bias_);
  }

  /// Inference with running statistics; never mutates the head.
  nn::Var infer(const nn::Var& x) const {
    auto h = nn::linear(x, fc1_weight_, fc1_bias_);
    nn::Tensor mean = bn_mean_, var = bn_var_;
    h = nn::batch_norm1d(h, bn_weight_, bn_bias_, mean, var, false, 0.1f, 1e-5f);
    return nn::linear(nn::relu(h), fc2_weight_, fc2_bias_);
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + "fc1.weight", fc1_weight_);
    f(prefix + "fc1.bias", fc1_bias_);
    f(prefix + "bn.weight", bn_weight_);
    f(prefix + "bn.bias", bn_bias_);
    f(prefix + "fc2.weight", fc2_weight_);
    f(prefix + "fc2.bias", fc2_bias_);
  }
  void visit_buffers(const std::string& prefix, const BufferVisitor& f) {
    f(prefix + "bn.running_mean", bn_mean_);
    f(prefix + "bn.running_var", bn_var_);
  }

 private:
  nn::Var fc1_weight_, fc1_bias_, bn_weight_, bn_bias_, fc2_weight_, fc2_bias_;
  nn::Tensor bn_mean_, bn_var_;
};

namespace detail {
/// Replaces every parameter node by a fresh leaf holding a copy of its value.
template <typename Module>
void detach_copy(Module& m, const std::string& prefix, bool requires_grad) {
  m.visit(prefix, [requires_grad](const std::string&, nn::Var& v) {
    v = nn::parameter(v->value, requires_grad);
  });
}
}  // namespace detail

struct OnlineNetwork {
  EncoderConfig config;
  Backbone backbone;
  MlpHead projector;
  MlpHead predictor;

  void visit(const ParamVisitor& f) {
    backbone.visit("backbone.", f);
    projector.visit("projector.", f);
    predictor.visit("predictor.", f);
  }
  void visit_buffers(const BufferVisitor& f) {
    backbone.visit_buffers("backbone.", f);
    projector.visit_buffers("projector.", f);
    predictor.visit_buffers("predictor.", f);
  }

  /// Deep copy; the copy shares no parameter nodes with this network.
  OnlineNetwork clone() const {
    OnlineNetwork copy = *this;
    detail::detach_copy(copy.backbone, "", true);
    detail::detach_copy(copy.projector, "", true);
    detail::detach_copy(copy.predictor, "", true);
    return copy;
  }
};

struct TargetNetwork {
  EncoderConfig config;
  Backbone backbone;
  MlpHead projector;

  void visit(const ParamVisitor& f) {
    backbone.visit("backbone.", f);
    projector.visit("projector.", f);
  }
  void visit_buffers(const BufferVisitor& f) {
    backbone.visit_buffers("backbone.", f);
    projector.visit_buffers("projector.", f);
  }
};

template <typename Net>
std::vector<std::pair<std::string, nn::Var>> named_parameters(Net& net) {
  std::vector<std::pair<std::string, nn::Var>> out;
  net.visit([&](const std::string& name, nn::Var& v) { out.emplace_back(name, v); });
  return out;
}

template <typename Net>
std::size_t parameter_count(Net& net) {
  std::size_t n = 0;
  net.visit([&](const std::string&, nn::Var& v) { n += v->value.size(); });
  return n;
}

/// Parameters and buffers, in visiting order, as a name -> tensor container.
inline NamedTensors state_dict(OnlineNetwork& net) {
  NamedTensors out;
  net.visit([&](const std::string& name, nn::Var& v) { out.emplace_back(name, v->value); });
  net.visit_buffers([&](const std::string& name, nn::Tensor& t) { out.emplace_back(name, t); });
  return out;
}

/// Builds an online network with freshly initialized weights. Backbone and
/// heads draw from independent streams of init_seed.
inline OnlineNetwork create_online(const EncoderConfig& cfg) {
  cfg.validate();
  Rng root(cfg.init_seed);
  Rng backbone_rng = root.split("backbone");
  Rng projector_rng = root.split("projector");
  Rng predictor_rng = root.split("predictor");
  return OnlineNetwork{cfg, Backbone::create(cfg, backbone_rng),
                       MlpHead::create(cfg.feature_dim, cfg.projector_hidden_dim, cfg.projector_out_dim,
                                       projector_rng),
                       MlpHead::create(cfg.projector_out_dim, cfg.predictor_hidden_dim, cfg.projector_out_dim,
                                       predictor_rng)};
}

namespace detail {

/// Copies named tensors into the visited slots with the given prefix. Every
/// slot must be present with a matching shape; entries outside the prefix are
/// ignored.
inline void assign_tensors(const NamedTensors& source, const std::string& prefix,
                           const std::function<void(const ParamVisitor&)>& visit_params,
                           const std::function<void(const BufferVisitor&)>& visit_buffers,
                           const std::string& origin) {
  std::map<std::string, const nn::Tensor*> by_name;
  for (const auto& [name, t] : source) {
    if (name.rfind(prefix, 0) == 0) by_name[name.substr(prefix.size())] = &t;
  }
  std::vector<std::string> problems;
  auto check = [&](const std::string& name, const nn::Tensor& slot) -> const nn::Tensor* {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      problems.push_back(name + " (missing)");
      return nullptr;
    }
    if (it->second->shape() != slot.shape()) {
      problems.push_back(name + " (expected " + nn::shape_string(slot.shape()) + ", found " +
                         nn::shape_string(it->second->shape()) + ")");
      return nullptr;
    }
    return it->second;
  };
  // Validate everything before mutating anything.
  visit_params([&](const std::string& name, nn::Var& v) { check(name, v->value); });
  visit_buffers([&](const std::string& name, nn::Tensor& t) { check(name, t); });
  if (!problems.empty()) {
    std::string msg = "checkpoint " + origin + " is incompatible with the architecture:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw CheckpointError(msg);
  }
  visit_params([&](const std::string& name, nn::Var& v) { v->value = *by_name.at(name); });
  visit_buffers([&](const std::string& name, nn::Tensor& t) { t = *by_name.at(name); });
}

inline bool has_prefix(const NamedTensors& tensors, const std::string& prefix) {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const auto& e) { return e.first.rfind(prefix, 0) == 0; });
}

}  // namespace detail

/// Online network whose backbone is initialized from config.pretrained_checkpoint
/// (bare backbone names, or a full checkpoint with "backbone." prefixes). The
/// heads are always fresh. Without a checkpoint the backbone is random under
/// config.init_seed.
inline OnlineNetwork load_pretrained(const EncoderConfig& cfg) {
  OnlineNetwork net = create_online(cfg);
  if (!cfg.pretrained_checkpoint) return net;
  const auto& path = *cfg.pretrained_checkpoint;
  if (!std::filesystem::exists(path)) throw CheckpointError("pretrained checkpoint not found: " + path.string());
  const NamedTensors tensors = read_tensors(path);
  const std::string prefix = detail::has_prefix(tensors, "backbone.") ? "backbone." : "";
  detail::assign_tensors(
      tensors, prefix, [&](const ParamVisitor& f) { net.backbone.visit("", f); },
      [&](const BufferVisitor& f) { net.backbone.visit_buffers("", f); }, path.string());
  return net;
}

inline TargetNetwork init_target(const OnlineNetwork& online) {
  TargetNetwork target{online.config, online.backbone, online.projector};
  detail::detach_copy(target.backbone, "", false);
  detail::detach_copy(target.projector, "", false);
  return target;
}

/// target <- beta * target + (1 - beta) * online over backbone and projector
/// parameters. Arithmetic is carried out in double per element.
inline void ema_update(TargetNetwork& target, OnlineNetwork& online, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ContractError("ema beta must lie in [0, 1], got " + std::to_string(beta));
  }
  std::vector<nn::Var> source;
  online.backbone.visit("", [&](const std::string&, nn::Var& v) { source.push_back(v); });
  online.projector.visit("", [&](const std::string&, nn::Var& v) { source.push_back(v); });
  std::size_t i = 0;
  auto update = [&](const std::string& name, nn::Var& v) {
    if (i >= source.size() || !v->value.same_shape(source[i]->value)) {
      throw ContractError("ema_update: target parameter " + name + " does not match the online network");
    }
    const nn::Tensor& p = source[i++]->value;
    auto dst = v->value.values();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k] = static_cast<float>(beta * static_cast<double>(dst[k]) + (1.0 - beta) * static_cast<double>(p[k]));
    }
  };
  target.backbone.visit("", update);
  target.projector.visit("", update);
  if (i != source.size()) throw ContractError("ema_update: parameter count mismatch");
}

/// Row-aligned embeddings of a batch of images.
struct EmbeddingSet {
  Eigen::MatrixXd vectors;
  Depth depth = Depth::kBackbone;
  std::vector<std::string> source_ids;
};

namespace detail {

template <typename Fn>
Eigen::MatrixXd embed_chunks(std::span<const Image> images, int width, int input_size, Fn&& forward) {
  constexpr std::size_t kChunk = 64;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), width);
  nn::NoGradGuard no_grad;
  for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
    const std::size_t end = std::min(images.size(), begin + kChunk);
    for (std::size_t i = begin; i < end; ++i) {
      if (images[i].height != input_size || images[i].width != input_size) {
        throw ContractError("embed: image " + std::to_string(i) + " is " + std::to_string(images[i].height) + "x" +
                            std::to_string(images[i].width) + ", expected input size " +
                            std::to_string(input_size));
      }
    }
    const nn::Tensor batch = to_batch(images.subspan(begin, end - begin));
    const nn::Var y = forward(nn::constant(batch));
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        nn::to_matrix(y->value);
  }
  return out;
}

inline std::vector<std::string> default_ids(std::size_t n, std::span<const std::string> ids) {
  if (!ids.empty()) {
    if (ids.size() != n) throw ContractError("embed: id count does not match image count");
    return {ids.begin(), ids.end()};
  }
  std::vector<std::string> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::to_string(i);
  return out;
}

}  // namespace detail

/// Embeds images (already resized to config.input_size) in evaluation mode.
inline EmbeddingSet embed(const OnlineNetwork& net, std::span<const Image> images, Depth depth,
                          std::span<const std::string> ids = {}) {
  EmbeddingSet set;
  set.depth = depth;
  set.source_ids = detail::default_ids(images.size(), ids);
  if (images.empty()) {
    set.vectors.resize(0, net.config.depth_width(depth));
    return set;
  }
  set.vectors = detail::embed_chunks(images, net.config.depth_width(depth), net.config.input_size,
                                     [&](const nn::Var& x) {
                                       nn::Var h = net.backbone.forward(x);
                                       if (depth == Depth::kBackbone) return h;
                                       h = net.projector.infer(h);
                                       if (depth == Depth::kProjected) return h;
                                       return net.predictor.infer(h);
                                     });
  return set;
}

inline EmbeddingSet embed(const TargetNetwork& net, std::span<const Image> images, Depth depth,
                          std::span<const std::string> ids = {}) {
  if (depth == Depth::kPredicted) {
    throw ContractError("embed: the target network has no predictor; depth 'predicted' is online-only");
  }
  EmbeddingSet set;
  set.depth = depth;
  set.source_ids = detail::default_ids(images.size(), ids);
  if (images.empty()) {
    set.vectors.resize(0, net.config.depth_width(depth));
    return set;
  }
  set.vectors = detail::embed_chunks(images, net.config.depth_width(depth), net.config.input_size,
                                     [&](const nn::Var& x) {
                                       nn::Var h = net.backbone.forward(x);
                                       return depth == Depth::kBackbone ? h : net.projector.infer(h);
                                     });
  return set;
}

// ---------------------------------------------------------------------------
// Checkpoints of a trained online network: <path> holds every parameter and
// buffer ("backbone.*", "projector.*", "predictor.*"); <path>.json is the
// sidecar {arch, dims, seed, config_hash}.

inline std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

inline void save_checkpoint(const std::filesystem::path& path, OnlineNetwork& net, std::uint64_t seed,
                            const std::string& config_hash) {
  write_tensors(path, state_dict(net));
  nlohmann::json side;
  side["format"] = "coftad-checkpoint/1";
  side["arch"] = to_string(net.config.backbone_arch);
  side["dims"] = net.config;
  side["seed"] = seed;
  side["config_hash"] = config_hash;
  side["parameter_count"] = parameter_count(net);
  std::ofstream os(sidecar_path(path));
  os << side.dump(2) << '\n';
  if (!os) throw CheckpointError("cannot write checkpoint sidecar for " + path.string());
}

inline nlohmann::json read_sidecar(const std::filesystem::path& checkpoint) {
  std::ifstream is(sidecar_path(checkpoint));
  if (!is) throw CheckpointError("missing checkpoint sidecar " + sidecar_path(checkpoint).string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad checkpoint sidecar " + sidecar_path(checkpoint).string() + ": " + e.what());
  }
}

/// Restores a full online network from save_checkpoint output.
inline OnlineNetwork load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  const auto side = read_sidecar(path);
  EncoderConfig cfg;
  try {
    cfg = side.at("dims").get<EncoderConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad checkpoint sidecar: " + std::string(e.what()));
  }
  cfg.pretrained_checkpoint.reset();
  OnlineNetwork net = create_online(cfg);
  detail::assign_tensors(
      read_tensors(path), "", [&](const ParamVisitor& f) { net.visit(f); },
      [&](const BufferVisitor& f) { net.visit_buffers(f); }, path.string());
  return net;
}

}  // namespace coftad
