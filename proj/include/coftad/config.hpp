#pragma once

// Run configuration: TOML file -> RunConfig, plus non-throwing diagnostics.

#include <toml.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "coftad/augment.hpp"
#include "coftad/data.hpp"
#include "coftad/encoder.hpp"
#include "coftad/error.hpp"
#include "coftad/rng.hpp"
#include "coftad/train.hpp"

namespace coftad {

struct DatasetConfig {
  std::string protocol = "synthetic";  // synthetic | folder | corruption
  std::filesystem::path root;
  int k = 5;
  std::uint64_t seed = 0;
  /// Test normals / abnormals to reserve; -1 keeps everything not used for training.
  int reserve_normal = -1;
  int reserve_abnormal = -1;
  /// Keep only this many test anomalies (-1 disables).
  int subsample_abnormal = -1;
  CorruptionSpec corruption;
};

struct DensityConfig {
  int n_a = 10;
  double epsilon = 1e-3;
  std::string scorer = "gaussian";  // gaussian | knn
  int k_nn = 5;
};

struct EvalConfig {
  int histogram_bins = 20;
  bool export_embeddings = true;
};

struct RunConfig {
  DatasetConfig dataset;
  SynthSpec synth;
  EncoderConfig encoder;
  TrainConfig train;
  PositivePolicy positive = PositivePolicy::industrial();
  NegativePolicy negative;
  DensityConfig density;
  EvalConfig eval;
  /// Seed came from COFTAD_SEED rather than the file.
  bool seed_from_env = false;
};

/// Per-stage seed derived from the run seed.
inline std::uint64_t stage_seed(std::uint64_t run_seed, std::string_view stage) {
  return Rng(run_seed).split(stage).seed();
}

// ---------------------------------------------------------------------------
// JSON echo

inline nlohmann::json to_json(const TransformSpec& t) {
  nlohmann::json j{{"kind", transform_name(t)}};
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        j["p"] = s.p;
        if constexpr (std::is_same_v<T, AffineSpec>) {
          j["degrees"] = s.degrees, j["translate"] = s.translate, j["scale"] = s.scale;
          j["reflect_border"] = s.reflect_border;
        } else if constexpr (std::is_same_v<T, ColorJitterSpec>) {
          j["brightness"] = s.brightness, j["contrast"] = s.contrast, j["saturation"] = s.saturation;
          j["hue"] = s.hue;
        } else if constexpr (std::is_same_v<T, BlurSpec>) {
          j["kernel"] = s.kernel, j["sigma"] = s.sigma;
        }
      },
      t);
  return j;
}

inline nlohmann::json to_json(const NegativePolicy& n) {
  nlohmann::json j{{"kind", n.kind()}};
  if (const auto* c = std::get_if<CutPasteSpec>(&n.recipe)) {
    j["area_range"] = c->area, j["aspect_range"] = c->aspect;
  } else if (const auto* s = std::get_if<ScarSpec>(&n.recipe)) {
    j["width_range"] = s->width, j["length_range"] = s->length, j["rotation_range"] = s->rotation;
  } else if (const auto* k = std::get_if<CorruptionNegSpec>(&n.recipe)) {
    j["sigma_range"] = k->sigma, j["brightness_range"] = k->brightness, j["contrast_range"] = k->contrast;
  }
  return j;
}

/// Canonical JSON of every effective setting.
inline nlohmann::json config_echo(const RunConfig& c) {
  nlohmann::json positive = nlohmann::json::array();
  for (const auto& t : c.positive.recipe) positive.push_back(to_json(t));
  const auto& d = c.dataset;
  const auto& t = c.train;
  return {
      {"dataset",
       {{"protocol", d.protocol},
        {"root", d.root.string()},
        {"k", d.k},
        {"seed", d.seed},
        {"reserve_normal", d.reserve_normal},
        {"reserve_abnormal", d.reserve_abnormal},
        {"subsample_abnormal", d.subsample_abnormal},
        {"corruption_types", d.corruption.types},
        {"severity", d.corruption.severity}}},
      {"synth", c.synth},
      {"encoder", c.encoder},
      {"train",
       {{"lr", t.lr},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"batch_size", t.batch_size},
        {"steps", t.steps},
        {"ema_beta", t.ema_beta},
        {"lambda_pp", t.weights.lambda_pp},
        {"lambda_np", t.weights.lambda_np},
        {"use_np_loss", t.use_np_loss},
        {"symmetric_contrastive", t.symmetric_contrastive},
        {"checkpoint_every", t.checkpoint_every}}},
      {"augment", {{"positive", positive}, {"negative", to_json(c.negative)}}},
      {"density",
       {{"n_a", c.density.n_a}, {"epsilon", c.density.epsilon}, {"scorer", c.density.scorer}, {"k_nn", c.density.k_nn}}},
      {"eval", {{"histogram_bins", c.eval.histogram_bins}, {"export_embeddings", c.eval.export_embeddings}}},
  };
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(config_echo(c).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct Diagnostic {
  enum class Kind { kUnknownKey, kType, kRange, kMissingPath };
  Kind kind;
  std::string key;  // dotted path, e.g. "train.lambda_pp"
  std::string message;
};

inline std::string to_string(Diagnostic::Kind k) {
  switch (k) {
    case Diagnostic::Kind::kUnknownKey: return "unknown-key";
    case Diagnostic::Kind::kType: return "type";
    case Diagnostic::Kind::kRange: return "range";
    case Diagnostic::Kind::kMissingPath: return "missing-path";
  }
  return "?";
}

inline std::string format(const Diagnostic& d) { return to_string(d.kind) + ": " + d.key + ": " + d.message; }

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Closest candidate within edit distance 2, if any.
inline std::optional<std::string> suggest(std::string_view key, const std::vector<std::string>& candidates) {
  std::optional<std::string> best;
  std::size_t best_d = 3;
  for (const auto& c : candidates) {
    const auto d = edit_distance(key, c);
    if (d < best_d) best_d = d, best = c;
  }
  return best;
}

namespace detail {

inline const std::map<std::string, std::vector<std::string>>& known_keys() {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"", {"dataset", "synth", "encoder", "train", "augment", "density", "eval"}},
      {"dataset",
       {"protocol", "root", "k", "seed", "reserve_normal", "reserve_abnormal", "subsample_abnormal",
        "corruption_types", "severity"}},
      {"synth", {"n_normal", "n_abnormal", "image_size", "shape", "defect", "jitter"}},
      {"encoder",
       {"arch", "input_size", "in_channels", "feature_dim", "projector_hidden_dim", "projector_out_dim",
        "predictor_hidden_dim", "tiny_channels", "pretrained_checkpoint"}},
      {"train",
       {"lr", "adam_beta1", "adam_beta2", "adam_eps", "batch_size", "steps", "ema_beta", "lambda_pp", "lambda_np",
        "use_np_loss", "symmetric_contrastive", "checkpoint_every"}},
      {"augment", {"preset", "positive", "negative"}},
      {"augment.positive.affine", {"kind", "p", "degrees", "translate", "scale", "reflect_border"}},
      {"augment.positive.color_jitter", {"kind", "p", "brightness", "contrast", "saturation", "hue"}},
      {"augment.positive.blur", {"kind", "p", "kernel", "sigma"}},
      {"augment.positive.grayscale", {"kind", "p"}},
      {"augment.negative.cutpaste", {"kind", "area_range", "aspect_range"}},
      {"augment.negative.scar", {"kind", "width_range", "length_range", "rotation_range"}},
      {"augment.negative.corruption", {"kind", "sigma_range", "brightness_range", "contrast_range"}},
      {"density", {"n_a", "epsilon", "scorer", "k_nn"}},
      {"eval", {"histogram_bins", "export_embeddings"}},
  };
  return keys;
}

/// Reads typed values out of a TOML table, recording type problems.
class Reader {
 public:
  Reader(std::vector<Diagnostic>& diags) : diags_(diags) {}

  void check_keys(const toml::table& t, const std::string& schema, const std::string& path) {
    const auto& known = known_keys().at(schema);
    for (auto&& [k, v] : t) {
      const std::string key(k.str());
      if (std::find(known.begin(), known.end(), key) != known.end()) continue;
      std::string msg = "unknown key";
      if (auto s = suggest(key, known)) msg += " (did you mean '" + *s + "'?)";
      diags_.push_back({Diagnostic::Kind::kUnknownKey, join(path, key), msg});
    }
  }

  template <typename T>
  void get(const toml::table& t, const std::string& path, const char* key, T& out) {
    const toml::node* n = t.get(key);
    if (!n) return;
    const std::string where = join(path, key);
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = n->value_exact<bool>()) out = *v; else bad_type(where, "a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = n->value_exact<std::string>()) out = *v; else bad_type(where, "a string");
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      if (auto v = n->value_exact<std::string>()) out = *v; else bad_type(where, "a string path");
    } else if constexpr (std::is_same_v<T, double>) {
      if (auto v = n->value<double>()) out = *v; else bad_type(where, "a number");
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      auto v = n->value_exact<std::int64_t>();
      if (v && *v >= 0) out = static_cast<std::uint64_t>(*v); else bad_type(where, "a nonnegative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = n->value_exact<std::int64_t>()) out = static_cast<T>(*v); else bad_type(where, "an integer");
    } else if constexpr (std::is_same_v<T, Range>) {
      const auto* a = n->as_array();
      if (!a || a->size() != 2 || !(*a)[0].value<double>() || !(*a)[1].value<double>()) {
        bad_type(where, "a two-element numeric array");
        return;
      }
      out = {*(*a)[0].value<double>(), *(*a)[1].value<double>()};
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      const auto* a = n->as_array();
      std::vector<int> v;
      bool ok = a != nullptr;
      if (ok) {
        for (const auto& e : *a) {
          auto x = e.value_exact<std::int64_t>();
          if (!x) { ok = false; break; }
          v.push_back(static_cast<int>(*x));
        }
      }
      if (ok) out = v; else bad_type(where, "an integer array");
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      const auto* a = n->as_array();
      std::vector<std::string> v;
      bool ok = a != nullptr;
      if (ok) {
        for (const auto& e : *a) {
          auto x = e.value_exact<std::string>();
          if (!x) { ok = false; break; }
          v.push_back(*x);
        }
      }
      if (ok) out = v; else bad_type(where, "a string array");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  void bad_type(const std::string& where, const char* expected) {
    diags_.push_back({Diagnostic::Kind::kType, where, std::string("expected ") + expected});
  }
  std::vector<Diagnostic>& diags_;
};

inline std::optional<TransformSpec> read_positive(const toml::table& t, const std::string& path, Reader& r,
                                                  std::vector<Diagnostic>& diags) {
  std::string kind;
  r.get(t, path, "kind", kind);
  TransformSpec spec;
  if (kind == "affine") {
    AffineSpec s;
    r.get(t, path, "p", s.p), r.get(t, path, "degrees", s.degrees), r.get(t, path, "translate", s.translate);
    r.get(t, path, "scale", s.scale), r.get(t, path, "reflect_border", s.reflect_border);
    spec = s;
  } else if (kind == "color_jitter") {
    ColorJitterSpec s;
    r.get(t, path, "p", s.p), r.get(t, path, "brightness", s.brightness), r.get(t, path, "contrast", s.contrast);
    r.get(t, path, "saturation", s.saturation), r.get(t, path, "hue", s.hue);
    spec = s;
  } else if (kind == "blur") {
    BlurSpec s;
    r.get(t, path, "p", s.p), r.get(t, path, "kernel", s.kernel), r.get(t, path, "sigma", s.sigma);
    spec = s;
  } else if (kind == "grayscale") {
    GrayscaleSpec s;
    r.get(t, path, "p", s.p);
    spec = s;
  } else {
    diags.push_back({Diagnostic::Kind::kRange, path + ".kind",
                     "'" + kind + "' is not one of affine, color_jitter, blur, grayscale"});
    return std::nullopt;
  }
  r.check_keys(t, "augment.positive." + kind, path);
  return spec;
}

inline std::optional<NegativePolicy> read_negative(const toml::table& t, const std::string& path, Reader& r,
                                                   std::vector<Diagnostic>& diags) {
  std::string kind = "cutpaste";
  r.get(t, path, "kind", kind);
  NegativePolicy n;
  if (kind == "cutpaste") {
    CutPasteSpec s;
    r.get(t, path, "area_range", s.area), r.get(t, path, "aspect_range", s.aspect);
    n.recipe = s;
  } else if (kind == "scar") {
    ScarSpec s;
    r.get(t, path, "width_range", s.width), r.get(t, path, "length_range", s.length);
    r.get(t, path, "rotation_range", s.rotation);
    n.recipe = s;
  } else if (kind == "corruption") {
    CorruptionNegSpec s;
    r.get(t, path, "sigma_range", s.sigma), r.get(t, path, "brightness_range", s.brightness);
    r.get(t, path, "contrast_range", s.contrast);
    n.recipe = s;
  } else {
    diags.push_back({Diagnostic::Kind::kRange, path + ".kind", "'" + kind + "' is not one of cutpaste, scar, corruption"});
    return std::nullopt;
  }
  r.check_keys(t, "augment.negative." + kind, path);
  return n;
}

inline std::optional<PositivePolicy> positive_preset(const std::string& name) {
  if (name == "industrial") return PositivePolicy::industrial();
  if (name == "flowers") return PositivePolicy::flowers();
  if (name == "cifar_c") return PositivePolicy::cifar_c();
  if (name == "identity") return PositivePolicy::identity();
  return std::nullopt;
}

inline void range_checks(const RunConfig& c, std::vector<Diagnostic>& out) {
  auto range = [&](bool ok, const char* key, const std::string& msg) {
    if (!ok) out.push_back({Diagnostic::Kind::kRange, key, msg});
  };
  const auto& d = c.dataset;
  range(d.protocol == "synthetic" || d.protocol == "folder" || d.protocol == "corruption", "dataset.protocol",
        "'" + d.protocol + "' is not one of synthetic, folder, corruption");
  range(d.k >= 1, "dataset.k", "must be >= 1 (got " + std::to_string(d.k) + ")");
  range(d.reserve_normal >= -1, "dataset.reserve_normal", "must be >= 0 or -1");
  range(d.reserve_abnormal >= -1, "dataset.reserve_abnormal", "must be >= 0 or -1");
  range(d.subsample_abnormal >= -1, "dataset.subsample_abnormal", "must be >= 0 or -1");
  range(!d.corruption.types.empty(), "dataset.corruption_types", "must not be empty");
  for (const auto& t : d.corruption.types) {
    range(corruptions::registry().count(t) > 0, "dataset.corruption_types", "unknown corruption '" + t + "'");
  }
  range(d.corruption.severity >= 1 && d.corruption.severity <= 5, "dataset.severity", "must lie in [1, 5]");

  const auto& s = c.synth;
  range(s.n_normal >= 0 && s.n_abnormal >= 0, "synth.n_normal", "counts must be >= 0");
  range(s.image_size >= 8, "synth.image_size", "must be >= 8");
  range(s.jitter >= 0 && s.jitter <= 1, "synth.jitter", "must lie in [0, 1]");
  range(s.shape == "circle" || s.shape == "square" || s.shape == "triangle", "synth.shape",
        "'" + s.shape + "' is not one of circle, square, triangle");
  range(s.defect == "paste" || s.defect == "scar" || s.defect == "blur", "synth.defect",
        "'" + s.defect + "' is not one of paste, scar, blur");

  const auto& e = c.encoder;
  range(e.input_size >= 8, "encoder.input_size", "must be >= 8");
  range(e.in_channels == 3, "encoder.in_channels", "images are loaded as RGB; must be 3");
  range(e.projector_hidden_dim > 0 && e.projector_out_dim > 0 && e.predictor_hidden_dim > 0,
        "encoder.projector_hidden_dim", "head dimensions must be positive");
  const bool tiny = e.backbone_arch == BackboneArch::kTinyCnn;
  range(!tiny || (!e.tiny_channels.empty() &&
                  std::all_of(e.tiny_channels.begin(), e.tiny_channels.end(), [](int w) { return w > 0; })),
        "encoder.tiny_channels", "must be a non-empty list of positive widths");
  if (!tiny || !e.tiny_channels.empty()) {
    range(e.feature_dim == e.backbone_width(), "encoder.feature_dim",
          "must equal the backbone width " + std::to_string(e.backbone_width()));
  }

  const auto& t = c.train;
  range(t.lr > 0 && std::isfinite(t.lr), "train.lr", "must be > 0");
  range(t.adam_beta1 >= 0 && t.adam_beta1 < 1, "train.adam_beta1", "must lie in [0, 1)");
  range(t.adam_beta2 >= 0 && t.adam_beta2 < 1, "train.adam_beta2", "must lie in [0, 1)");
  range(t.adam_eps > 0, "train.adam_eps", "must be > 0");
  range(t.batch_size >= 2, "train.batch_size", "must be >= 2 (pairing needs two rows)");
  range(t.steps >= 0, "train.steps", "must be >= 0");
  range(t.ema_beta >= 0 && t.ema_beta <= 1, "train.ema_beta", "must lie in [0, 1]");
  range(t.weights.lambda_pp >= 0 && std::isfinite(t.weights.lambda_pp), "train.lambda_pp",
        "must be >= 0 (got " + format_real(t.weights.lambda_pp) + ")");
  range(t.weights.lambda_np >= 0 && std::isfinite(t.weights.lambda_np), "train.lambda_np",
        "must be >= 0 (got " + format_real(t.weights.lambda_np) + ")");
  range(t.checkpoint_every >= 0, "train.checkpoint_every", "must be >= 0");

  if (auto p = c.positive.check()) range(false, "augment.positive", *p);
  if (auto p = c.negative.check()) range(false, "augment.negative", *p);

  range(c.density.n_a >= 1, "density.n_a", "must be >= 1");
  range(c.density.epsilon > 0, "density.epsilon", "must be > 0");
  range(c.density.scorer == "gaussian" || c.density.scorer == "knn", "density.scorer",
        "'" + c.density.scorer + "' is not one of gaussian, knn");
  range(c.density.k_nn >= 1, "density.k_nn", "must be >= 1");
  range(c.eval.histogram_bins >= 1, "eval.histogram_bins", "must be >= 1");
}

inline void path_checks(const RunConfig& c, std::vector<Diagnostic>& out) {
  namespace fs = std::filesystem;
  if (c.dataset.protocol != "synthetic") {
    if (c.dataset.root.empty()) {
      out.push_back({Diagnostic::Kind::kMissingPath, "dataset.root", "required for protocol " + c.dataset.protocol});
    } else if (!fs::is_directory(c.dataset.root / "normal")) {
      out.push_back({Diagnostic::Kind::kMissingPath, "dataset.root",
                     c.dataset.root.string() + " has no normal/ folder"});
    }
  }
  if (c.encoder.pretrained_checkpoint && !fs::exists(*c.encoder.pretrained_checkpoint)) {
    out.push_back({Diagnostic::Kind::kMissingPath, "encoder.pretrained_checkpoint",
                   c.encoder.pretrained_checkpoint->string() + " does not exist"});
  }
}

}  // namespace detail

struct ParsedConfig {
  RunConfig config;
  std::vector<Diagnostic> diagnostics;
};

/// Builds a RunConfig from parsed TOML. Relative paths resolve against base_dir.
inline ParsedConfig read_config(const toml::table& root, const std::filesystem::path& base_dir = {}) {
  ParsedConfig out;
  auto& c = out.config;
  auto& diags = out.diagnostics;
  detail::Reader r(diags);
  r.check_keys(root, "", "");
  auto section = [&](const char* name) -> const toml::table* {
    const toml::node* n = root.get(name);
    if (!n) return nullptr;
    if (!n->is_table()) {
      diags.push_back({Diagnostic::Kind::kType, name, "expected a table"});
      return nullptr;
    }
    r.check_keys(*n->as_table(), name, name);
    return n->as_table();
  };
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative() && !base_dir.empty()) p = base_dir / p;
  };

  if (const auto* t = section("dataset")) {
    auto& d = c.dataset;
    r.get(*t, "dataset", "protocol", d.protocol);
    r.get(*t, "dataset", "root", d.root);
    r.get(*t, "dataset", "k", d.k);
    r.get(*t, "dataset", "seed", d.seed);
    r.get(*t, "dataset", "reserve_normal", d.reserve_normal);
    r.get(*t, "dataset", "reserve_abnormal", d.reserve_abnormal);
    r.get(*t, "dataset", "subsample_abnormal", d.subsample_abnormal);
    r.get(*t, "dataset", "corruption_types", d.corruption.types);
    r.get(*t, "dataset", "severity", d.corruption.severity);
    resolve(d.root);
  }
  if (const auto* t = section("synth")) {
    auto& s = c.synth;
    r.get(*t, "synth", "n_normal", s.n_normal);
    r.get(*t, "synth", "n_abnormal", s.n_abnormal);
    r.get(*t, "synth", "image_size", s.image_size);
    r.get(*t, "synth", "shape", s.shape);
    r.get(*t, "synth", "defect", s.defect);
    r.get(*t, "synth", "jitter", s.jitter);
  }
  bool feature_dim_set = false;
  if (const auto* t = section("encoder")) {
    auto& e = c.encoder;
    std::string arch = to_string(e.backbone_arch);
    r.get(*t, "encoder", "arch", arch);
    if (arch == "resnet18" || arch == "tiny-cnn") {
      e.backbone_arch = parse_backbone_arch(arch);
    } else {
      diags.push_back({Diagnostic::Kind::kRange, "encoder.arch", "'" + arch + "' is not one of resnet18, tiny-cnn"});
    }
    r.get(*t, "encoder", "input_size", e.input_size);
    r.get(*t, "encoder", "in_channels", e.in_channels);
    feature_dim_set = t->contains("feature_dim");
    r.get(*t, "encoder", "feature_dim", e.feature_dim);
    r.get(*t, "encoder", "projector_hidden_dim", e.projector_hidden_dim);
    r.get(*t, "encoder", "projector_out_dim", e.projector_out_dim);
    r.get(*t, "encoder", "predictor_hidden_dim", e.predictor_hidden_dim);
    r.get(*t, "encoder", "tiny_channels", e.tiny_channels);
    std::filesystem::path ckpt;
    r.get(*t, "encoder", "pretrained_checkpoint", ckpt);
    resolve(ckpt);
    if (!ckpt.empty()) e.pretrained_checkpoint = ckpt;
  }
  if (!feature_dim_set && !c.encoder.tiny_channels.empty()) c.encoder.feature_dim = c.encoder.backbone_width();
  if (const auto* t = section("train")) {
    auto& tr = c.train;
    r.get(*t, "train", "lr", tr.lr);
    r.get(*t, "train", "adam_beta1", tr.adam_beta1);
    r.get(*t, "train", "adam_beta2", tr.adam_beta2);
    r.get(*t, "train", "adam_eps", tr.adam_eps);
    r.get(*t, "train", "batch_size", tr.batch_size);
    r.get(*t, "train", "steps", tr.steps);
    r.get(*t, "train", "ema_beta", tr.ema_beta);
    r.get(*t, "train", "lambda_pp", tr.weights.lambda_pp);
    r.get(*t, "train", "lambda_np", tr.weights.lambda_np);
    r.get(*t, "train", "use_np_loss", tr.use_np_loss);
    r.get(*t, "train", "symmetric_contrastive", tr.symmetric_contrastive);
    r.get(*t, "train", "checkpoint_every", tr.checkpoint_every);
  }
  if (const auto* t = section("augment")) {
    std::string preset;
    r.get(*t, "augment", "preset", preset);
    if (!preset.empty()) {
      if (auto p = detail::positive_preset(preset)) {
        c.positive = *p;
      } else {
        diags.push_back({Diagnostic::Kind::kRange, "augment.preset",
                         "'" + preset + "' is not one of industrial, flowers, cifar_c, identity"});
      }
    }
    if (const toml::node* n = t->get("positive")) {
      const auto* arr = n->as_array();
      if (!arr || !arr->is_array_of_tables()) {
        diags.push_back({Diagnostic::Kind::kType, "augment.positive", "expected [[augment.positive]] tables"});
      } else {
        PositivePolicy p;
        for (std::size_t i = 0; i < arr->size(); ++i) {
          const std::string path = "augment.positive[" + std::to_string(i) + "]";
          if (auto spec = detail::read_positive(*(*arr)[i].as_table(), path, r, diags)) p.recipe.push_back(*spec);
        }
        c.positive = p;
      }
    }
    if (const toml::node* n = t->get("negative")) {
      if (!n->is_table()) {
        diags.push_back({Diagnostic::Kind::kType, "augment.negative", "expected a table"});
      } else if (auto neg = detail::read_negative(*n->as_table(), "augment.negative", r, diags)) {
        c.negative = *neg;
      }
    }
  }
  if (const auto* t = section("density")) {
    r.get(*t, "density", "n_a", c.density.n_a);
    r.get(*t, "density", "epsilon", c.density.epsilon);
    r.get(*t, "density", "scorer", c.density.scorer);
    r.get(*t, "density", "k_nn", c.density.k_nn);
  }
  if (const auto* t = section("eval")) {
    r.get(*t, "eval", "histogram_bins", c.eval.histogram_bins);
    r.get(*t, "eval", "export_embeddings", c.eval.export_embeddings);
  }

  c.train.seed = stage_seed(c.dataset.seed, "train");
  c.encoder.init_seed = stage_seed(c.dataset.seed, "init");
  detail::range_checks(c, diags);
  detail::path_checks(c, diags);
  return out;
}

/// Applies COFTAD_SEED (if set) to the run seed and re-derives stage seeds.
inline void apply_seed_override(RunConfig& c, const char* env = std::getenv("COFTAD_SEED")) {
  if (!env || !*env) return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || env[0] == '-') {
    throw ConfigError(std::string("COFTAD_SEED is not a nonnegative integer: '") + env + "'");
  }
  c.dataset.seed = v;
  c.train.seed = stage_seed(v, "train");
  c.encoder.init_seed = stage_seed(v, "init");
  c.seed_from_env = true;
}

inline toml::table parse_toml_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  try {
    return toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << path.string() << ':' << e.source().begin.line << ':' << e.source().begin.column << ": "
       << e.description();
    throw ConfigError(os.str());
  }
}

/// Diagnostics for a config file. Throws ConfigError only for unparseable files.
inline std::vector<Diagnostic> validate_config(const std::filesystem::path& path) {
  return read_config(parse_toml_file(path), path.parent_path()).diagnostics;
}

/// Parses, applies COFTAD_SEED and throws ConfigError listing every diagnostic.
inline RunConfig load_config(const std::filesystem::path& path) {
  ParsedConfig parsed = read_config(parse_toml_file(path), path.parent_path());
  if (!parsed.diagnostics.empty()) {
    std::string msg = "invalid config " + path.string() + ":";
    for (const auto& d : parsed.diagnostics) msg += "\n  " + format(d);
    throw ConfigError(msg);
  }
  apply_seed_override(parsed.config);
  return parsed.config;
}

}  // namespace coftad
