#pragma once

// Stage functions shared by the CLI subcommands and the end-to-end run.
//
// Run directory layout:
//   data/            synthetic or corruption-protocol images (when generated)
//   split.json       few-shot split, root stored relative to the run directory
//   checkpoint.bin   trained online network (+ checkpoint.bin.json sidecar)
//   train_log.csv    per-step loss breakdown
//   run_meta.json    config echo, seed and config hash
//   density.bin      Gaussian model over augmented few-shot embeddings
//   eval/            report.json, scores.csv, hist.csv, hist.png, embeddings.csv
//   manifest.json    stage status and artifact hashes

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "coftad/config.hpp"
#include "coftad/data.hpp"
#include "coftad/density.hpp"
#include "coftad/encoder.hpp"
#include "coftad/eval.hpp"
#include "coftad/train.hpp"

#ifndef COFTAD_VERSION
#define COFTAD_VERSION "0.0.0"
#endif

namespace coftad {

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << j.dump(2) << '\n';
  if (!os) throw DataError("cannot write " + path.string());
}

inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

/// Generates or ingests the dataset, samples the split and writes split.json.
/// Returns the split with its root resolved.
inline FewShotSplit prepare_data(const RunConfig& c, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const auto& d = c.dataset;
  if (d.k < 1) throw ConfigError("dataset.k must be >= 1");
  Reserve reserve;
  if (d.reserve_normal >= 0) reserve.normal = static_cast<std::size_t>(d.reserve_normal);
  if (d.reserve_abnormal >= 0) reserve.abnormal = static_cast<std::size_t>(d.reserve_abnormal);
  const std::uint64_t split_seed = stage_seed(d.seed, "split");
  FewShotSplit split;
  if (d.protocol == "synthetic") {
    const DatasetManifest m = synth_dataset(c.synth, out_dir / "data", stage_seed(d.seed, "synth"));
    split = sample_few_shot(m, static_cast<std::size_t>(d.k), split_seed, reserve);
    split.root = "data";
  } else if (d.protocol == "folder") {
    const DatasetManifest m = load_image_folder(d.root);
    split = sample_few_shot(m, static_cast<std::size_t>(d.k), split_seed, reserve);
    split.root = fs::absolute(d.root);
  } else if (d.protocol == "corruption") {
    // Clean normals are split first; only the test normals get corrupted copies.
    DatasetManifest clean = load_image_folder(d.root);
    std::erase_if(clean.entries, [](const ManifestEntry& e) { return e.abnormal; });
    const FewShotSplit base = sample_few_shot(clean, static_cast<std::size_t>(d.k), split_seed, {reserve.normal, 0});
    DatasetManifest test_clean;
    test_clean.root = clean.root;
    for (const auto& id : base.test_normal_ids) test_clean.entries.push_back({id, false, "normal", 0, 0});
    const fs::path data = out_dir / "data";
    const DatasetManifest built =
        build_corruption_protocol(test_clean, d.corruption, data, default_corruption, stage_seed(d.seed, "corrupt"));
    split.protocol = std::to_string(d.k) + "-shot-corruption";
    split.seed = split_seed;
    split.root = "data";
    for (const auto& id : base.train_ids) {
      const std::string train_id = "train/" + fs::path(id).filename().string();
      fs::create_directories(data / "train");
      fs::copy_file(clean.path_of(id), data / train_id, fs::copy_options::overwrite_existing);
      split.train_ids.push_back(train_id);
    }
    for (const auto& e : built.entries) (e.abnormal ? split.test_abnormal_ids : split.test_normal_ids).push_back(e.id);
    if (reserve.abnormal) {
      if (*reserve.abnormal > split.test_abnormal_ids.size()) {
        throw DataError("corruption protocol produced " + std::to_string(split.test_abnormal_ids.size()) +
                        " anomalies, fewer than reserve_abnormal " + std::to_string(*reserve.abnormal));
      }
      split = subsample_anomalies(split, *reserve.abnormal, stage_seed(d.seed, "reserve"));
    }
  } else {
    throw ConfigError("unknown dataset.protocol '" + d.protocol + "'");
  }
  if (d.subsample_abnormal >= 0) {
    split = subsample_anomalies(split, static_cast<std::size_t>(d.subsample_abnormal), stage_seed(d.seed, "subsample"));
  }
  save_split(out_dir / "split.json", split);
  return load_split(out_dir / "split.json");
}

inline std::vector<Image> load_train_images(const FewShotSplit& split, int input_size) {
  DatasetManifest m;
  m.root = split.root;
  std::vector<Image> out;
  for (const auto& id : split.train_ids) out.push_back(load_image(m, id, input_size));
  return out;
}

/// Trains on the split's few-shot set; writes checkpoint.bin, train_log.csv and run_meta.json.
inline TrainState run_train(const RunConfig& c, const FewShotSplit& split, const std::filesystem::path& out_dir,
                            const StepCallback& on_step = {}) {
  const auto fewshot = load_train_images(split, c.encoder.input_size);
  const std::string hash = config_hash(c);
  TrainState state = train(fewshot, c.train, c.encoder, c.positive, c.negative, TrainOutputs{out_dir, hash}, on_step);
  write_json(out_dir / "run_meta.json", {{"config", config_echo(c)},
                                         {"seed", c.dataset.seed},
                                         {"seed_from_env", c.seed_from_env},
                                         {"config_hash", hash},
                                         {"version", COFTAD_VERSION}});
  return state;
}

/// Fits the density model and writes it to density_path. The header records
/// the checkpoint path relative to the density file plus the scorer settings.
inline DensityModel run_fit_density(const RunConfig& c, const OnlineNetwork& encoder, const FewShotSplit& split,
                                    const std::filesystem::path& density_path,
                                    const std::filesystem::path& checkpoint_path) {
  const auto fewshot = load_train_images(split, encoder.config.input_size);
  const DensityModel model = fit_density(encoder, fewshot, c.positive, c.density.n_a, c.density.epsilon,
                                         Rng(stage_seed(c.dataset.seed, "density")));
  const auto base = std::filesystem::absolute(density_path).parent_path();
  const auto rel = std::filesystem::absolute(checkpoint_path).lexically_relative(base);
  model.save(density_path, {{"checkpoint", rel.string()},
                            {"scorer", c.density.scorer},
                            {"k_nn", c.density.k_nn},
                            {"n_a", c.density.n_a},
                            {"config_hash", config_hash(c)}});
  return model;
}

inline EvalOptions eval_options(const RunConfig& c) {
  EvalOptions o;
  o.scorer = c.density.scorer;
  o.k_nn = c.density.k_nn;
  o.histogram_bins = c.eval.histogram_bins;
  o.export_embeddings = c.eval.export_embeddings;
  o.config_echo = config_echo(c);
  return o;
}

/// Hashes of every file under dir except manifest.json, keyed by relative path.
inline nlohmann::json artifact_hashes(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  nlohmann::json out = nlohmann::json::object();
  for (const auto& f : files) out[f.lexically_relative(dir).generic_string()] = file_hash(f);
  return out;
}

struct PipelineResult {
  std::filesystem::path dir;
  EvalReport report;
  nlohmann::json manifest;
};

/// synth/ingest -> split -> train -> fit-density -> evaluate, all inside out_dir.
/// On failure manifest.json records the failing stage and the error is rethrown.
inline PipelineResult run_pipeline(const RunConfig& c, const std::filesystem::path& out_dir,
                                   const StepCallback& on_step = {}) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json manifest{{"version", COFTAD_VERSION},
                          {"config_hash", config_hash(c)},
                          {"seed", c.dataset.seed},
                          {"stages", nlohmann::json::array()}};
  std::string stage = "data";
  auto done = [&](const std::string& name) { manifest["stages"].push_back({{"name", name}, {"status", "ok"}}); };
  PipelineResult result{out_dir, {}, {}};
  try {
    const FewShotSplit split = prepare_data(c, out_dir);
    done(stage);
    stage = "train";
    TrainState state = run_train(c, split, out_dir, on_step);
    done(stage);
    stage = "fit-density";
    const DensityModel model =
        run_fit_density(c, state.online, split, out_dir / "density.bin", out_dir / "checkpoint.bin");
    done(stage);
    stage = "eval";
    // Evaluate from the saved artifacts so the run directory reproduces report.json.
    const OnlineNetwork saved = load_checkpoint(out_dir / "checkpoint.bin");
    result.report = evaluate(saved, DensityModel::load(out_dir / "density.bin"), load_split(out_dir / "split.json"),
                             out_dir / "eval", eval_options(c))
                        .report;
    done(stage);
    manifest["status"] = "ok";
    manifest["auroc"] = result.report.auroc;
  } catch (const std::exception& e) {
    manifest["stages"].push_back({{"name", stage}, {"status", "error"}});
    manifest["status"] = "error";
    const auto* err = dynamic_cast<const Error*>(&e);
    manifest["error"] = {{"stage", stage},
                         {"message", e.what()},
                         {"exit_code", static_cast<int>(err ? err->code() : ExitCode::kFailure)}};
    manifest["artifacts"] = artifact_hashes(out_dir);
    write_json(out_dir / "manifest.json", manifest);
    throw;
  }
  manifest["artifacts"] = artifact_hashes(out_dir);
  write_json(out_dir / "manifest.json", manifest);
  result.manifest = manifest;
  return result;
}

}  // namespace coftad
