// coftad command line: run, train, fit-density, score, eval, synth, validate.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "coftad/coftad.hpp"

namespace fs = std::filesystem;
using namespace coftad;

namespace {

StepCallback progress(int total) {
  return [total](const TrainState& s, const LossBreakdown& b) {
    if (s.step % 50 == 0 || s.step == total) {
      std::fprintf(stderr, "step %5lld/%d  l_con %.4f  l_pp %.4f  l_np %.4f  l_total %.4f\n",
                   static_cast<long long>(s.step), total, b.l_con, b.l_pp, b.l_np, b.l_total);
    }
  };
}

int cmd_run(const fs::path& config, const fs::path& out) {
  const RunConfig c = load_config(config);
  const auto r = run_pipeline(c, out, progress(c.train.steps));
  std::printf("auroc %.6f  (%zu normal, %zu abnormal)  -> %s\n", r.report.auroc, r.report.n_normal,
              r.report.n_abnormal, (out / "eval" / "report.json").string().c_str());
  return 0;
}

int cmd_train(const fs::path& config, const fs::path& out, const std::string& split_path) {
  const RunConfig c = load_config(config);
  fs::create_directories(out);
  FewShotSplit split;
  if (split_path.empty()) {
    split = prepare_data(c, out);
  } else {
    split = load_split(split_path);
    save_split(out / "split.json", split);
  }
  run_train(c, split, out, progress(c.train.steps));
  std::printf("checkpoint -> %s\n", (out / "checkpoint.bin").string().c_str());
  return 0;
}

int cmd_fit_density(const fs::path& config, const fs::path& checkpoint, const fs::path& split, const fs::path& out) {
  const RunConfig c = load_config(config);
  const OnlineNetwork net = load_checkpoint(checkpoint);
  fs::create_directories(out);
  const DensityModel m = run_fit_density(c, net, load_split(split), out / "density.bin", checkpoint);
  std::printf("density (dim %d, n_fit %d) -> %s\n", m.dim(), m.n_fit(), (out / "density.bin").string().c_str());
  return 0;
}

int cmd_score(const fs::path& model_path, const fs::path& images_dir, const fs::path& out,
              const std::string& checkpoint_arg) {
  nlohmann::json header;
  const DensityModel model = DensityModel::load(model_path, &header);
  fs::path checkpoint = checkpoint_arg;
  if (checkpoint.empty()) {
    if (!header.contains("checkpoint")) throw DataError("density model names no checkpoint; pass --checkpoint");
    checkpoint = model_path.parent_path() / header["checkpoint"].get<std::string>();
  }
  const OnlineNetwork net = load_checkpoint(checkpoint);
  if (model.dim() != net.config.feature_dim) {
    throw DataError("density dimension " + std::to_string(model.dim()) + " does not match encoder width " +
                    std::to_string(net.config.feature_dim));
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(images_dir)) {
    auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".PNG")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no PNG images under " + images_dir.string());
  std::vector<Image> images;
  std::vector<std::string> ids;
  for (const auto& f : files) {
    images.push_back(resize(read_png(f), net.config.input_size, net.config.input_size));
    ids.push_back(f.lexically_relative(images_dir).generic_string());
  }
  const std::string scorer = header.value("scorer", "gaussian");
  std::vector<double> raw;
  if (scorer == "knn") {
    const EmbeddingSet emb = embed(net, images, Depth::kBackbone, ids);
    const int k = header.value("k_nn", 5);
    for (Eigen::Index i = 0; i < emb.vectors.rows(); ++i) {
      raw.push_back(knn_score(model.fit_vectors(), emb.vectors.row(i).transpose(), k));
    }
  } else {
    for (const auto& r : score_images(model, net, images, ids)) raw.push_back(r.raw_score);
  }
  const auto pct = percentile_normalize(raw);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out);
  os << "id,raw_score,percentile\n";
  for (std::size_t i = 0; i < raw.size(); ++i) {
    os << ids[i] << ',' << format_real(raw[i]) << ',' << format_real(pct[i]) << '\n';
  }
  if (!os) throw DataError("cannot write " + out.string());
  std::printf("%zu scores -> %s\n", raw.size(), out.string().c_str());
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& density, const fs::path& split, const fs::path& out,
             const std::string& config) {
  nlohmann::json header;
  const DensityModel model = DensityModel::load(density, &header);
  const OnlineNetwork net = load_checkpoint(checkpoint);
  EvalOptions opt;
  if (!config.empty()) {
    opt = eval_options(load_config(config));
  } else {
    // Without a config, take scorer settings and the config echo from the run that produced the artifacts.
    opt.scorer = header.value("scorer", "gaussian");
    opt.k_nn = header.value("k_nn", 5);
    const fs::path meta = checkpoint.parent_path() / "run_meta.json";
    if (fs::exists(meta)) {
      std::ifstream is(meta);
      const auto j = nlohmann::json::parse(is);
      opt.config_echo = j.value("config", nlohmann::json::object());
      if (opt.config_echo.contains("eval")) {
        opt.histogram_bins = opt.config_echo["eval"].value("histogram_bins", 20);
        opt.export_embeddings = opt.config_echo["eval"].value("export_embeddings", true);
      }
    }
  }
  const auto side = read_sidecar(checkpoint);
  if (header.contains("config_hash") && side.contains("config_hash") && header["config_hash"] != side["config_hash"]) {
    std::fprintf(stderr, "warning: density model and checkpoint come from different configs\n");
  }
  const auto r = evaluate(net, model, load_split(split), out, opt);
  std::printf("auroc %.6f  (%zu normal, %zu abnormal)  -> %s\n", r.report.auroc, r.report.n_normal,
              r.report.n_abnormal, (out / "report.json").string().c_str());
  return 0;
}

int cmd_synth(const std::string& config, const fs::path& out, SynthSpec spec, long long seed) {
  std::uint64_t s = seed < 0 ? 0 : static_cast<std::uint64_t>(seed);
  if (!config.empty()) {
    const RunConfig c = load_config(config);
    spec = c.synth;
    if (seed < 0) s = stage_seed(c.dataset.seed, "synth");
  }
  const DatasetManifest m = synth_dataset(spec, out, s);
  std::printf("%zu normal, %zu abnormal -> %s\n", m.count(false), m.count(true), out.string().c_str());
  return 0;
}

int cmd_validate(const fs::path& config) {
  const auto diags = validate_config(config);
  for (const auto& d : diags) std::printf("%s\n", format(d).c_str());
  if (diags.empty()) {
    std::printf("%s: ok\n", config.string().c_str());
    return 0;
  }
  return static_cast<int>(ExitCode::kConfig);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot anomaly detection by contrastive fine-tuning and Gaussian density scoring"};
  app.require_subcommand(1);

  std::string config, out, split, checkpoint, density, model, images;

  auto* run = app.add_subcommand("run", "Full pipeline: data, split, train, density, eval");
  run->add_option("--config", config, "TOML run config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Run directory")->required();

  auto* train = app.add_subcommand("train", "Fine-tune the encoder on the few-shot set");
  train->add_option("--config", config, "TOML run config")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--split", split, "Existing split.json (default: build one from the config)")
      ->check(CLI::ExistingFile);

  auto* fit = app.add_subcommand("fit-density", "Fit the Gaussian over augmented few-shot embeddings");
  fit->add_option("--config", config, "TOML run config")->required()->check(CLI::ExistingFile);
  fit->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  fit->add_option("--split", split, "split.json")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", out, "Output directory (writes density.bin)")->required();

  auto* score = app.add_subcommand("score", "Score a folder of images");
  score->add_option("--model", model, "density.bin")->required()->check(CLI::ExistingFile);
  score->add_option("--images", images, "Folder of PNG images")->required()->check(CLI::ExistingDirectory);
  score->add_option("--out", out, "Output CSV (id, raw_score, percentile)")->required();
  score->add_option("--checkpoint", checkpoint, "Encoder checkpoint (default: the one recorded in the model)")
      ->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and density model on a split");
  ev->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--density", density, "density.bin")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split, "split.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", out, "Output directory")->required();
  ev->add_option("--config", config, "TOML run config (default: settings recorded with the artifacts)")
      ->check(CLI::ExistingFile);

  SynthSpec spec;
  long long seed = -1;
  auto* synth = app.add_subcommand("synth", "Render the synthetic benchmark");
  synth->add_option("--out", out, "Dataset root")->required();
  synth->add_option("--config", config, "Take [synth] and the seed from a run config")->check(CLI::ExistingFile);
  synth->add_option("--n-normal", spec.n_normal)->capture_default_str();
  synth->add_option("--n-abnormal", spec.n_abnormal)->capture_default_str();
  synth->add_option("--image-size", spec.image_size)->capture_default_str();
  synth->add_option("--shape", spec.shape)->check(CLI::IsMember({"circle", "square", "triangle"}))->capture_default_str();
  synth->add_option("--defect", spec.defect)->check(CLI::IsMember({"paste", "scar", "blur"}))->capture_default_str();
  synth->add_option("--seed", seed, "Seed (default 0)");

  auto* validate = app.add_subcommand("validate", "Check a run config and list diagnostics");
  validate->add_option("--config", config, "TOML run config")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*run) return cmd_run(config, out);
    if (*train) return cmd_train(config, out, split);
    if (*fit) return cmd_fit_density(config, checkpoint, split, out);
    if (*score) return cmd_score(model, images, out, checkpoint);
    if (*ev) return cmd_eval(checkpoint, density, split, out, config);
    if (*synth) return cmd_synth(config, out, spec, seed);
    if (*validate) return cmd_validate(config);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kFailure);
  }
  return 0;
}
