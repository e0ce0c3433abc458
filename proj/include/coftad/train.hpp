#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coftad/augment.hpp"
#include "coftad/encoder.hpp"
#include "coftad/error.hpp"
#include "coftad/losses.hpp"
#include "coftad/rng.hpp"
#include "coftad/tensor.hpp"

namespace coftad {

struct TrainConfig {
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  int batch_size = 64;
  int steps = 1000;
  double ema_beta = 0.99;
  LossWeights weights;
  bool use_np_loss = true;
  /// Average the contrastive term over both view orders.
  bool symmetric_contrastive = true;
  std::uint64_t seed = 0;
  /// Write an intermediate checkpoint every N steps (0 disables).
  int checkpoint_every = 0;

  void validate() const {
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(ema_beta >= 0.0 && ema_beta <= 1.0)) throw ConfigError("train.ema_beta must lie in [0, 1]");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw ConfigError("train.adam_beta1/adam_beta2 must lie in [0, 1)");
    }
    if (!weights.valid()) throw ConfigError("train.lambda_pp and train.lambda_np must be finite and >= 0");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  }
};

/// Adam without weight decay over a fixed list of parameters.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::vector<nn::Var> params) : params_(std::move(params)) {
    for (const auto& p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void step(double lr, double beta1, double beta2, double eps) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (p->grad.empty()) continue;
      auto value = p->value.values();
      auto m = m_[k].values();
      auto v = v_[k].values();
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = p->grad[i];
        m[i] = static_cast<float>(beta1 * m[i] + (1.0 - beta1) * g);
        v[i] = static_cast<float>(beta2 * v[i] + (1.0 - beta2) * g * g);
        const double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        value[i] = static_cast<float>(value[i] - update);
      }
    }
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<nn::Var> params_;
  std::vector<nn::Tensor> m_, v_;
  std::int64_t t_ = 0;
};

struct TrainState {
  OnlineNetwork online;
  TargetNetwork target;
  Adam optimizer;
  std::int64_t step = 0;
  Rng rng;
  std::vector<LossBreakdown> history;
};

inline TrainState make_train_state(OnlineNetwork online, std::uint64_t seed) {
  TrainState s{std::move(online), {}, {}, 0, Rng(seed), {}};
  s.target = init_target(s.online);
  std::vector<nn::Var> params;
  s.online.visit([&](const std::string&, nn::Var& v) { params.push_back(v); });
  s.optimizer = Adam(std::move(params));
  return s;
}

namespace detail {
inline nn::Tensor to_float(const Eigen::MatrixXd& m) { return nn::from_matrix(m); }
}  // namespace detail

/// One optimization step:
///  - L_con between predicted online views and target projections of the other view,
///  - L_pp between online backbone features of view1 and target backbone features
///    of view2 under the batch pairing,
///  - L_np between target backbone features of the originals and online backbone
///    features of the negatives (only when use_np_loss),
/// then an Adam step on the online parameters and an EMA update of the target.
inline LossBreakdown training_step(TrainState& s, const TrainingBatch& batch, const TrainConfig& cfg) {
  const int b = batch.size();
  const bool use_np = cfg.use_np_loss;
  if (use_np && batch.negatives.empty()) throw ContractError("training_step: batch has no negatives");

  std::vector<nn::Tensor> online_parts{batch.view1, batch.view2};
  std::vector<nn::Tensor> target_parts{batch.view1, batch.view2};
  if (use_np) {
    online_parts.push_back(batch.negatives);
    target_parts.push_back(batch.originals);
  }

  const nn::Var feat_on = s.online.backbone.forward(nn::constant(nn::concat_rows(online_parts)));
  const nn::Var proj_on = s.online.projector.forward(nn::slice_rows(feat_on, 0, 2 * b), true);
  const nn::Var pred_on = s.online.predictor.forward(proj_on, true);

  Eigen::MatrixXd feat_tg, proj_tg;
  {
    nn::NoGradGuard no_grad;
    const nn::Var f = s.target.backbone.forward(nn::constant(nn::concat_rows(target_parts)));
    const nn::Var p = s.target.projector.forward(nn::slice_rows(f, 0, 2 * b), true);
    feat_tg = nn::to_matrix(f->value);
    proj_tg = nn::to_matrix(p->value);
  }
  const Eigen::MatrixXd feat = nn::to_matrix(feat_on->value);
  const Eigen::MatrixXd pred = nn::to_matrix(pred_on->value);

  LossBreakdown out;
  Eigen::MatrixXd grad_pred = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
  Eigen::MatrixXd grad_feat = Eigen::MatrixXd::Zero(feat.rows(), feat.cols());

  if (cfg.symmetric_contrastive) {
    Eigen::MatrixXd swapped(proj_tg.rows(), proj_tg.cols());
    swapped.topRows(b) = proj_tg.bottomRows(b);
    swapped.bottomRows(b) = proj_tg.topRows(b);
    auto con = contrastive_loss(pred, swapped);
    out.l_con = con.value;
    grad_pred = con.grad_online;
  } else {
    auto con = contrastive_loss(pred.topRows(b), proj_tg.bottomRows(b));
    out.l_con = con.value;
    grad_pred.topRows(b) = con.grad_online;
  }

  auto pp = cross_instance_pp_loss(feat.topRows(b), feat_tg.middleRows(b, b), batch.pairing);
  out.l_pp = pp.value;
  grad_feat.topRows(b) = cfg.weights.lambda_pp * pp.grad_online;

  if (use_np) {
    auto np = negative_pair_loss(feat_tg.middleRows(2 * b, b), feat.middleRows(2 * b, b));
    out.l_np = np.value;
    grad_feat.middleRows(2 * b, b) = cfg.weights.lambda_np * np.grad_online;
  }
  out.l_total = total_loss(out, cfg.weights);

  if (!std::isfinite(out.l_con) || !std::isfinite(out.l_pp) || !std::isfinite(out.l_np) || !std::isfinite(out.l_total)) {
    std::ostringstream os;
    os << std::setprecision(17) << "non-finite loss at step " << s.step << ": l_con=" << out.l_con
       << " l_pp=" << out.l_pp << " l_np=" << out.l_np << " l_total=" << out.l_total;
    throw NumericalError(os.str());
  }

  s.optimizer.zero_grad();
  nn::backward({{pred_on, detail::to_float(grad_pred)}, {feat_on, detail::to_float(grad_feat)}});
  s.optimizer.step(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  ema_update(s.target, s.online, cfg.ema_beta);

  ++s.step;
  s.history.push_back(out);
  return out;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_train_log(const std::filesystem::path& path, std::span<const LossBreakdown> history) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "step,l_con,l_pp,l_np,l_total\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& h = history[i];
    os << i << ',' << format_real(h.l_con) << ',' << format_real(h.l_pp) << ',' << format_real(h.l_np) << ','
       << format_real(h.l_total) << '\n';
  }
}

struct TrainOutputs {
  std::filesystem::path dir;
  std::string config_hash;
};

/// Progress hook, called after every step.
using StepCallback = std::function<void(const TrainState&, const LossBreakdown&)>;

/// Fine-tunes from the pretrained (or seeded random) backbone for cfg.steps
/// steps. With outputs set, writes checkpoint.bin (+ .json sidecar),
/// train_log.csv and optional checkpoint_step<N>.bin snapshots.
inline TrainState train(std::span<const Image> fewshot, const TrainConfig& cfg, const EncoderConfig& enc_cfg,
                        const PositivePolicy& pos, const NegativePolicy& neg,
                        const std::optional<TrainOutputs>& outputs = std::nullopt, const StepCallback& on_step = {}) {
  cfg.validate();
  pos.validate();
  neg.validate();
  if (fewshot.empty()) throw DataError("train: the few-shot set is empty (k = 0)");
  for (const auto& img : fewshot) {
    if (img.height != enc_cfg.input_size || img.width != enc_cfg.input_size) {
      throw DataError("train: few-shot images must be resized to the encoder input size " +
                      std::to_string(enc_cfg.input_size));
    }
  }
  TrainState state = make_train_state(load_pretrained(enc_cfg), cfg.seed);
  for (int i = 0; i < cfg.steps; ++i) {
    const Rng batch_rng = state.rng.split("batch", static_cast<std::uint64_t>(state.step));
    const TrainingBatch batch = make_training_batch(fewshot, cfg.batch_size, pos, neg, batch_rng, cfg.use_np_loss);
    const LossBreakdown b = training_step(state, batch, cfg);
    if (on_step) on_step(state, b);
    if (outputs && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < cfg.steps) {
      save_checkpoint(outputs->dir / ("checkpoint_step" + std::to_string(state.step) + ".bin"), state.online, cfg.seed,
                      outputs->config_hash);
    }
  }
  if (outputs) {
    std::filesystem::create_directories(outputs->dir);
    save_checkpoint(outputs->dir / "checkpoint.bin", state.online, cfg.seed, outputs->config_hash);
    write_train_log(outputs->dir / "train_log.csv", state.history);
  }
  return state;
}

}  // namespace coftad
