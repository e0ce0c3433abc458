#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "coftad/train.hpp"
#include "test_support.hpp"

using namespace coftad;
using coftad::testing::read_file;
using coftad::testing::smooth_image;
using coftad::testing::TempDir;
using coftad::testing::tiny_config;

namespace {

std::vector<Image> shots(int n, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(smooth_image(16, rng));
  return out;
}

TrainConfig small_train(int steps) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 8;
  c.lr = 1e-3;
  c.seed = 3;
  return c;
}

std::vector<nn::Tensor> values(const std::vector<std::pair<std::string, nn::Var>>& params) {
  std::vector<nn::Tensor> out;
  for (const auto& [n, v] : params) out.push_back(v->value);
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    out.push_back(text.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  TrainConfig c;
  c.steps = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lr = -1e-3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weights.lambda_np = -0.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainStep, ZeroLearningRateLeavesOnlineParameters) {
  const auto imgs = shots(3);
  TrainState s = make_train_state(create_online(tiny_config()), 1);
  // Move the target away from the online net so the EMA is observable.
  s.target.backbone.visit("", [](const std::string&, nn::Var& v) {
    for (auto& x : v->value.values()) x += 0.5f;
  });
  const auto before_online = values(named_parameters(s.online));
  const auto before_target = values(named_parameters(s.target));
  TrainConfig cfg = small_train(1);
  cfg.lr = 0.0;
  const auto batch = make_training_batch(imgs, 8, PositivePolicy::flowers(), NegativePolicy{}, Rng(2));
  training_step(s, batch, cfg);
  EXPECT_EQ(values(named_parameters(s.online)), before_online);
  const auto after_target = values(named_parameters(s.target));
  EXPECT_NE(after_target, before_target);
}

TEST(TrainStep, TargetFollowsHandEma) {
  const auto imgs = shots(3);
  TrainState s = make_train_state(create_online(tiny_config()), 1);
  TrainConfig cfg = small_train(1);
  for (int step = 0; step < 3; ++step) {
    const auto t_prev = values(named_parameters(s.target));
    const auto batch = make_training_batch(imgs, 8, PositivePolicy::flowers(), NegativePolicy{}, Rng(10 + step));
    training_step(s, batch, cfg);
    const auto online = named_parameters(s.online);
    const auto target = named_parameters(s.target);
    ASSERT_EQ(target.size(), t_prev.size());
    for (std::size_t k = 0; k < target.size(); ++k) {
      const nn::Tensor* src = nullptr;
      for (const auto& [n, v] : online) {
        if (n == target[k].first) src = &v->value;
      }
      ASSERT_NE(src, nullptr);
      for (std::size_t i = 0; i < src->size(); ++i) {
        const double expect = cfg.ema_beta * t_prev[k][i] + (1 - cfg.ema_beta) * (*src)[i];
        ASSERT_NEAR(target[k].second->value[i], expect, 1e-7) << target[k].first;
      }
    }
  }
}

TEST(TrainStep, TargetReceivesNoGradient) {
  const auto imgs = shots(2);
  TrainState s = make_train_state(create_online(tiny_config()), 1);
  const auto batch = make_training_batch(imgs, 4, PositivePolicy::flowers(), NegativePolicy{}, Rng(2));
  training_step(s, batch, small_train(1));
  for (const auto& [name, v] : named_parameters(s.target)) {
    EXPECT_TRUE(v->grad.empty()) << name;
    EXPECT_FALSE(v->requires_grad) << name;
  }
  std::size_t with_grad = 0;
  for (const auto& [name, v] : named_parameters(s.online)) with_grad += !v->grad.empty();
  EXPECT_EQ(with_grad, named_parameters(s.online).size());
}

TEST(TrainStep, NegativeLossDisabled) {
  const auto imgs = shots(2);
  TrainState s = make_train_state(create_online(tiny_config()), 1);
  TrainConfig cfg = small_train(1);
  cfg.use_np_loss = false;
  const auto batch = make_training_batch(imgs, 4, PositivePolicy::flowers(), NegativePolicy{}, Rng(2), false);
  const auto b = training_step(s, batch, cfg);
  EXPECT_EQ(b.l_np, 0.0);
  EXPECT_DOUBLE_EQ(b.l_total, b.l_con + cfg.weights.lambda_pp * b.l_pp);
  cfg.use_np_loss = true;
  EXPECT_THROW(training_step(s, batch, cfg), ContractError);
}

TEST(TrainStep, FirstContrastiveTermMatchesStandaloneForward) {
  const auto imgs = shots(3);
  const OnlineNetwork online = create_online(tiny_config());
  OnlineNetwork reference = online.clone();
  TargetNetwork ref_target = init_target(reference);
  TrainState s = make_train_state(online.clone(), 1);
  TrainConfig cfg = small_train(1);
  cfg.weights = {0.0, 0.0};
  const auto batch = make_training_batch(imgs, 6, PositivePolicy::identity(), NegativePolicy{}, Rng(4));
  const auto b = training_step(s, batch, cfg);

  // Identical views: predictions of the stacked views against the target projections of the same rows.
  nn::NoGradGuard no_grad;
  const nn::Tensor stacked = nn::concat_rows(std::vector<nn::Tensor>{batch.view1, batch.view2});
  const nn::Var f_on = reference.backbone.forward(nn::constant(stacked));
  const Eigen::MatrixXd pred =
      nn::to_matrix(reference.predictor.forward(reference.projector.forward(f_on, true), true)->value);
  const nn::Var f_tg = ref_target.backbone.forward(nn::constant(stacked));
  const Eigen::MatrixXd proj = nn::to_matrix(ref_target.projector.forward(f_tg, true)->value);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const Eigen::Index j = (i + 6) % 12;
    sum += pred.row(i).dot(proj.row(j)) / (pred.row(i).norm() * proj.row(j).norm());
  }
  EXPECT_NEAR(b.l_con, -sum / 12.0, 1e-6);
}

TEST(Train, DeterministicUnderSeed) {
  const auto imgs = shots(3);
  const auto a = train(imgs, small_train(5), tiny_config(), PositivePolicy::flowers(), NegativePolicy{});
  const auto b = train(imgs, small_train(5), tiny_config(), PositivePolicy::flowers(), NegativePolicy{});
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].l_total, b.history[i].l_total);
  auto pa = a.online.clone(), pb = b.online.clone();
  EXPECT_EQ(values(named_parameters(pa)), values(named_parameters(pb)));
  TrainConfig other = small_train(5);
  other.seed = 4;
  const auto c = train(imgs, other, tiny_config(), PositivePolicy::flowers(), NegativePolicy{});
  EXPECT_NE(a.history.back().l_total, c.history.back().l_total);
}

TEST(Train, ZeroStepsWritesPretrainedWeights) {
  TempDir dir;
  const auto imgs = shots(2);
  EncoderConfig enc = tiny_config();
  OnlineNetwork source = create_online(tiny_config(16, {8, 16}, 50));
  save_checkpoint(dir / "pre.bin", source, 50, "x");
  enc.pretrained_checkpoint = dir / "pre.bin";
  const auto state = train(imgs, small_train(0), enc, PositivePolicy::flowers(), NegativePolicy{},
                           TrainOutputs{dir / "run", "hash"});
  EXPECT_EQ(state.step, 0);
  OnlineNetwork saved = load_checkpoint(dir / "run" / "checkpoint.bin");
  OnlineNetwork fresh = load_pretrained(enc);
  EXPECT_EQ(values(named_parameters(saved)), values(named_parameters(fresh)));
  EXPECT_EQ(lines(read_file(dir / "run" / "train_log.csv")).size(), 1u);
}

TEST(Train, LogHasOneRowPerStep) {
  TempDir dir;
  const auto imgs = shots(2);
  TrainConfig cfg = small_train(2);
  cfg.checkpoint_every = 1;
  const auto state =
      train(imgs, cfg, tiny_config(), PositivePolicy::flowers(), NegativePolicy{}, TrainOutputs{dir.path(), "h"});
  EXPECT_EQ(state.step, 2);
  EXPECT_EQ(state.history.size(), 2u);
  const auto rows = lines(read_file(dir / "train_log.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "step,l_con,l_pp,l_np,l_total");
  EXPECT_EQ(rows[1].substr(0, 2), "0,");
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_step1.bin"));
  EXPECT_FALSE(std::filesystem::exists(dir / "checkpoint_step2.bin"));
  EXPECT_EQ(read_sidecar(dir / "checkpoint.bin")["config_hash"], "h");
}

TEST(Train, InputErrors) {
  const std::vector<Image> none;
  EXPECT_THROW(train(none, small_train(1), tiny_config(), PositivePolicy::flowers(), NegativePolicy{}), DataError);
  Rng rng(1);
  const std::vector<Image> wrong{smooth_image(20, rng)};
  EXPECT_THROW(train(wrong, small_train(1), tiny_config(), PositivePolicy::flowers(), NegativePolicy{}), DataError);
}

TEST(Train, LossTrendsDownward) {
  const auto imgs = shots(5, 9);
  int calls = 0;
  const auto state = train(imgs, small_train(200), tiny_config(), PositivePolicy::cifar_c(), NegativePolicy{},
                           std::nullopt, [&](const TrainState& s, const LossBreakdown&) {
                             ++calls;
                             EXPECT_EQ(static_cast<std::size_t>(s.step), s.history.size());
                           });
  EXPECT_EQ(calls, 200);
  auto window = [&](std::size_t begin) {
    double s = 0;
    for (std::size_t i = begin; i < begin + 50; ++i) s += state.history[i].l_total;
    return s / 50.0;
  };
  EXPECT_LT(window(150), window(0));
  for (const auto& h : state.history) ASSERT_TRUE(std::isfinite(h.l_total));
}
