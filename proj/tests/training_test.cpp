#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "memtax/training.hpp"

using namespace memtax;

TEST(Clip, ScalesDownToThreshold) {
  Tensor g(2, 1);
  g[0] = 3;
  g[1] = 4;
  const double norm = clip_gradients({&g}, 1.0);
  EXPECT_DOUBLE_EQ(norm, 5.0);
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
}

TEST(Clip, LeavesSmallGradientsAlone) {
  Tensor a(2, 1), b(1, 1);
  a[0] = 0.3;
  a[1] = -0.4;
  b[0] = 0.5;
  const Tensor a0 = a, b0 = b;
  clip_gradients({&a, &b}, 10.0);
  EXPECT_EQ(a, a0);
  EXPECT_EQ(b, b0);
}

TEST(Clip, RandomGradientsEndUpWithinThreshold) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 20);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor a(4, 3), b(5, 1);
    for (double& v : a.values()) v = nd(rng);
    for (double& v : b.values()) v = nd(rng);
    clip_gradients({&a, &b}, 10.0);
    EXPECT_LE(global_norm({&a, &b}), 10.0 + 1e-12);
  }
  Tensor g(1, 1);
  EXPECT_THROW(clip_gradients({&g}, 0.0), std::invalid_argument);
}

TEST(Optimizer, ZeroLearningRateLeavesParametersUnchanged) {
  for (OptimizerKind k : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
    Tensor p(3, 1, 0.7), g(3, 1, 1.5);
    Optimizer opt(k, 0.0);
    for (int i = 0; i < 5; ++i) opt.step({&p}, {&g});
    EXPECT_EQ(p, Tensor(3, 1, 0.7)) << to_string(k);
  }
}

TEST(Optimizer, SgdOnQuadraticDecreasesMonotonically) {
  // f(p) = sum (p - 2)^2, gradient 2 (p - 2).
  Tensor p(3, 1);
  p[0] = -1;
  p[1] = 5;
  p[2] = 0.5;
  Optimizer opt(OptimizerKind::Sgd, 0.1);
  auto f = [&] {
    double s = 0;
    for (double v : p.values()) s += (v - 2) * (v - 2);
    return s;
  };
  double prev = f();
  for (int i = 0; i < 50; ++i) {
    Tensor g(3, 1);
    for (std::size_t j = 0; j < 3; ++j) g[j] = 2 * (p[j] - 2);
    opt.step({&p}, {&g});
    const double now = f();
    EXPECT_LT(now, prev);
    prev = now;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  Tensor p(2, 1), g(2, 1);
  g[0] = 3;
  g[1] = -0.01;
  Optimizer opt(OptimizerKind::Adam, 1e-3);
  opt.step({&p}, {&g});
  EXPECT_NEAR(p[0], -1e-3, 1e-9);
  EXPECT_NEAR(p[1], 1e-3, 1e-9);
}

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, kTrainStream), derive_seed(1, kHeldOutStream));
  EXPECT_NE(derive_seed(1, kTrainStream), derive_seed(2, kTrainStream));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(Defaults, SizesFollowTheTask) {
  for (Architecture a : kAllArchitectures) {
    for (TaskKind k : kAllTasks) {
      const TrainConfig c = default_config(a, k);
      EXPECT_NO_THROW(c.validate());
      EXPECT_EQ(c.network.dims.input, c.task.input_size());
      EXPECT_EQ(c.network.dims.output, c.task.output_size());
      EXPECT_EQ(c.network.dims.hidden, is_counting(k) ? 3u : 64u);
    }
  }
  EXPECT_EQ(default_config(Architecture::Rnn, TaskKind::CountInterf).network.hidden, Activation::Relu);
  EXPECT_EQ(default_config(Architecture::Rnn, TaskKind::Count).budget, 5000u);
  EXPECT_EQ(default_config(Architecture::Lstm, TaskKind::CountInterf).budget, 20000u);
  EXPECT_EQ(default_config(Architecture::Stack, TaskKind::Reverse).budget, 50000u);
  EXPECT_EQ(default_config(Architecture::Ram, TaskKind::RepeatCopy).budget, 100000u);
}

TEST(Defaults, ValidationRejectsMismatchedSizes) {
  TrainConfig c = default_config(Architecture::Rnn, TaskKind::Reverse);
  c.network.dims.input = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = default_config(Architecture::Rnn, TaskKind::Reverse);
  c.clip = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Evaluate, UntrainedReverseIsNearChance) {
  const TrainConfig c = default_config(Architecture::Lstm, TaskKind::Reverse);
  double sum = 0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const Model m = cell_init(c.network, s);
    sum += evaluate(m, c.task, 100, 1000 + s);
  }
  EXPECT_NEAR(sum / 5, 1.0 / 6.0, 0.1);
}

TEST(Evaluate, HandWiredCounterScoresZero) {
  RnnConfig rc{{3, 3, 3, 3, 3}, Activation::Relu};
  CellModel<RnnCell> m;
  m.config = rc;
  m.weights.w_xh = Tensor::identity(3);
  m.weights.w_hh = Tensor(3, 3);
  m.weights.w_hh(0, 0) = 1;
  m.weights.b_h = Tensor::zeros(3);
  m.weights.w_ho = Tensor::identity(3);
  m.weights.b_o = Tensor::zeros(3);
  TaskSpec spec = TaskSpec::defaults(TaskKind::Count);
  EXPECT_EQ(evaluate(Model{m}, spec, 100, 5), 0.0);
  // On the interference task the count leaks onto b and c steps.
  spec = TaskSpec::defaults(TaskKind::CountInterf);
  EXPECT_GT(evaluate(Model{m}, spec, 100, 5), 0.0);
}

TEST(Evaluate, PoolsAcrossEpisodes) {
  const TrainConfig c = default_config(Architecture::Rnn, TaskKind::Reverse);
  const Model m = cell_init(c.network, 2);
  TaskSpec spec = c.task;
  spec.seed = 11;
  const auto eps = EpisodeGenerator(spec).batch(20);
  MetricSum total;
  for (const Episode& e : eps) total += episode_metric_sum(predict(m, e), e);
  EXPECT_DOUBLE_EQ(pooled_metric(m, eps), total.value());
  EXPECT_DOUBLE_EQ(evaluate(m, c.task, 20, 11), total.value());
}

struct GradCase {
  Architecture arch;
  bool content_location;
  bool coupled;
};

class GradCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradCheck, TapeMatchesFiniteDifferences) {
  const GradCase gc = GetParam();
  NetworkConfig n;
  n.arch = gc.arch;
  n.dims = {3, 4, 3, 3, 4};
  if (gc.content_location) n.addressing = AddressingMode::content_location(10.0, 1);
  n.coupled = gc.coupled;
  const GradCheckResult r = grad_check_cell(n, 21, 3);
  EXPECT_LT(r.max_relative_error, 1e-5) << "worst " << r.worst;
}

INSTANTIATE_TEST_SUITE_P(Cells, GradCheck,
                         ::testing::Values(GradCase{Architecture::Rnn, false, false},
                                           GradCase{Architecture::Lstm, false, false},
                                           GradCase{Architecture::Stack, false, false},
                                           GradCase{Architecture::Ram, false, false},
                                           GradCase{Architecture::Ram, false, true},
                                           GradCase{Architecture::Ram, true, false}),
                         [](const auto& info) {
                           std::string n = to_string(info.param.arch);
                           if (info.param.content_location) n += "_content_location";
                           if (info.param.coupled) n += "_coupled";
                           return n;
                         });

TEST(Train, ZeroBudgetReturnsInitialModel) {
  TrainConfig c = default_config(Architecture::Stack, TaskKind::Count);
  c.budget = 0;
  const TrainResult r = train(c);
  EXPECT_EQ(r.model, cell_init(c.network, c.seed, c.init_mode));
  EXPECT_TRUE(r.curve.empty());
  EXPECT_EQ(r.episodes, 0u);
}

TEST(Train, SameSeedSameResult) {
  TrainConfig c = default_config(Architecture::Lstm, TaskKind::CountInterf);
  c.budget = 600;
  const TrainResult a = train(c);
  const TrainResult b = train(c);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
    EXPECT_EQ(a.curve[i].success, b.curve[i].success);
  }
  c.seed = 2;
  EXPECT_FALSE(train(c).model == a.model);
}

TEST(Train, CurveIsRecordedEveryEvalInterval) {
  TrainConfig c = default_config(Architecture::Rnn, TaskKind::Count);
  c.budget = 1100;
  c.threshold = 1e-12;  // never reached
  std::vector<CurvePoint> seen;
  const TrainResult r = train(c, [&](const CurvePoint& p) { seen.push_back(p); });
  ASSERT_EQ(r.curve.size(), 5u);
  EXPECT_EQ(r.curve.back().episode, 1100u);
  EXPECT_EQ(r.curve[0].episode, 250u);
  EXPECT_EQ(seen.size(), r.curve.size());
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.episodes, 1100u);
}

TEST(Train, LstmLearnsToCount) {
  const TrainConfig c = default_config(Architecture::Lstm, TaskKind::Count);
  const TrainResult r = train(c);
  EXPECT_TRUE(r.success) << "metric " << r.metric;
  EXPECT_LT(r.metric, 0.1);
  EXPECT_LT(r.curve.back().loss, r.curve.front().loss);
  EXPECT_LT(evaluate(r.model, c.task, 200, 99), 0.1);
}

TEST(Train, HugeLearningRateDiverges) {
  TrainConfig c = default_config(Architecture::Rnn, TaskKind::Count);
  c.optimizer = OptimizerKind::Sgd;
  c.learning_rate = 1e200;
  c.budget = 200;
  EXPECT_THROW(train(c), DivergenceError);
}
