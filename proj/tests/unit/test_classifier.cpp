#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dbgn/classifier.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/rng.hpp"
#include "tempdir.hpp"

using namespace dbgn;
namespace dt = dbgn::testing;

namespace {

struct Toy {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Matrix m() const { return Matrix{x, rows, cols}; }
};

// Two Gaussian blobs pushed apart along the first axis by a margin.
Toy separable(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Toy t;
  t.rows = n;
  t.cols = 3;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    t.x.push_back((c == 0 ? -2.0 : 2.0) + 2.0 * rng.uniform() - 1.0);
    t.x.push_back(sample_normal(rng, 0.0, 1.0));
    t.x.push_back(sample_normal(rng, 0.0, 1.0));
    t.y.push_back(c);
  }
  return t;
}

Toy random_toy(std::uint64_t seed, std::size_t n, std::size_t cols, std::size_t classes) {
  Rng rng(seed);
  Toy t;
  t.rows = n;
  t.cols = cols;
  for (std::size_t i = 0; i < n * cols; ++i) t.x.push_back(sample_normal(rng, 0.0, 1.0));
  for (std::size_t i = 0; i < n; ++i) t.y.push_back(static_cast<double>(i % classes));
  return t;
}

}  // namespace

TEST(Classifier, SeparableToyReachesFullTrainAccuracy) {
  const Toy t = separable(1, 100);
  ClassifierConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  const ClassifierParams p = train_classifier(t.m(), t.y, t.m(), t.y, cfg);
  EXPECT_EQ(score(predict(p, t.m()), p.outputs, t.y, Metric::kAccuracy), 1.0);
  EXPECT_LE(p.epoch, 200);
}

TEST(Classifier, ZeroInitGivesUniformAndLogC) {
  for (std::size_t classes : {2u, 3u, 7u}) {
    const Toy t = random_toy(2, 20, 4, classes);
    ClassifierConfig cfg;
    const ClassifierParams p = init_classifier(4, classes, cfg);
    std::vector<std::size_t> rows(t.rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const double ce = loss_and_gradient(p, p.theta, t.m(), t.y, rows, 0.0, nullptr);
    EXPECT_NEAR(ce, std::log(static_cast<double>(classes)), 1e-12);
    for (double v : predict(p, t.m())) EXPECT_NEAR(v, 1.0 / static_cast<double>(classes), 1e-15);
  }
}

TEST(Classifier, PatienceZeroRunsOneEpoch) {
  const Toy t = separable(3, 40);
  ClassifierConfig cfg;
  cfg.patience = 0;
  const ClassifierParams p = train_classifier(t.m(), t.y, t.m(), t.y, cfg);
  EXPECT_EQ(p.epoch, 1);
  EXPECT_EQ(p.train_loss.size(), 1u);
}

TEST(Classifier, EarlyStoppingKeepsBestSnapshot) {
  const Toy tr = random_toy(4, 60, 5, 3);
  const Toy va = random_toy(5, 30, 5, 3);
  ClassifierConfig cfg;
  cfg.patience = 5;
  cfg.max_epochs = 100;
  const ClassifierParams p = train_classifier(tr.m(), tr.y, va.m(), va.y, cfg);
  EXPECT_LE(p.best_epoch, p.epoch);
  EXPECT_LE(p.epoch - p.best_epoch, 5);
  EXPECT_EQ(p.best_metric, *std::max_element(p.val_metric.begin(), p.val_metric.end()));
  EXPECT_EQ(score(predict(p, va.m()), p.outputs, va.y, Metric::kAccuracy), p.best_metric);
}

TEST(Classifier, DeterministicGivenSeed) {
  const Toy t = random_toy(6, 50, 4, 2);
  ClassifierConfig cfg;
  cfg.arch = Architecture::kHidden;
  cfg.hidden = 8;
  cfg.max_epochs = 20;
  cfg.batch_size = 7;
  const ClassifierParams a = train_classifier(t.m(), t.y, t.m(), t.y, cfg);
  const ClassifierParams b = train_classifier(t.m(), t.y, t.m(), t.y, cfg);
  EXPECT_EQ(a.theta, b.theta);
}

TEST(Classifier, HandComputedLinearForward) {
  ClassifierConfig cfg;
  cfg.standardize = false;
  ClassifierParams p = init_classifier(2, 2, cfg);
  // W = [[1, 2], [3, -1]], b = [0.5, -0.5]
  p.theta = {1, 2, 3, -1, 0.5, -0.5};
  const std::vector<double> x = {1.0, 1.0, 0.0, 2.0};
  const auto out = predict(p, Matrix{x, 2, 2});
  // row 0: z = (3.5, 1.5); row 1: z = (4.5, -2.5)
  const double p0 = 1.0 / (1.0 + std::exp(1.5 - 3.5));
  const double p1 = 1.0 / (1.0 + std::exp(-2.5 - 4.5));
  EXPECT_NEAR(out[0], p0, 1e-15);
  EXPECT_NEAR(out[1], 1.0 - p0, 1e-15);
  EXPECT_NEAR(out[2], p1, 1e-15);
  EXPECT_NEAR(out[3], 1.0 - p1, 1e-15);
}

TEST(Classifier, SoftmaxRowsSumToOne) {
  const Toy t = random_toy(7, 30, 6, 4);
  ClassifierConfig cfg;
  cfg.arch = Architecture::kHidden;
  cfg.max_epochs = 5;
  cfg.patience = 5;
  const ClassifierParams p = train_classifier(t.m(), t.y, t.m(), t.y, cfg);
  const auto out = predict(p, t.m());
  for (std::size_t r = 0; r < t.rows; ++r) {
    EXPECT_NEAR(out[r * 4] + out[r * 4 + 1] + out[r * 4 + 2] + out[r * 4 + 3], 1.0, 1e-9);
  }
  const std::vector<double> narrow(5 * 5, 0.0);
  EXPECT_THROW(predict(p, Matrix{narrow, 5, 5}), ConfigError);
}

class GradientCheck : public ::testing::TestWithParam<std::tuple<Architecture, Metric>> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto [arch, metric] = GetParam();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Toy t = random_toy(10 + seed, 9, 4, 3);
    if (is_regression(metric)) {
      Rng r(seed);
      for (double& y : t.y) y = sample_normal(r, 0.0, 2.0);
    }
    ClassifierConfig cfg;
    cfg.arch = arch;
    cfg.hidden = 5;
    cfg.metric = metric;
    cfg.seed = seed;
    ClassifierParams p = init_classifier(4, is_regression(metric) ? 1 : 3, cfg);
    Rng rng(100 + seed);
    for (double& v : p.theta) v = sample_normal(rng, 0.0, 0.5);
    std::vector<std::size_t> rows(t.rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::vector<double> grad;
    const double l2 = 0.1;
    loss_and_gradient(p, p.theta, t.m(), t.y, rows, l2, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.theta.size(); ++i) {
      std::vector<double> th = p.theta;
      th[i] += h;
      const double up = loss_and_gradient(p, th, t.m(), t.y, rows, l2, nullptr);
      th[i] -= 2 * h;
      const double dn = loss_and_gradient(p, th, t.m(), t.y, rows, l2, nullptr);
      const double fd = (up - dn) / (2 * h);
      EXPECT_LE(std::abs(fd - grad[i]), 1e-5 * std::max(1.0, std::abs(grad[i]))) << "param " << i;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Architectures, GradientCheck,
                         ::testing::Combine(::testing::Values(Architecture::kLinear, Architecture::kHidden),
                                            ::testing::Values(Metric::kAccuracy, Metric::kMae)));

TEST(Classifier, L2ShrinksWeightsAtFixedDataGradient) {
  const Toy t = random_toy(20, 12, 3, 2);
  ClassifierConfig cfg;
  ClassifierParams p = init_classifier(3, 2, cfg);
  Rng rng(20);
  for (double& v : p.theta) v = sample_normal(rng, 0.0, 1.0);
  std::vector<std::size_t> rows(t.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<double> g0, g1;
  loss_and_gradient(p, p.theta, t.m(), t.y, rows, 0.0, &g0);
  loss_and_gradient(p, p.theta, t.m(), t.y, rows, 0.5, &g1);
  const auto mask = p.weight_mask();
  const double lr = 0.1;
  double n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < p.theta.size(); ++i) {
    if (!mask[i]) {
      EXPECT_EQ(g0[i], g1[i]);
      continue;
    }
    n0 += std::pow(p.theta[i] - lr * g0[i], 2);
    n1 += std::pow(p.theta[i] - lr * g1[i], 2);
  }
  EXPECT_LT(n1, n0);
}

TEST(Classifier, ColumnPermutationGivesRelabeledWeights) {
  const Toy t = random_toy(21, 40, 4, 3);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Toy tp = t;
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t d = 0; d < 4; ++d) tp.x[r * 4 + perm[d]] = t.x[r * 4 + d];
  }
  ClassifierConfig cfg;
  cfg.max_epochs = 30;
  cfg.patience = 30;
  const ClassifierParams a = train_classifier(t.m(), t.y, t.m(), t.y, cfg);
  const ClassifierParams b = train_classifier(tp.m(), tp.y, tp.m(), tp.y, cfg);
  EXPECT_EQ(a.val_metric, b.val_metric);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(a.theta[k * 4 + d], b.theta[k * 4 + perm[d]], 1e-12);
  }
}

TEST(Classifier, NanLossAbortsWithDiagnostic) {
  Toy t = random_toy(22, 10, 2, 2);
  t.x[0] = std::numeric_limits<double>::quiet_NaN();
  ClassifierConfig cfg;
  cfg.standardize = false;
  try {
    train_classifier(t.m(), t.y, t.m(), t.y, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("learning rate"), std::string::npos);
  }
}

TEST(Classifier, ConfigValidation) {
  ClassifierConfig cfg;
  cfg.arch = Architecture::kHidden;
  cfg.hidden = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ClassifierConfig{};
  cfg.patience = cfg.max_epochs + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  const Toy t = random_toy(23, 4, 2, 2);
  EXPECT_THROW(train_classifier(t.m(), t.y, Matrix{{}, 0, 2}, {}, ClassifierConfig{}), ConfigError);
}

TEST(Score, AllCorrectAndAllWrong) {
  const std::vector<double> y = {0, 1, 1, 0};
  const std::vector<double> right = {0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.6, 0.4};
  const std::vector<double> wrong = {0.1, 0.9, 0.8, 0.2, 0.7, 0.3, 0.4, 0.6};
  EXPECT_EQ(score(right, 2, y, Metric::kAccuracy), 1.0);
  EXPECT_EQ(score(right, 2, y, Metric::kMicroF1), 1.0);
  EXPECT_EQ(score(wrong, 2, y, Metric::kAccuracy), 0.0);
  EXPECT_EQ(score(std::vector<double>{1, 3}, 1, std::vector<double>{2, 2}, Metric::kMae), 1.0);
}

TEST(Score, MicroF1ThreeLabelConfusionTable) {
  // Per label (tp, fp, fn): a (3, 1, 2), b (0, 2, 1), c (5, 0, 0)
  // micro: tp 8, fp 3, fn 3 -> P = R = 8/11, F1 = 8/11.
  const std::vector<std::size_t> tp = {3, 0, 5}, fp = {1, 2, 0}, fn = {2, 1, 0};
  EXPECT_NEAR(micro_f1(tp, fp, fn), 8.0 / 11.0, 1e-15);
  // Same table as a multi-label matrix: 2 rows x 3 labels with mixed hits.
  const std::vector<int> pred = {1, 1, 0, 1, 0, 1};
  const std::vector<int> truth = {1, 0, 1, 1, 0, 0};
  // tp = 2, fp = 2, fn = 1 -> 4 / 7
  EXPECT_NEAR(micro_f1_multilabel(pred, truth, 3), 4.0 / 7.0, 1e-15);
}

TEST(Classifier, SaveLoadRoundTrip) {
  dt::TempDir dir;
  const Toy t = random_toy(24, 30, 3, 2);
  ClassifierConfig cfg;
  cfg.arch = Architecture::kHidden;
  cfg.max_epochs = 10;
  cfg.patience = 10;
  const ClassifierParams p = train_classifier(t.m(), t.y, t.m(), t.y, cfg);
  save_classifier(p, dir.file("c.bin"));
  const ClassifierParams q = load_classifier(dir.file("c.bin"));
  EXPECT_EQ(q.theta, p.theta);
  EXPECT_EQ(q.shift, p.shift);
  EXPECT_EQ(q.val_metric, p.val_metric);
  EXPECT_EQ(predict(q, t.m()), predict(p, t.m()));
}
