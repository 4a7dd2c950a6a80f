#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dbgn {

enum class Architecture { kLinear, kHidden };
enum class Metric { kAccuracy, kMicroF1, kMae };

std::string to_string(Architecture a);
std::string to_string(Metric m);
Architecture architecture_from_string(const std::string& s);
Metric metric_from_string(const std::string& s);

/// MAE is the only regression metric; it selects a single squared-loss output.
inline bool is_regression(Metric m) { return m == Metric::kMae; }
/// True when `a` is a strictly better metric value than `b`.
bool metric_better(Metric m, double a, double b);

struct ClassifierConfig {
  Architecture arch = Architecture::kLinear;
  std::size_t hidden = 32;
  double learning_rate = 0.01;
  double l2 = 0.0;
  std::size_t batch_size = 32;
  int max_epochs = 200;
  int patience = 20;
  Metric metric = Metric::kAccuracy;
  std::uint64_t seed = 0;
  bool standardize = true;  // per-column z-scoring fitted on the training rows

  void validate() const;
};

/// Row-major design matrix view.
struct Matrix {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const double> row(std::size_t r) const { return values.subspan(r * cols, cols); }
};

struct ClassifierParams {
  Architecture arch = Architecture::kLinear;
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t outputs = 0;  // classes, or 1 for regression
  bool regression = false;
  std::vector<double> shift;  // standardization, one entry per input
  std::vector<double> scale;
  // Linear: W (outputs x inputs), b. Hidden: W1 (hidden x inputs), b1, W2 (outputs x hidden), b2.
  std::vector<double> theta;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::vector<double> best_theta;
  int epoch = 0;
  int best_epoch = 0;
  double best_metric = 0.0;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_metric;  // per epoch

  std::size_t num_parameters() const { return theta.size(); }
  /// True for entries subject to the L2 penalty (weights, not biases).
  std::vector<bool> weight_mask() const;
};

/// Fresh parameters: zeros for the linear model, scaled Gaussian hidden
/// weights with a zero output layer for the hidden model.
ClassifierParams init_classifier(std::size_t inputs, std::size_t outputs, const ClassifierConfig& cfg);

/// Mean loss (plus 0.5 * l2 * |W|^2) of `theta` over `rows` and its gradient.
/// Inputs are used as given; standardization is the caller's business.
double loss_and_gradient(const ClassifierParams& p, std::span<const double> theta, const Matrix& x,
                         std::span<const double> y, std::span<const std::size_t> rows, double l2,
                         std::vector<double>* grad);

/// Trains with Adam and patience early stopping on the validation metric.
/// The returned `theta` is the best-validation snapshot. Throws
/// NumericalError on a non-finite loss.
ClassifierParams train_classifier(const Matrix& train_x, std::span<const double> train_y, const Matrix& val_x,
                                  std::span<const double> val_y, const ClassifierConfig& cfg,
                                  std::size_t num_classes = 0);

/// rows x outputs: softmax probabilities, or the regression value.
std::vector<double> predict(const ClassifierParams& p, const Matrix& x);

/// Accuracy, micro-F1 or MAE of `predictions` (rows x outputs) against `targets`.
double score(std::span<const double> predictions, std::size_t outputs, std::span<const double> targets, Metric m);

/// Micro-averaged F1 from per-label true positives, false positives and false negatives.
double micro_f1(std::span<const std::size_t> tp, std::span<const std::size_t> fp, std::span<const std::size_t> fn);
/// Micro-F1 of multi-label 0/1 matrices (rows x labels).
double micro_f1_multilabel(std::span<const int> predicted, std::span<const int> truth, std::size_t labels);

void save_classifier(const ClassifierParams& p, const std::string& path);
ClassifierParams load_classifier(const std::string& path);
/// CSV `row,prediction,p_0,...` (or `row,prediction` for regression).
void write_predictions(const std::string& path, std::span<const double> predictions, std::size_t outputs,
                       bool regression);

}  // namespace dbgn
