#include "dbgn/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "dbgn/binary_io.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/numeric.hpp"
#include "dbgn/rng.hpp"

namespace dbgn {
namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
constexpr std::uint32_t kClassifierVersion = 1;

struct Offsets {
  std::size_t w1, b1, w2, b2, total;
};

Offsets offsets(const ClassifierParams& p) {
  if (p.arch == Architecture::kLinear) {
    const std::size_t w = p.outputs * p.inputs;
    return {0, w, w + p.outputs, w + p.outputs, w + p.outputs};
  }
  const std::size_t w1 = p.hidden * p.inputs;
  const std::size_t w2 = p.outputs * p.hidden;
  return {0, w1, w1 + p.hidden, w1 + p.hidden + w2, w1 + p.hidden + w2 + p.outputs};
}

// Output-layer activations for one row; `h` receives the hidden activations.
void forward(const ClassifierParams& p, std::span<const double> theta, std::span<const double> x,
             std::vector<double>& h, std::vector<double>& z) {
  const Offsets o = offsets(p);
  z.assign(p.outputs, 0.0);
  if (p.arch == Architecture::kLinear) {
    for (std::size_t k = 0; k < p.outputs; ++k) {
      double s = theta[o.b1 + k];
      const double* w = theta.data() + k * p.inputs;
      for (std::size_t d = 0; d < p.inputs; ++d) s += w[d] * x[d];
      z[k] = s;
    }
    return;
  }
  h.assign(p.hidden, 0.0);
  for (std::size_t j = 0; j < p.hidden; ++j) {
    double s = theta[o.b1 + j];
    const double* w = theta.data() + j * p.inputs;
    for (std::size_t d = 0; d < p.inputs; ++d) s += w[d] * x[d];
    h[j] = s > 0.0 ? s : 0.0;
  }
  for (std::size_t k = 0; k < p.outputs; ++k) {
    double s = theta[o.b2 + k];
    const double* w = theta.data() + o.w2 + k * p.hidden;
    for (std::size_t j = 0; j < p.hidden; ++j) s += w[j] * h[j];
    z[k] = s;
  }
}

void softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
}

std::vector<double> standardized(const ClassifierParams& p, const Matrix& x) {
  std::vector<double> out(x.values.begin(), x.values.end());
  if (p.shift.empty()) return out;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t d = 0; d < x.cols; ++d) out[r * x.cols + d] = (out[r * x.cols + d] - p.shift[d]) / p.scale[d];
  }
  return out;
}

std::vector<double> predict_raw(const ClassifierParams& p, std::span<const double> theta, const Matrix& x) {
  std::vector<double> out(x.rows * p.outputs), h, z;
  for (std::size_t r = 0; r < x.rows; ++r) {
    forward(p, theta, x.row(r), h, z);
    if (!p.regression) softmax_inplace(z);
    std::copy(z.begin(), z.end(), out.begin() + static_cast<std::ptrdiff_t>(r * p.outputs));
  }
  return out;
}

void check_targets(std::span<const double> y, std::size_t rows, bool regression, std::size_t classes) {
  if (y.size() != rows) throw ConfigError("target count does not match the number of rows");
  if (regression) return;
  for (double v : y) {
    if (v < 0 || v != std::floor(v) || static_cast<std::size_t>(v) >= classes) {
      throw DataError("class label " + std::to_string(v) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

std::string to_string(Architecture a) { return a == Architecture::kLinear ? "linear" : "hidden"; }

std::string to_string(Metric m) {
  switch (m) {
    case Metric::kAccuracy: return "accuracy";
    case Metric::kMicroF1: return "micro-f1";
    case Metric::kMae: return "mae";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "linear") return Architecture::kLinear;
  if (s == "hidden" || s == "mlp") return Architecture::kHidden;
  throw ConfigError("unknown architecture '" + s + "'");
}

Metric metric_from_string(const std::string& s) {
  if (s == "accuracy") return Metric::kAccuracy;
  if (s == "micro-f1" || s == "f1") return Metric::kMicroF1;
  if (s == "mae") return Metric::kMae;
  throw ConfigError("unknown metric '" + s + "'");
}

bool metric_better(Metric m, double a, double b) { return is_regression(m) ? a < b : a > b; }

void ClassifierConfig::validate() const {
  if (arch == Architecture::kHidden && hidden < 1) throw ConfigError("hidden architecture needs at least one unit");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (l2 < 0.0) throw ConfigError("l2 must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (max_epochs < 1) throw ConfigError("max epochs must be at least 1");
  if (patience < 0 || patience > max_epochs) throw ConfigError("patience must lie in [0, max epochs]");
}

std::vector<bool> ClassifierParams::weight_mask() const {
  const Offsets o = offsets(*this);
  std::vector<bool> mask(o.total, false);
  for (std::size_t i = o.w1; i < o.b1; ++i) mask[i] = true;
  for (std::size_t i = o.w2; i < o.b2; ++i) mask[i] = true;
  return mask;
}

ClassifierParams init_classifier(std::size_t inputs, std::size_t outputs, const ClassifierConfig& cfg) {
  cfg.validate();
  if (inputs == 0 || outputs == 0) throw ConfigError("classifier needs inputs and outputs");
  ClassifierParams p;
  p.arch = cfg.arch;
  p.inputs = inputs;
  p.hidden = cfg.arch == Architecture::kHidden ? cfg.hidden : 0;
  p.outputs = outputs;
  p.regression = is_regression(cfg.metric);
  const Offsets o = offsets(p);
  p.theta.assign(o.total, 0.0);
  if (p.arch == Architecture::kHidden) {
    Rng rng = make_stream(cfg.seed, {0});
    const double sd = std::sqrt(2.0 / static_cast<double>(inputs));
    for (std::size_t i = o.w1; i < o.b1; ++i) p.theta[i] = sample_normal(rng, 0.0, sd);
  }
  p.adam_m.assign(o.total, 0.0);
  p.adam_v.assign(o.total, 0.0);
  p.best_theta = p.theta;
  return p;
}

double loss_and_gradient(const ClassifierParams& p, std::span<const double> theta, const Matrix& x,
                         std::span<const double> y, std::span<const std::size_t> rows, double l2,
                         std::vector<double>* grad) {
  const Offsets o = offsets(p);
  if (grad != nullptr) grad->assign(o.total, 0.0);
  std::vector<double> h, z, dh;
  double loss = 0.0;
  const double inv_n = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    const auto xr = x.row(r);
    forward(p, theta, xr, h, z);
    // dz = dLoss/dz for this row
    if (p.regression) {
      const double e = z[0] - y[r];
      loss += 0.5 * e * e;
      z[0] = e;
    } else {
      const auto c = static_cast<std::size_t>(y[r]);
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double v : z) s += std::exp(v - m);
      loss += m + std::log(s) - z[c];
      for (double& v : z) v = std::exp(v - m) / s;
      z[c] -= 1.0;
    }
    if (grad == nullptr) continue;
    auto& g = *grad;
    if (p.arch == Architecture::kLinear) {
      for (std::size_t k = 0; k < p.outputs; ++k) {
        const double dz = z[k] * inv_n;
        double* gw = g.data() + k * p.inputs;
        for (std::size_t d = 0; d < p.inputs; ++d) gw[d] += dz * xr[d];
        g[o.b1 + k] += dz;
      }
      continue;
    }
    dh.assign(p.hidden, 0.0);
    for (std::size_t k = 0; k < p.outputs; ++k) {
      const double dz = z[k] * inv_n;
      const double* w = theta.data() + o.w2 + k * p.hidden;
      double* gw = g.data() + o.w2 + k * p.hidden;
      for (std::size_t j = 0; j < p.hidden; ++j) {
        gw[j] += dz * h[j];
        dh[j] += dz * w[j];
      }
      g[o.b2 + k] += dz;
    }
    for (std::size_t j = 0; j < p.hidden; ++j) {
      if (h[j] <= 0.0) continue;
      double* gw = g.data() + j * p.inputs;
      for (std::size_t d = 0; d < p.inputs; ++d) gw[d] += dh[j] * xr[d];
      g[o.b1 + j] += dh[j];
    }
  }
  loss *= inv_n;
  if (l2 > 0.0) {
    const auto mask = p.weight_mask();
    double sq = 0.0;
    for (std::size_t i = 0; i < o.total; ++i) {
      if (!mask[i]) continue;
      sq += theta[i] * theta[i];
      if (grad != nullptr) (*grad)[i] += l2 * theta[i];
    }
    loss += 0.5 * l2 * sq;
  }
  return loss;
}

ClassifierParams train_classifier(const Matrix& train_x, std::span<const double> train_y, const Matrix& val_x,
                                  std::span<const double> val_y, const ClassifierConfig& cfg,
                                  std::size_t num_classes) {
  cfg.validate();
  if (val_x.rows == 0) throw ConfigError("validation set is empty");
  if (train_x.rows == 0) throw ConfigError("training set is empty");
  if (val_x.cols != train_x.cols) throw ConfigError("train and validation widths differ");
  const bool regression = is_regression(cfg.metric);
  if (!regression && num_classes == 0) {
    for (double v : train_y) num_classes = std::max(num_classes, static_cast<std::size_t>(std::max(v, 0.0)) + 1);
    for (double v : val_y) num_classes = std::max(num_classes, static_cast<std::size_t>(std::max(v, 0.0)) + 1);
  }
  const std::size_t outputs = regression ? 1 : std::max<std::size_t>(num_classes, 2);
  check_targets(train_y, train_x.rows, regression, outputs);
  check_targets(val_y, val_x.rows, regression, outputs);

  ClassifierParams p = init_classifier(train_x.cols, outputs, cfg);
  if (cfg.standardize) {
    p.shift.assign(train_x.cols, 0.0);
    p.scale.assign(train_x.cols, 1.0);
    std::vector<double> col(train_x.rows);
    for (std::size_t d = 0; d < train_x.cols; ++d) {
      for (std::size_t r = 0; r < train_x.rows; ++r) col[r] = train_x.values[r * train_x.cols + d];
      const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
      double var = 0.0;
      for (double v : col) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(col.size()));
      p.shift[d] = mean;
      p.scale[d] = sd > 0.0 ? sd : 1.0;
    }
  }
  const std::vector<double> xs = standardized(p, train_x);
  const Matrix tx{xs, train_x.rows, train_x.cols};

  std::vector<std::size_t> order(train_x.rows);
  std::vector<double> grad;
  std::uint64_t step = 0;
  int since_best = 0;
  p.best_metric = regression ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_stream(cfg.seed, {1, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + b, e - b);
      const double loss = loss_and_gradient(p, p.theta, tx, train_y, batch, cfg.l2, &grad);
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + " (learning rate " +
                             std::to_string(cfg.learning_rate) + "); retry with a smaller learning rate");
      }
      epoch_loss += loss * static_cast<double>(batch.size());
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < p.theta.size(); ++i) {
        p.adam_m[i] = kBeta1 * p.adam_m[i] + (1.0 - kBeta1) * grad[i];
        p.adam_v[i] = kBeta2 * p.adam_v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        p.theta[i] -= cfg.learning_rate * (p.adam_m[i] / c1) / (std::sqrt(p.adam_v[i] / c2) + kEps);
      }
    }
    p.epoch = epoch;
    p.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const std::vector<double> vs = standardized(p, val_x);
    const double metric =
        score(predict_raw(p, p.theta, Matrix{vs, val_x.rows, val_x.cols}), outputs, val_y, cfg.metric);
    p.val_metric.push_back(metric);
    if (metric_better(cfg.metric, metric, p.best_metric)) {
      p.best_metric = metric;
      p.best_epoch = epoch;
      p.best_theta = p.theta;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }
  p.theta = p.best_theta;
  return p;
}

std::vector<double> predict(const ClassifierParams& p, const Matrix& x) {
  if (x.cols != p.inputs) {
    throw ConfigError("embedding width " + std::to_string(x.cols) + " differs from the trained width " +
                      std::to_string(p.inputs));
  }
  const std::vector<double> xs = standardized(p, x);
  return predict_raw(p, p.theta, Matrix{xs, x.rows, x.cols});
}

double score(std::span<const double> predictions, std::size_t outputs, std::span<const double> targets, Metric m) {
  const std::size_t n = targets.size();
  if (outputs == 0 || predictions.size() != n * outputs) throw ConfigError("prediction/target size mismatch");
  if (n == 0) throw ConfigError("cannot score an empty set");
  if (m == Metric::kMae) {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += std::abs(predictions[r * outputs] - targets[r]);
    return s / static_cast<double>(n);
  }
  std::vector<std::size_t> tp(outputs, 0), fp(outputs, 0), fn(outputs, 0);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t pred = argmax_lowest(predictions.subspan(r * outputs, outputs));
    const auto truth = static_cast<std::size_t>(targets[r]);
    if (pred == truth) {
      ++correct;
      ++tp[pred];
    } else {
      ++fp[pred];
      if (truth < outputs) ++fn[truth];
    }
  }
  if (m == Metric::kAccuracy) return static_cast<double>(correct) / static_cast<double>(n);
  return micro_f1(tp, fp, fn);
}

double micro_f1(std::span<const std::size_t> tp, std::span<const std::size_t> fp, std::span<const std::size_t> fn) {
  const double t = static_cast<double>(std::accumulate(tp.begin(), tp.end(), std::size_t{0}));
  const double f1 = static_cast<double>(std::accumulate(fp.begin(), fp.end(), std::size_t{0}));
  const double f2 = static_cast<double>(std::accumulate(fn.begin(), fn.end(), std::size_t{0}));
  const double denom = 2.0 * t + f1 + f2;
  return denom == 0.0 ? 1.0 : 2.0 * t / denom;
}

double micro_f1_multilabel(std::span<const int> predicted, std::span<const int> truth, std::size_t labels) {
  if (predicted.size() != truth.size() || labels == 0 || truth.size() % labels != 0) {
    throw ConfigError("multi-label matrices must share a rows x labels shape");
  }
  std::vector<std::size_t> tp(labels, 0), fp(labels, 0), fn(labels, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t l = i % labels;
    if (predicted[i] && truth[i]) ++tp[l];
    else if (predicted[i]) ++fp[l];
    else if (truth[i]) ++fn[l];
  }
  return micro_f1(tp, fp, fn);
}

void save_classifier(const ClassifierParams& p, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("DBGNCLF1");
  w.u32(kClassifierVersion);
  w.u32(static_cast<std::uint32_t>(p.arch));
  w.u64(p.inputs);
  w.u64(p.hidden);
  w.u64(p.outputs);
  w.u32(p.regression ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(p.epoch));
  w.u32(static_cast<std::uint32_t>(p.best_epoch));
  w.f64(p.best_metric);
  w.u64(p.shift.size());
  w.f64s(p.shift);
  w.f64s(p.scale);
  w.u64(p.theta.size());
  w.f64s(p.theta);
  w.f64s(p.adam_m);
  w.f64s(p.adam_v);
  w.f64s(p.best_theta);
  w.u64(p.train_loss.size());
  w.f64s(p.train_loss);
  w.f64s(p.val_metric);
  w.close();
}

ClassifierParams load_classifier(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("DBGNCLF1");
  r.expect_version(kClassifierVersion);
  ClassifierParams p;
  p.arch = static_cast<Architecture>(r.u32());
  p.inputs = r.u64();
  p.hidden = r.u64();
  p.outputs = r.u64();
  p.regression = r.u32() != 0;
  p.epoch = static_cast<int>(r.u32());
  p.best_epoch = static_cast<int>(r.u32());
  p.best_metric = r.f64();
  const auto ns = r.u64();
  if (ns != 0 && ns != p.inputs) throw IoError("corrupt standardization block in " + path);
  p.shift = r.f64s(ns);
  p.scale = r.f64s(ns);
  const auto nt = r.u64();
  if (nt != offsets(p).total) throw IoError("parameter count mismatch in " + path);
  p.theta = r.f64s(nt);
  p.adam_m = r.f64s(nt);
  p.adam_v = r.f64s(nt);
  p.best_theta = r.f64s(nt);
  const auto ne = r.u64();
  if (ne > (1u << 24)) throw IoError("implausible epoch count in " + path);
  p.train_loss = r.f64s(ne);
  p.val_metric = r.f64s(ne);
  return p;
}

void write_predictions(const std::string& path, std::span<const double> predictions, std::size_t outputs,
                       bool regression) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw IoError("cannot open for writing: " + path);
  const std::size_t n = outputs == 0 ? 0 : predictions.size() / outputs;
  std::fprintf(f, "row,prediction");
  if (!regression) {
    for (std::size_t k = 0; k < outputs; ++k) std::fprintf(f, ",p_%zu", k);
  }
  std::fprintf(f, "\n");
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = predictions.subspan(r * outputs, outputs);
    if (regression) {
      std::fprintf(f, "%zu,%.17g\n", r, row[0]);
      continue;
    }
    std::fprintf(f, "%zu,%zu", r, argmax_lowest(row));
    for (double v : row) std::fprintf(f, ",%.17g", v);
    std::fprintf(f, "\n");
  }
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

}  // namespace dbgn
