#include "dbgn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dbgn/embeddings.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/rng.hpp"
#include "dbgn/stack.hpp"
#include "json.hpp"

namespace dbgn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Keys that only affect the encoder; configurations equal on these (except
// `layers`) share one trained stack.
const std::vector<std::string> kEncoderKeys = {
    "model",  "states",         "edge_states", "full_history", "posterior", "epochs", "threshold",
    "batch_size", "gaussian_init", "dummy_arc_feature", "bottom", "sweeps", "alpha0", "gamma",
    "auto_hyper", "initial_states", "burn_in", "thin", "eta", "mu0", "lambda0", "a0", "b0"};

template <class T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

std::vector<int> class_index(std::span<const int> labels, std::size_t* num_classes) {
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), labels[i]) - distinct.begin());
  }
  if (num_classes != nullptr) *num_classes = distinct.size();
  return out;
}

std::string encoder_key(const ConfigMap& m) {
  std::string key;
  for (const auto& k : kEncoderKeys) {
    auto it = m.find(k);
    if (it != m.end()) key += k + "=" + it->second + ";";
  }
  return key;
}

StackPosteriors first_layers(const StackPosteriors& p, int layers) {
  StackPosteriors out;
  out.vertex.assign(p.vertex.begin(), p.vertex.begin() + layers);
  const auto ne = std::min<std::size_t>(p.edge.size(), static_cast<std::size_t>(layers));
  out.edge.assign(p.edge.begin(), p.edge.begin() + static_cast<std::ptrdiff_t>(ne));
  return out;
}

Dataset prepared(Dataset d, const RunSpec& spec) { return spec.bottom ? augment_bottom(d) : d; }

EmbeddingSet embed(const RunSpec& spec, const Dataset& d, const StackPosteriors* post) {
  if (spec.baseline) return bag_of_features(d, spec.embed.aggregation);
  return build_graph_embeddings(d, *post, spec.embed.kind, spec.embed.aggregation, spec.embed.out_neighbors);
}

std::vector<double> fit_and_score(const RunSpec& spec, const EmbeddingSet& train, std::span<const double> ytr,
                                  const std::vector<EmbeddingSet>& evals, const std::vector<std::vector<double>>& ys,
                                  std::uint64_t seed, std::size_t num_classes) {
  ClassifierConfig cc = spec.classifier;
  cc.seed = seed;
  const Matrix tx{train.values, train.rows, train.width};
  const Matrix vx{evals.at(0).values, evals[0].rows, evals[0].width};
  const ClassifierParams p = train_classifier(tx, ytr, vx, ys.at(0), cc, num_classes);
  std::vector<double> out;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto pred = predict(p, Matrix{evals[i].values, evals[i].rows, evals[i].width});
    out.push_back(score(pred, p.outputs, ys[i], cc.metric));
  }
  return out;
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << text;
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

json fold_to_json(const FoldRecord& f) {
  return {{"fold", f.fold},
          {"best_index", f.best_index},
          {"best_config", f.best_config},
          {"val_scores", f.val_scores},
          {"final_scores", f.final_scores},
          {"test_score", f.test_score},
          {"complete", f.complete},
          {"experiment_hash", f.experiment_hash}};
}

FoldRecord fold_from_json(const json& j) {
  FoldRecord f;
  f.fold = j.at("fold").get<std::size_t>();
  f.best_index = j.at("best_index").get<std::size_t>();
  f.best_config = j.at("best_config").get<ConfigMap>();
  f.val_scores = j.at("val_scores").get<std::vector<double>>();
  f.final_scores = j.at("final_scores").get<std::vector<double>>();
  f.test_score = j.at("test_score").get<double>();
  f.complete = j.at("complete").get<bool>();
  f.experiment_hash = j.at("experiment_hash").get<std::string>();
  return f;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SplitPlan assemble(std::vector<std::size_t> order, std::size_t k, std::uint64_t seed, std::span<const int> classes,
                   std::size_t num_classes, double holdout_fraction) {
  SplitPlan plan;
  plan.seed = seed;
  plan.k = k;
  plan.folds.resize(k);
  plan.class_counts.assign(k, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < order.size(); ++i) {
    plan.folds[i % k].test.push_back(order[i]);
    if (!classes.empty()) ++plan.class_counts[i % k][static_cast<std::size_t>(classes[order[i]])];
  }
  const std::size_t n = order.size();
  for (std::size_t f = 0; f < k; ++f) {
    FoldSplit& fold = plan.folds[f];
    std::sort(fold.test.begin(), fold.test.end());
    std::vector<bool> in_test(n, false);
    for (auto i : fold.test) in_test[i] = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_test[i]) fold.train.push_back(i);
    }
    auto [tr, va] = holdout_split(fold.train, classes, holdout_fraction, derive_seed(seed, {1, f}));
    fold.inner_train = std::move(tr);
    fold.inner_val = std::move(va);
  }
  return plan;
}

}  // namespace

SplitPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed, double holdout_fraction) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  std::size_t nc = 0;
  const std::vector<int> cls = class_index(labels, &nc);
  std::vector<std::vector<std::size_t>> members(nc);
  for (std::size_t i = 0; i < cls.size(); ++i) members[static_cast<std::size_t>(cls[i])].push_back(i);
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (std::size_t c = 0; c < nc; ++c) {
    if (members[c].size() < k) {
      throw ConfigError("class " + std::to_string(distinct[c]) + " has only " + std::to_string(members[c].size()) +
                        " members; use k <= " + std::to_string(members[c].size()));
    }
  }
  Rng rng(derive_seed(seed, {0}));
  std::vector<std::size_t> order;
  for (auto& m : members) {
    shuffle_in_place(m, rng);
    order.insert(order.end(), m.begin(), m.end());
  }
  return assemble(std::move(order), k, seed, cls, nc, holdout_fraction);
}

SplitPlan plain_kfold(std::size_t n, std::size_t k, std::uint64_t seed, double holdout_fraction) {
  if (k < 2 || k > n) throw ConfigError("k-fold needs 2 <= k <= n");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0}));
  shuffle_in_place(order, rng);
  SplitPlan plan = assemble(std::move(order), k, seed, {}, 0, holdout_fraction);
  plan.stratified = false;
  return plan;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::span<const std::size_t> indices,
                                                                              std::span<const int> labels,
                                                                              double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
  if (indices.size() < 2) throw ConfigError("holdout split needs at least two items");
  std::map<int, std::vector<std::size_t>> groups;
  for (auto i : indices) groups[labels.empty() ? 0 : labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> train, hold;
  std::vector<std::size_t> leftovers;
  for (auto& [c, m] : groups) {
    shuffle_in_place(m, rng);
    const auto h = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(m.size())));
    hold.insert(hold.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(h));
    train.insert(train.end(), m.begin() + static_cast<std::ptrdiff_t>(h), m.end());
  }
  if (hold.empty()) {
    hold.push_back(train.back());
    train.pop_back();
  }
  std::sort(train.begin(), train.end());
  std::sort(hold.begin(), hold.end());
  return {std::move(train), std::move(hold)};
}

AccessGuard::AccessGuard(const Dataset& d, std::vector<double> targets) : d_(d), targets_(std::move(targets)) {
  if (targets_.size() != d.graphs.size()) throw ConfigError("one target per graph is required");
  protected_.assign(d.graphs.size(), false);
}

void AccessGuard::begin_selection(std::span<const std::size_t> protected_indices) {
  std::fill(protected_.begin(), protected_.end(), false);
  for (auto i : protected_indices) protected_.at(i) = true;
  selecting_ = true;
}

void AccessGuard::end_selection() {
  std::fill(protected_.begin(), protected_.end(), false);
  selecting_ = false;
}

void AccessGuard::touch(std::span<const std::size_t> indices) {
  for (auto i : indices) {
    if (i >= d_.graphs.size()) throw ConfigError("dataset index out of range");
  }
  if (!selecting_) return;
  log_.insert(log_.end(), indices.begin(), indices.end());
  for (auto i : indices) {
    if (protected_[i]) {
      ++protected_hits_;
      throw ProtocolError("test index " + std::to_string(i) + " read during model selection");
    }
  }
}

Dataset AccessGuard::subset(std::span<const std::size_t> indices) {
  touch(indices);
  return d_.subset(indices);
}

std::vector<double> AccessGuard::targets(std::span<const std::size_t> indices) {
  touch(indices);
  std::vector<double> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(targets_[i]);
  return out;
}

ExperimentConfig experiment_from_config(const ConfigEntries& entries) {
  ExperimentConfig cfg;
  ConfigEntries model;
  for (const auto& [k, v] : entries) {
    try {
      if (k == "folds") {
        cfg.folds = static_cast<std::size_t>(std::stoull(v));
      } else if (k == "final_runs") {
        cfg.final_runs = static_cast<std::size_t>(std::stoull(v));
      } else if (k == "seed") {
        cfg.seed = std::stoull(v);
      } else if (k == "workers") {
        cfg.workers = static_cast<std::size_t>(std::stoull(v));
      } else if (k == "holdout") {
        cfg.holdout_fraction = std::stod(v);
      } else if (k == "output") {
        cfg.output = v;
      } else if (std::find(experiment_keys().begin(), experiment_keys().end(), k) == experiment_keys().end()) {
        model.emplace_back(k, v);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("'" + k + "' expects a number, got '" + v + "'");
    }
  }
  if (cfg.final_runs < 1) throw ConfigError("final_runs must be at least 1");
  cfg.grid = expand_grid(model);
  for (const auto& m : cfg.grid) spec_from_config(m);  // validate every point up front
  return cfg;
}

std::vector<double> run_pipeline(AccessGuard& guard, const RunSpec& spec, std::span<const std::size_t> train,
                                 const std::vector<std::vector<std::size_t>>& evals, std::uint64_t seed,
                                 std::size_t num_classes) {
  if (evals.empty()) throw ConfigError("run_pipeline needs an early-stopping set");
  const Dataset dtr = prepared(guard.subset(train), spec);
  const std::vector<double> ytr = guard.targets(train);
  std::vector<Dataset> des;
  std::vector<std::vector<double>> ys;
  for (const auto& e : evals) {
    des.push_back(prepared(guard.subset(e), spec));
    ys.push_back(guard.targets(e));
  }
  std::vector<EmbeddingSet> xe;
  EmbeddingSet xtr;
  if (spec.baseline) {
    xtr = embed(spec, dtr, nullptr);
    for (const auto& d : des) xe.push_back(embed(spec, d, nullptr));
  } else {
    StackConfig sc = spec.stack;
    sc.seed = derive_seed(seed, {0});
    const TrainedStack s = train_stack(dtr, sc);
    xtr = embed(spec, dtr, &s.train);
    for (const auto& d : des) {
      const StackPosteriors p = infer_stack(s, d);
      xe.push_back(embed(spec, d, &p));
    }
  }
  return fit_and_score(spec, xtr, ytr, xe, ys, derive_seed(seed, {1}), num_classes);
}

SelectionResult model_selection(AccessGuard& guard, const FoldSplit& fold, const std::vector<ConfigMap>& grid,
                                std::uint64_t seed, std::size_t workers, std::size_t num_classes) {
  if (grid.empty()) throw ConfigError("model selection needs a non-empty grid");
  SelectionResult res;
  if (grid.size() == 1) return res;

  std::vector<RunSpec> specs;
  for (const auto& m : grid) {
    specs.push_back(spec_from_config(m));
    specs.back().stack.workers = workers;
  }
  const std::vector<double> ytr = guard.targets(fold.inner_train);
  const std::vector<std::vector<double>> yv = {guard.targets(fold.inner_val)};
  res.val_scores.assign(grid.size(), 0.0);

  // Group by encoder; each group trains one stack at its maximum depth.
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < grid.size(); ++i) keys.push_back(specs[i].baseline ? "bof" : encoder_key(grid[i]));
  std::vector<bool> done(grid.size(), false);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> members;
    for (std::size_t j = i; j < grid.size(); ++j) {
      if (keys[j] == keys[i]) members.push_back(j);
    }
    const Dataset dtr = prepared(guard.subset(fold.inner_train), specs[i]);
    const Dataset dva = prepared(guard.subset(fold.inner_val), specs[i]);
    TrainedStack stack;
    StackPosteriors val_post;
    if (!specs[i].baseline) {
      StackConfig sc = specs[i].stack;
      for (auto j : members) sc.layers = std::max(sc.layers, specs[j].stack.layers);
      sc.seed = derive_seed(seed, {0});
      stack = train_stack(dtr, sc);
      val_post = infer_stack(stack, dva);
      ++res.encoders_trained;
    }
    for (auto j : members) {
      EmbeddingSet xtr, xva;
      if (specs[j].baseline) {
        xtr = embed(specs[j], dtr, nullptr);
        xva = embed(specs[j], dva, nullptr);
      } else {
        const int l = specs[j].stack.layers;
        const StackPosteriors ptr = first_layers(stack.train, l);
        const StackPosteriors pva = first_layers(val_post, l);
        xtr = embed(specs[j], dtr, &ptr);
        xva = embed(specs[j], dva, &pva);
      }
      res.val_scores[j] = fit_and_score(specs[j], xtr, ytr, {xva}, yv, derive_seed(seed, {1, j}), num_classes)[0];
      done[j] = true;
    }
  }
  const Metric metric = specs[0].classifier.metric;
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (metric_better(metric, res.val_scores[j], res.val_scores[res.best_index])) res.best_index = j;
  }
  return res;
}

std::string experiment_hash(const ExperimentConfig& cfg) {
  ConfigMap m;
  m["folds"] = std::to_string(cfg.folds);
  m["final_runs"] = std::to_string(cfg.final_runs);
  m["seed"] = std::to_string(cfg.seed);
  m["holdout"] = fmt(cfg.holdout_fraction);
  for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
    for (const auto& [k, v] : cfg.grid[i]) m["grid." + std::to_string(i) + "." + k] = v;
  }
  return config_hash(m);
}

AssessmentReport model_assessment(const Dataset& d, const ExperimentConfig& cfg) {
  if (cfg.grid.empty()) throw ConfigError("experiment grid is empty");
  const RunSpec first = spec_from_config(cfg.grid[0]);
  const bool regression = is_regression(first.classifier.metric);
  std::vector<double> targets;
  std::vector<int> labels;
  if (regression) {
    for (const auto& g : d.graphs) {
      if (!g.target) throw DataError("graph without regression target");
      targets.push_back(*g.target);
    }
  } else {
    labels = d.graph_labels();
    std::size_t nc = 0;
    const auto cls = class_index(labels, &nc);
    targets.assign(cls.begin(), cls.end());
  }
  std::size_t num_classes = 0;
  if (!regression) class_index(labels, &num_classes);

  const std::uint64_t split_seed = derive_seed(cfg.seed, {0});
  const SplitPlan plan = regression ? plain_kfold(d.graphs.size(), cfg.folds, split_seed, cfg.holdout_fraction)
                                    : stratified_kfold(labels, cfg.folds, split_seed, cfg.holdout_fraction);
  const std::vector<int> cls = regression ? std::vector<int>{} : class_index(labels, nullptr);

  AssessmentReport report;
  report.metric = to_string(first.classifier.metric);
  report.experiment_hash = experiment_hash(cfg);
  if (!cfg.output.empty()) fs::create_directories(cfg.output);
  AccessGuard guard(d, targets);

  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const FoldSplit& fold = plan.folds[f];
    const fs::path record_path = fs::path(cfg.output) / ("fold_" + std::to_string(f) + ".json");
    if (!cfg.output.empty() && fs::exists(record_path)) {
      std::ifstream in(record_path);
      const FoldRecord rec = fold_from_json(json::parse(in));
      if (rec.complete && rec.experiment_hash == report.experiment_hash) {
        report.folds.push_back(rec);
        continue;
      }
    }
    FoldRecord rec;
    rec.fold = f;
    rec.experiment_hash = report.experiment_hash;

    guard.begin_selection(fold.test);
    const SelectionResult sel =
        model_selection(guard, fold, cfg.grid, derive_seed(cfg.seed, {1, f}), cfg.workers, num_classes);
    guard.end_selection();
    rec.best_index = sel.best_index;
    rec.best_config = cfg.grid[sel.best_index];
    rec.val_scores = sel.val_scores;

    RunSpec spec = spec_from_config(rec.best_config);
    spec.stack.workers = cfg.workers;
    for (std::size_t r = 0; r < cfg.final_runs; ++r) {
      auto [tr, ho] = holdout_split(fold.train, cls, cfg.holdout_fraction, derive_seed(cfg.seed, {2, f, r}));
      const auto scores = run_pipeline(guard, spec, tr, {ho, fold.test}, derive_seed(cfg.seed, {3, f, r}), num_classes);
      rec.final_scores.push_back(scores[1]);
    }
    double s = 0.0;
    for (double v : rec.final_scores) s += v;
    rec.test_score = s / static_cast<double>(rec.final_scores.size());
    rec.complete = true;
    if (!cfg.output.empty()) write_atomic(record_path, fold_to_json(rec).dump(2) + "\n");
    report.folds.push_back(std::move(rec));
  }

  report.selection_log = guard.selection_log();
  report.protected_reads = guard.protected_reads();
  report.complete = true;
  double sum = 0.0;
  for (const auto& f : report.folds) {
    sum += f.test_score;
    report.complete = report.complete && f.complete;
  }
  const double n = static_cast<double>(report.folds.size());
  report.mean = sum / n;
  double var = 0.0;
  for (const auto& f : report.folds) var += (f.test_score - report.mean) * (f.test_score - report.mean);
  report.std = std::sqrt(var / n);

  if (!cfg.output.empty()) {
    const fs::path out(cfg.output);
    write_atomic(out / "report.json", report_to_json(report));
    write_atomic(out / "report.md", report_to_markdown(report));
    std::ostringstream csv;
    csv << "fold,best_index,test_score";
    for (std::size_t r = 0; r < cfg.final_runs; ++r) csv << ",run_" << r;
    csv << "\n";
    for (const auto& f : report.folds) {
      csv << f.fold << "," << f.best_index << "," << fmt(f.test_score);
      for (double v : f.final_scores) csv << "," << fmt(v);
      csv << "\n";
    }
    write_atomic(out / "report.csv", csv.str());
  }
  return report;
}

std::string report_to_json(const AssessmentReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) folds.push_back(fold_to_json(f));
  const json j = {{"metric", r.metric},
                  {"mean", r.mean},
                  {"std", r.std},
                  {"complete", r.complete},
                  {"experiment_hash", r.experiment_hash},
                  {"selection_reads", r.selection_log.size()},
                  {"protected_reads", r.protected_reads},
                  {"folds", folds}};
  return j.dump(2) + "\n";
}

std::string report_to_markdown(const AssessmentReport& r) {
  std::ostringstream o;
  char buf[128];
  o << "# Assessment report\n\n";
  std::snprintf(buf, sizeof buf, "%s: %.4f +- %.4f over %zu folds%s\n\n", r.metric.c_str(), r.mean, r.std,
                r.folds.size(), r.complete ? "" : " (incomplete)");
  o << buf;
  o << "Protected reads during selection: " << r.protected_reads << "\n\n";
  o << "| fold | selected | test |\n|---|---|---|\n";
  for (const auto& f : r.folds) {
    std::snprintf(buf, sizeof buf, "| %zu | %zu | %.4f |\n", f.fold, f.best_index, f.test_score);
    o << buf;
  }
  return o.str();
}

}  // namespace dbgn
