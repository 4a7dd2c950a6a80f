#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbgn/config.hpp"
#include "dbgn/graph.hpp"

namespace dbgn {

struct FoldSplit {
  std::vector<std::size_t> train;  // outer train, sorted
  std::vector<std::size_t> test;   // sorted
  std::vector<std::size_t> inner_train;
  std::vector<std::size_t> inner_val;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  std::size_t k = 0;
  bool stratified = true;
  std::vector<FoldSplit> folds;
  std::vector<std::vector<std::size_t>> class_counts;  // [fold][class] in the test part
};

/// Per class: shuffle, concatenate in class order, deal position i to fold
/// i mod k. Inner holdouts are stratified 90/10 splits of each outer train.
/// Throws ConfigError when a class has fewer than k members.
SplitPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed,
                           double holdout_fraction = 0.1);
/// Unstratified variant for regression targets.
SplitPlan plain_kfold(std::size_t n, std::size_t k, std::uint64_t seed, double holdout_fraction = 0.1);

/// Stratified (by `labels`, when non-empty) split of `indices` into
/// (train, holdout) with round(fraction * n_c) holdout items per class.
/// At least one holdout item is kept overall.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::span<const std::size_t> indices,
                                                                              std::span<const int> labels,
                                                                              double fraction, std::uint64_t seed);

/// Gatekeeper for every dataset read of the harness. While a selection
/// phase is open every index read is logged, and reading a protected (test)
/// index throws ProtocolError.
class AccessGuard {
 public:
  AccessGuard(const Dataset& d, std::vector<double> targets);

  void begin_selection(std::span<const std::size_t> protected_indices);
  void end_selection();
  bool in_selection() const { return selecting_; }

  Dataset subset(std::span<const std::size_t> indices);
  std::vector<double> targets(std::span<const std::size_t> indices);

  /// Every index read while a selection phase was open.
  const std::vector<std::size_t>& selection_log() const { return log_; }
  /// Number of logged reads that hit a protected index (always 0 unless the
  /// throwing check was bypassed).
  std::size_t protected_reads() const { return protected_hits_; }

  const Dataset& dataset_for_metadata() const { return d_; }

 private:
  void touch(std::span<const std::size_t> indices);

  const Dataset& d_;
  std::vector<double> targets_;
  std::vector<bool> protected_;
  std::vector<std::size_t> log_;
  std::size_t protected_hits_ = 0;
  bool selecting_ = false;
};

struct SelectionResult {
  std::size_t best_index = 0;
  std::vector<double> val_scores;     // one per grid point, grid order
  std::size_t encoders_trained = 0;   // distinct stacks trained (depth reuse)
};

struct ExperimentConfig {
  std::size_t folds = 10;
  std::size_t final_runs = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double holdout_fraction = 0.1;
  std::string output;                // per-fold records and reports; empty: in memory
  std::vector<ConfigMap> grid;       // grid order is part of the record
};

/// Parses folds/final_runs/seed/workers/output and expands the model grid.
ExperimentConfig experiment_from_config(const ConfigEntries& entries);

/// Runs `spec` end to end: encoder trained on `train`, embeddings of `train`
/// and every set in `evals`, classifier on train with early stopping on
/// `evals[0]`; returns the scores on each eval set.
std::vector<double> run_pipeline(AccessGuard& guard, const RunSpec& spec, std::span<const std::size_t> train,
                                 const std::vector<std::vector<std::size_t>>& evals, std::uint64_t seed,
                                 std::size_t num_classes);

/// Inner holdout model selection on one outer training fold. Configurations
/// that differ only in `layers` share a single encoder trained at the
/// maximum depth and truncated. Ties break toward the earlier grid position.
SelectionResult model_selection(AccessGuard& guard, const FoldSplit& fold, const std::vector<ConfigMap>& grid,
                                std::uint64_t seed, std::size_t workers, std::size_t num_classes);

struct FoldRecord {
  std::size_t fold = 0;
  std::size_t best_index = 0;
  ConfigMap best_config;
  std::vector<double> val_scores;
  std::vector<double> final_scores;  // one per final run
  double test_score = 0.0;           // mean of final_scores
  bool complete = false;
  std::string experiment_hash;
};

struct AssessmentReport {
  std::vector<FoldRecord> folds;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across folds
  bool complete = false;
  std::string metric;
  std::string experiment_hash;
  std::vector<std::size_t> selection_log;  // concatenated across folds
  std::size_t protected_reads = 0;
};

/// Outer k-fold risk assessment. With a non-empty `cfg.output`, per-fold
/// records `fold_<i>.json` are written as they finish and reused on rerun,
/// and report.json / report.md / report.csv are written at the end.
AssessmentReport model_assessment(const Dataset& d, const ExperimentConfig& cfg);

std::string experiment_hash(const ExperimentConfig& cfg);
std::string report_to_json(const AssessmentReport& r);
std::string report_to_markdown(const AssessmentReport& r);

}  // namespace dbgn
