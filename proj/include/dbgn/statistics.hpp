#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dbgn/graph.hpp"

namespace dbgn {

enum class PosteriorMode { kContinuous, kOneHot };

/// Per-row state distributions inferred and frozen by one trained layer.
/// Rows are dataset-global vertex ids (or arc ids for edge posteriors).
struct FrozenPosterior {
  int layer = 0;
  std::size_t width = 0;
  PosteriorMode mode = PosteriorMode::kContinuous;
  std::vector<double> values;  // rows x width, row-major

  std::size_t rows() const { return width == 0 ? 0 : values.size() / width; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * width, width}; }
  std::span<double> row(std::size_t r) { return {values.data() + r * width, width}; }

  /// Throws ConfigError when a row is off the simplex (1e-9) or a one-hot
  /// row is not exactly one-hot.
  void validate() const;

  /// Collapses every row onto its argmax (ties to the lowest index).
  FrozenPosterior one_hot() const;

  /// Rows [begin, end) as a new posterior.
  FrozenPosterior slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const FrozenPosterior&, const FrozenPosterior&) = default;
};

void save_posterior(const FrozenPosterior& p, const std::string& path);
FrozenPosterior load_posterior(const std::string& path);

/// Pre-computed neighbourhood statistics consumed by a layer.
///
/// For subset entry l (prior layer layers[l]), row u and label a the macro
/// state is the mean of the frozen posteriors of N_u^a; `count` holds the
/// (possibly weighted) neighbour mass. An empty neighbourhood yields a zero
/// vector and count 0.
struct LayerStatistics {
  std::size_t num_rows = 0;
  std::size_t num_labels = 0;
  std::vector<int> layers;
  std::vector<std::size_t> widths;
  std::vector<std::vector<double>> macro;  // per l: rows x labels x width
  std::vector<std::vector<double>> count;  // per l: rows x labels

  std::size_t num_layers() const { return layers.size(); }
  std::span<const double> macro_state(std::size_t l, std::size_t u, std::size_t a) const {
    const std::size_t w = widths[l];
    return {macro[l].data() + (u * num_labels + a) * w, w};
  }
  double neighbor_count(std::size_t l, std::size_t u, std::size_t a) const {
    return count[l][u * num_labels + a];
  }

  friend bool operator==(const LayerStatistics&, const LayerStatistics&) = default;
};

/// Macro states for every vertex of `d` over the prior layers in
/// `layer_subset`. `frozen[k]` must be the posterior of layer k. With a
/// bottom-augmented dataset each width grows by one and dummy neighbours
/// contribute a one-hot vector on that extra coordinate.
LayerStatistics compute_statistics(const Dataset& d, std::span<const FrozenPosterior> frozen,
                                   std::span<const int> layer_subset);

void save_statistics(const LayerStatistics& s, const std::string& path);
LayerStatistics load_statistics(const std::string& path);

}  // namespace dbgn
