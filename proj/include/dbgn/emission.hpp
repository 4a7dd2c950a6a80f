#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dbgn/graph.hpp"
#include "dbgn/rng.hpp"

namespace dbgn {

/// Adaptive emission P(x | Q = i): a K x C categorical table or one
/// univariate Gaussian per state.
struct EmissionModel {
  FeatureKind kind = FeatureKind::kDiscrete;
  std::size_t num_states = 0;
  std::size_t alphabet = 0;    // K; categorical only
  std::vector<double> probs;   // K x C, probs[k * C + i] = P(X = k | Q = i)
  std::vector<double> mean;    // C
  std::vector<double> sd;      // C
  double sd_floor = 0.0;

  double log_prob(double x, std::size_t state) const;
  /// Throws ConfigError when a column leaves the simplex or sd < floor.
  void validate() const;

  friend bool operator==(const EmissionModel&, const EmissionModel&) = default;
};

enum class GaussianInit { kKMeans, kQuantiles };

/// Population standard deviation.
double feature_std(std::span<const double> xs);

/// sigma floor used for Gaussian emissions: 1e-3 of the data spread.
double sd_floor_for(std::span<const double> xs);

/// Plain 1-D Lloyd k-means with k-means++ seeding; centres sorted ascending.
std::vector<double> kmeans_1d(std::span<const double> xs, std::size_t k, Rng& rng, int max_iter = 100);

/// Evenly spaced empirical quantiles (k of them), ascending.
std::vector<double> quantile_centres(std::span<const double> xs, std::size_t k);

EmissionModel init_emission(FeatureKind kind, std::size_t num_states, std::size_t alphabet,
                            std::span<const double> features, GaussianInit ginit, Rng& rng);

}  // namespace dbgn
