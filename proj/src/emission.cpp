#include "dbgn/emission.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dbgn/errors.hpp"
#include "dbgn/numeric.hpp"

namespace dbgn {

double EmissionModel::log_prob(double x, std::size_t state) const {
  if (kind == FeatureKind::kDiscrete) {
    const auto k = static_cast<std::size_t>(x);
    if (k >= alphabet) return -std::numeric_limits<double>::infinity();
    return std::log(probs[k * num_states + state]);
  }
  return gaussian_log_pdf(x, mean[state], sd[state]);
}

void EmissionModel::validate() const {
  if (kind == FeatureKind::kDiscrete) {
    if (probs.size() != alphabet * num_states) throw ConfigError("categorical emission has wrong shape");
    for (std::size_t i = 0; i < num_states; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < alphabet; ++k) {
        const double p = probs[k * num_states + i];
        if (!(p >= 0.0)) throw ConfigError("negative emission probability");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ConfigError("emission column does not sum to 1");
    }
  } else {
    if (mean.size() != num_states || sd.size() != num_states) throw ConfigError("gaussian emission has wrong shape");
    for (std::size_t i = 0; i < num_states; ++i) {
      if (!std::isfinite(mean[i])) throw ConfigError("non-finite emission mean");
      if (!(sd[i] >= sd_floor) || !(sd[i] > 0.0)) throw ConfigError("emission sd below floor");
    }
  }
}

double feature_std(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double mu = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

double sd_floor_for(std::span<const double> xs) {
  const double s = feature_std(xs);
  return 1e-3 * (s > 0.0 ? s : 1.0);
}

std::vector<double> kmeans_1d(std::span<const double> xs, std::size_t k, Rng& rng, int max_iter) {
  if (xs.empty()) throw ConfigError("k-means on empty data");
  if (k == 0) throw ConfigError("k-means with k = 0");
  std::vector<double> centres;
  centres.reserve(k);
  centres.push_back(xs[static_cast<std::size_t>(rng.uniform() * static_cast<double>(xs.size())) % xs.size()]);
  std::vector<double> d2(xs.size());
  while (centres.size() < k) {
    for (std::size_t n = 0; n < xs.size(); ++n) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centres) best = std::min(best, (xs[n] - c) * (xs[n] - c));
      d2[n] = best;
    }
    const std::size_t pick = sample_categorical(rng, d2);
    // All points coincide with a centre: duplicate a random point.
    centres.push_back(pick < xs.size() ? xs[pick]
                                       : xs[static_cast<std::size_t>(rng.uniform() * static_cast<double>(xs.size())) % xs.size()]);
  }
  std::vector<double> sum(k), cnt(k);
  for (int it = 0; it < max_iter; ++it) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0.0);
    for (double x : xs) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (std::abs(x - centres[c]) < std::abs(x - centres[best])) best = c;
      }
      sum[best] += x;
      cnt[best] += 1.0;
    }
    bool moved = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (cnt[c] == 0.0) continue;  // empty cluster keeps its centre
      const double next = sum[c] / cnt[c];
      if (next != centres[c]) moved = true;
      centres[c] = next;
    }
    if (!moved) break;
  }
  std::sort(centres.begin(), centres.end());
  return centres;
}

std::vector<double> quantile_centres(std::span<const double> xs, std::size_t k) {
  if (xs.empty()) throw ConfigError("quantile init on empty data");
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double q = (static_cast<double>(c) + 0.5) / static_cast<double>(k);
    const auto pos = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1) + 0.5);
    out[c] = sorted[std::min(pos, sorted.size() - 1)];
  }
  return out;
}

EmissionModel init_emission(FeatureKind kind, std::size_t num_states, std::size_t alphabet,
                            std::span<const double> features, GaussianInit ginit, Rng& rng) {
  EmissionModel e;
  e.kind = kind;
  e.num_states = num_states;
  if (kind == FeatureKind::kDiscrete) {
    if (alphabet == 0) throw ConfigError("categorical emission needs K >= 1");
    e.alphabet = alphabet;
    e.probs.assign(alphabet * num_states, 0.0);
    const std::vector<double> ones(alphabet, 1.0);
    for (std::size_t i = 0; i < num_states; ++i) {
      const auto col = sample_dirichlet(rng, ones);
      for (std::size_t k = 0; k < alphabet; ++k) e.probs[k * num_states + i] = col[k];
    }
  } else {
    if (features.empty()) throw ConfigError("gaussian emission init needs data");
    e.sd_floor = sd_floor_for(features);
    e.mean = ginit == GaussianInit::kKMeans ? kmeans_1d(features, num_states, rng)
                                           : quantile_centres(features, num_states);
    e.sd.assign(num_states, std::max(feature_std(features), e.sd_floor));
  }
  return e;
}

}  // namespace dbgn
