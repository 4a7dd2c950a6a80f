#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace dbgn {

/// Counter-based 64-bit generator (SplitMix64). The whole state is one
/// counter, so streams are cheap to derive and trivial to checkpoint.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Derives an independent seed from a root seed and a path of counters
/// (e.g. {purpose, fold, layer}). Every seed in an experiment goes through here.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = Rng::mix(root ^ 0x6A09E667F3BCC908ULL);
  for (std::uint64_t p : path) {
    h = Rng::mix(h ^ Rng::mix(p + 0x9E3779B97F4A7C15ULL));
  }
  return h;
}

inline Rng make_stream(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(root, path));
}

// Gamma(shape, rate). shape == 0 yields 0.
inline double sample_gamma(Rng& rng, double shape, double rate) {
  if (shape <= 0.0) return 0.0;
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(rng);
}

inline double sample_beta(Rng& rng, double a, double b) {
  if (b <= 0.0) return 1.0;
  if (a <= 0.0) return 0.0;
  const double x = sample_gamma(rng, a, 1.0);
  const double y = sample_gamma(rng, b, 1.0);
  if (x + y == 0.0) return a / (a + b);
  return x / (x + y);
}

inline double sample_normal(Rng& rng, double mean, double sd) {
  std::normal_distribution<double> dist(mean, sd);
  return dist(rng);
}

/// Dirichlet draw; zero-concentration coordinates get zero mass.
inline std::vector<double> sample_dirichlet(Rng& rng, std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = sample_gamma(rng, alpha[i], 1.0);
    total += out[i];
  }
  if (total <= 0.0) {
    // All gamma draws underflowed: fall back to the mean.
    double asum = 0.0;
    for (double a : alpha) asum += a;
    for (std::size_t i = 0; i < alpha.size(); ++i) out[i] = asum > 0 ? alpha[i] / asum : 0.0;
    return out;
  }
  for (double& v : out) v /= total;
  return out;
}

/// Index drawn proportionally to non-negative weights. Returns weights.size()
/// when every weight is zero.
inline std::size_t sample_categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return weights.size();
  double r = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    r -= weights[i];
    if (r < 0.0) return i;
  }
  // Rounding: return the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size();
}

}  // namespace dbgn
