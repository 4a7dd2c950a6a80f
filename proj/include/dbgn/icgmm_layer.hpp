#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dbgn/graph.hpp"
#include "dbgn/rng.hpp"
#include "dbgn/statistics.hpp"

namespace dbgn {

/// Base measure H over emission parameters plus Gamma(shape, rate)
/// hyper-priors for the concentrations.
struct EmissionPrior {
  FeatureKind kind = FeatureKind::kDiscrete;
  std::size_t alphabet = 1;  // K
  double eta = 1.0;          // symmetric Dirichlet
  double mu0 = 0.0;
  double lambda0 = 0.01;
  double a0 = 1.0;
  double b0 = 1.0;
  double alpha_a = 1.0, alpha_b = 0.01;
  double gamma_a = 1.0, gamma_b = 0.01;

  void validate() const;
  friend bool operator==(const EmissionPrior&, const EmissionPrior&) = default;
};

/// Emission parameters of one state: categorical probabilities or a
/// Gaussian mean and precision.
struct HdpTheta {
  std::vector<double> probs;
  double mu = 0.0;
  double tau = 1.0;

  friend bool operator==(const HdpTheta&, const HdpTheta&) = default;
};

struct HdpTable {
  std::uint32_t dish = 0;
  std::uint64_t customers = 0;

  friend bool operator==(const HdpTable&, const HdpTable&) = default;
};

/// Complete sampler state of one iCGMM layer.
struct HdpState {
  std::size_t num_groups = 1;
  std::vector<double> beta;                     // C + 1, last = remaining stick
  std::vector<std::vector<std::uint64_t>> n;    // [group][state]
  std::vector<std::vector<HdpTable>> tables;    // [group]
  std::vector<std::vector<std::uint64_t>> m;    // [group][state]
  std::vector<HdpTheta> theta;                  // [state]
  std::vector<std::uint64_t> state_id;          // stable ids, [state]
  std::uint64_t next_state_id = 0;
  double alpha0 = 1.0;
  double gamma = 1.0;
  EmissionPrior prior;
  std::vector<std::int64_t> q;                  // per vertex, -1 unassigned
  std::vector<std::int64_t> t;                  // per vertex, -1 unassigned
  std::vector<std::uint32_t> group;             // per vertex
  std::uint64_t rng_state = 0;

  std::size_t num_states() const { return theta.size(); }
  double log_f(double x, std::size_t c) const;
  /// Throws ConsistencyError carrying dump() when a count invariant fails.
  void check_invariants() const;
  std::string dump() const;

  friend bool operator==(const HdpState&, const HdpState&) = default;
};

/// Fresh state with C = 0 and beta = (1).
HdpState make_hdp_state(std::size_t num_groups, std::span<const std::uint32_t> groups, const EmissionPrior& prior,
                        double alpha0, double gamma, std::uint64_t seed);

HdpTheta draw_prior_theta(const EmissionPrior& prior, Rng& rng);
double theta_log_f(const EmissionPrior& prior, const HdpTheta& th, double x);

/// Mean in-neighbour posterior, argmax with ties to the lowest index; 0 for
/// vertices without neighbours or when `frozen` is null (layer 0).
std::vector<std::uint32_t> select_groups(const Dataset& d, const FrozenPosterior* frozen);

struct DishDraw {
  std::size_t index = 0;  // == C means a new state
  HdpTheta theta_new;     // the innovation draw, used if index == C
};

/// Draws q_u for a vertex of group j whose own assignment is already removed.
DishDraw sample_dish(const HdpState& s, std::size_t j, double x, Rng& rng);

/// Appends a state with emission `th`, splitting the remaining stick by Beta(1, gamma).
void add_state(HdpState& s, HdpTheta th, Rng& rng);

/// Table for a customer of group j eating dish c. Returns tables[j].size()
/// for a new table.
std::size_t sample_table(const HdpState& s, std::size_t j, std::size_t c, Rng& rng);

void sample_beta(HdpState& s, Rng& rng);
void sample_emissions(HdpState& s, std::span<const double> features, Rng& rng);
void sample_alpha0(HdpState& s, Rng& rng);
void sample_gamma(HdpState& s, Rng& rng);

/// Drops empty tables, then states without customers (ids compacted).
void prune(HdpState& s);

/// Seeds k states drawn from H and assigns every vertex uniformly at random.
void initialize_assignments(HdpState& s, std::span<const double> features, std::size_t k, Rng& rng);

struct SweepOptions {
  bool auto_hyper = false;
  bool check_invariants = true;
  std::size_t workers = 1;
};

/// Sequential Gibbs sweep in dataset order, then prune and parameter updates.
void gibbs_sweep_exact(HdpState& s, std::span<const double> features, const SweepOptions& opt);

/// One batch per graph: probabilities against the batch-start counts,
/// independent per-vertex draws, bulk update. `graph_offsets` has size |D|+1.
void gibbs_sweep_fast(HdpState& s, std::span<const double> features, std::span<const std::size_t> graph_offsets,
                      const SweepOptions& opt);

/// P(q_u = c) proportional to (alpha0 beta_c + n_{j c}) f(x | theta_c) over existing states.
FrozenPosterior infer_icgmm(const HdpState& s, std::span<const double> features, std::span<const std::uint32_t> groups,
                            PosteriorMode mode, int layer);

struct IcgmmConfig {
  int sweeps = 20;
  bool fast = false;
  double alpha0 = 1.0;
  double gamma = 1.0;
  bool auto_hyper = false;
  EmissionPrior prior;
  bool mu0_from_data = true;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool check_invariants = true;
  std::size_t initial_states = 0;  // 0: start empty
  int burn_in = -1;                // >= 0 averages posteriors after this sweep
  int thin = 1;
  PosteriorMode mode = PosteriorMode::kContinuous;
};

struct IcgmmLayerResult {
  HdpState state;
  FrozenPosterior posterior;
  std::vector<std::size_t> c_trajectory;
  std::vector<double> alpha0_trajectory;
  std::vector<double> gamma_trajectory;
  std::vector<double> sweep_seconds;
};

IcgmmLayerResult train_icgmm_layer(const Dataset& d, const FrozenPosterior* frozen_prev, int layer,
                                   const IcgmmConfig& cfg);

void save_hdp_state(const HdpState& s, const std::string& path);
HdpState load_hdp_state(const std::string& path);

}  // namespace dbgn
