#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dbgn/emission.hpp"
#include "dbgn/statistics.hpp"

namespace dbgn {

/// Dimensions of one layer. `widths[l]` is the macro-state width of subset
/// entry l (C of that layer, plus one with bottom augmentation).
struct LayerShape {
  std::size_t num_states = 0;
  std::vector<int> layers;
  std::vector<std::size_t> widths;
  std::size_t num_labels = 1;
  FeatureKind kind = FeatureKind::kDiscrete;
  std::size_t alphabet = 0;
};

/// Shape of a layer reading `stats` (nullptr at layer 0).
LayerShape layer_shape(std::size_t num_states, const LayerStatistics* stats, FeatureKind kind,
                       std::size_t alphabet);

/// Tag written into parameter files so E-CGMM components can share the format.
enum class LayerComponent : std::uint32_t { kCgmm = 0, kEcgmmVertex = 1, kEcgmmEdge = 2 };

struct CgmmLayerParams {
  std::size_t num_states = 0;
  std::vector<int> layers;           // empty at layer 0
  std::vector<std::size_t> widths;
  std::size_t num_labels = 1;
  /// Per (l, a): C x W_l row-major, transition[l * A + a][i * W + j] = P(Q = i | Q* = j).
  std::vector<std::vector<double>> transition;
  std::vector<double> sp_layer;      // |L|
  std::vector<double> sp_edge;       // |L| x A
  std::vector<double> prior;         // C, layer 0 only
  EmissionModel emission;
  bool learn_sp_edge = true;
  LayerComponent component = LayerComponent::kCgmm;

  bool is_mixture() const { return layers.empty(); }
  double trans(std::size_t l, std::size_t a, std::size_t i, std::size_t j) const {
    return transition[l * num_labels + a][i * widths[l] + j];
  }
  /// Throws ConfigError when a distribution leaves the simplex (1e-9).
  void validate() const;

  friend bool operator==(const CgmmLayerParams&, const CgmmLayerParams&) = default;
};

/// Random start: symmetric-Dirichlet emissions and transition columns,
/// uniform switching-parent and prior vectors. C = 1 yields constant ones.
CgmmLayerParams init_layer(const LayerShape& shape, std::span<const double> features, std::uint64_t seed,
                           GaussianInit ginit = GaussianInit::kKMeans);

/// Context distribution P(Q_u = i | neighbourhood). Switching-parent mass is
/// renormalised over the labels present at u; a vertex with no neighbours at
/// all gets the uniform prior.
std::vector<double> aggregate_prior(const CgmmLayerParams& p, const LayerStatistics& stats, std::size_t u);

/// Posterior expectations for rows [begin, end).
struct PosteriorTensor {
  std::size_t begin = 0;
  std::size_t rows = 0;
  std::size_t num_states = 0;
  std::size_t num_labels = 0;
  std::vector<std::size_t> widths;
  std::size_t block = 0;                   // per-row stride of `full`
  std::vector<double> full;                // rows x [l][a][i][j]
  std::vector<double> z_i;                 // rows x C
  std::vector<double> z_il;                // rows x L x C
  std::vector<double> z_ila;               // rows x L x A x C
  std::vector<char> has_context;           // rows; 0 for mixture or neighbourless rows
  double log_likelihood = 0.0;
  std::size_t clamped = 0;

  double at(std::size_t r, std::size_t l, std::size_t a, std::size_t i, std::size_t j) const;
  double marginal(std::size_t r, std::size_t i) const { return z_i[r * num_states + i]; }
};

PosteriorTensor e_step(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats,
                       std::size_t begin, std::size_t end);

/// Expected sufficient statistics of a pass over some rows.
struct CgmmAccumulator {
  std::vector<std::vector<double>> transition;  // like CgmmLayerParams::transition
  std::vector<double> sp_layer_num, sp_layer_den;
  std::vector<double> sp_edge_num, sp_edge_den;
  std::vector<char> sp_layer_partial;           // some row saw only part of the layers
  std::vector<char> sp_edge_partial;            // per l
  std::vector<double> state_mass;               // C
  std::vector<double> cat_counts;               // K x C
  std::vector<double> g_s1, g_s2;               // shifted first/second moments, C
  double shift = 0.0;
  double log_likelihood = 0.0;
  std::size_t rows = 0;
  std::size_t clamped = 0;

  static CgmmAccumulator zeros(const CgmmLayerParams& p, double shift);
  void add(const CgmmAccumulator& other);
};

void accumulate(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats,
                std::size_t begin, std::size_t end, CgmmAccumulator& acc);

struct MStepReport {
  std::vector<std::size_t> degenerate_states;
};

CgmmLayerParams m_step(const CgmmLayerParams& prev, const CgmmAccumulator& acc, MStepReport* report = nullptr);

struct LayerTrainConfig {
  std::size_t num_states = 2;
  int epochs = 10;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;  // 0: default batch
  std::size_t workers = 1;
  GaussianInit ginit = GaussianInit::kKMeans;
};

struct LayerTrainReport {
  std::vector<double> log_likelihood;  // one entry per executed EM iteration
  std::vector<std::size_t> degenerate_states;
  std::size_t clamped = 0;
  int epochs_run = 0;
};

/// Full-pass sufficient statistics, reduced in fixed batch order.
CgmmAccumulator accumulate_all(const CgmmLayerParams& p, std::span<const double> features,
                               const LayerStatistics* stats, std::size_t batch_size, std::size_t workers);

/// Exact EM from `init`. The first iteration's change is |LL|, so an infinite
/// threshold runs exactly one iteration.
CgmmLayerParams train_layer(CgmmLayerParams init, std::span<const double> features, const LayerStatistics* stats,
                            const LayerTrainConfig& cfg, LayerTrainReport* report = nullptr);

/// init_layer + train_layer.
CgmmLayerParams train_layer(const LayerShape& shape, std::span<const double> features, const LayerStatistics* stats,
                            const LayerTrainConfig& cfg, LayerTrainReport* report = nullptr);

double layer_log_likelihood(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats,
                            std::size_t workers = 1);

FrozenPosterior infer_layer(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats,
                            PosteriorMode mode, int layer_index, std::size_t workers = 1);

void save_layer(const CgmmLayerParams& p, const std::string& path);
CgmmLayerParams load_layer(const std::string& path);
std::string layer_to_json(const CgmmLayerParams& p);

}  // namespace dbgn
