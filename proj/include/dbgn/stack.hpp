#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dbgn/cgmm_layer.hpp"
#include "dbgn/ecgmm_layer.hpp"
#include "dbgn/icgmm_layer.hpp"

namespace dbgn {

enum class ModelKind { kCgmm, kEcgmm, kIcgmm, kIcgmmFast };

std::string to_string(ModelKind m);
ModelKind model_from_string(const std::string& s);

struct StackConfig {
  ModelKind model = ModelKind::kCgmm;
  int layers = 1;
  std::size_t states = 10;       // C (C_V for E-CGMM)
  std::size_t edge_states = 2;   // C_E
  bool full_history = false;     // layer subset {0..l-1} instead of {l-1}
  PosteriorMode mode = PosteriorMode::kContinuous;
  int epochs = 10;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t batch_size = 0;
  GaussianInit ginit = GaussianInit::kKMeans;
  bool dummy_arc_feature = false;
  IcgmmConfig icgmm;             // sweeps, priors, concentrations
};

/// Frozen posteriors of every layer for one dataset.
struct StackPosteriors {
  std::vector<FrozenPosterior> vertex;
  std::vector<FrozenPosterior> edge;  // E-CGMM only

  int num_layers() const { return static_cast<int>(vertex.size()); }
};

struct LayerDiagnostics {
  std::vector<double> log_likelihood;       // CGMM / E-CGMM vertex component
  std::vector<double> edge_log_likelihood;  // E-CGMM edge component
  std::vector<std::size_t> c_trajectory;    // iCGMM
  std::vector<double> alpha0_trajectory;
  std::vector<double> gamma_trajectory;
  std::vector<double> sweep_seconds;
};

/// A trained, frozen stack together with the posteriors of its training data.
struct TrainedStack {
  StackConfig config;
  std::vector<CgmmLayerParams> cgmm;
  std::vector<EcgmmLayerParams> ecgmm;
  std::vector<HdpState> icgmm;
  StackPosteriors train;
  std::vector<LayerDiagnostics> diagnostics;

  int num_layers() const { return train.num_layers(); }
  /// Widths of the vertex posteriors per layer.
  std::vector<std::size_t> layer_widths() const;
  /// The first `layers` layers; identical to training that many layers.
  TrainedStack truncated(int layers) const;
};

/// Layer subset of layer l.
std::vector<int> layer_subset(int layer, bool full_history);

/// Incremental layer-wise training. With a non-empty `checkpoint_dir` every
/// finished layer is stored there, and layers already present are reloaded
/// instead of retrained.
TrainedStack train_stack(const Dataset& d, const StackConfig& cfg, const std::string& checkpoint_dir = "");

/// Frozen posteriors of unseen data through the first `layers` layers (all when < 0).
StackPosteriors infer_stack(const TrainedStack& s, const Dataset& d, int layers = -1);

}  // namespace dbgn
