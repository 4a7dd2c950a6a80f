#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dbgn/cgmm_layer.hpp"

namespace dbgn {

/// One E-CGMM layer: a vertex component whose label axis holds the C_E edge
/// states of the previous layer, and an edge component over arc features.
struct EcgmmLayerParams {
  CgmmLayerParams vertex;
  CgmmLayerParams edge;

  std::size_t vertex_states() const { return vertex.num_states; }
  std::size_t edge_states() const { return edge.num_states; }

  friend bool operator==(const EcgmmLayerParams&, const EcgmmLayerParams&) = default;
};

struct EcgmmConfig {
  std::size_t vertex_states = 2;
  std::size_t edge_states = 2;
  int epochs = 10;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  std::size_t workers = 1;
  GaussianInit ginit = GaussianInit::kKMeans;
  /// Use a constant arc feature when the dataset carries none.
  bool dummy_arc_feature = false;
};

struct EcgmmLayerReport {
  LayerTrainReport vertex;
  LayerTrainReport edge;
};

/// Arc features in global arc order (constant zeros with the dummy flag).
std::vector<double> arc_feature_vector(const Dataset& d, bool dummy_arc_feature);

/// Endpoint context of every arc: label 0 (A_s) carries the source's frozen
/// posterior, label 1 (A_d) the destination's. Rows are global arc ids.
LayerStatistics edge_statistics(const Dataset& d, const FrozenPosterior& vertex);

/// Pseudo-label a of vertex u groups its in-arcs v->u with weight
/// q_vu(a) / sum over in-arcs of q(a). `count` stores the raw edge mass.
LayerStatistics dynamic_statistics(const Dataset& d, const FrozenPosterior& vertex, const FrozenPosterior& edge);

/// `frozen_vertex[k]` / `frozen_edge[k]` are the posteriors of layer k < layer.
EcgmmLayerParams train_ecgmm_layer(const Dataset& d, std::span<const FrozenPosterior> frozen_vertex,
                                   std::span<const FrozenPosterior> frozen_edge, int layer, const EcgmmConfig& cfg,
                                   EcgmmLayerReport* report = nullptr);

/// Arc posteriors (width C_E). `prev_vertex` is null at layer 0.
FrozenPosterior infer_edge_posteriors(const Dataset& d, const EcgmmLayerParams& p, const FrozenPosterior* prev_vertex,
                                      PosteriorMode mode, int layer, bool dummy_arc_feature, std::size_t workers = 1);

FrozenPosterior infer_ecgmm_vertices(const Dataset& d, const EcgmmLayerParams& p, const FrozenPosterior* prev_vertex,
                                     const FrozenPosterior* prev_edge, PosteriorMode mode, int layer,
                                     std::size_t workers = 1);

/// Posterior of a single (possibly absent) arc src -> dst from the endpoint
/// states of the previous layer. Without a feature the emission term drops out.
std::vector<double> edge_posterior_for_pair(const CgmmLayerParams& edge, std::span<const double> q_src,
                                            std::span<const double> q_dst, std::optional<double> feature);

}  // namespace dbgn
