#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dbgn {

using VertexId = std::uint32_t;
using EdgeLabel = std::uint32_t;

enum class FeatureKind { kDiscrete, kContinuous };

enum class Task { kGraphClassification, kVertexClassification, kGraphRegression, kLinkPrediction };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

/// One oriented arc. `feature` is only meaningful when the owning dataset
/// carries arc features.
struct Arc {
  VertexId src = 0;
  VertexId dst = 0;
  EdgeLabel label = 0;
  double feature = 0.0;

  friend bool operator==(const Arc&, const Arc&) = default;
};

/// Directed attributed multigraph with one scalar feature per vertex.
///
/// `edges` holds unordered edges and only exists between ingestion and
/// to_directed(); every model routine expects it to be empty.
///
/// Bottom augmentation does not materialise the virtual source vertex:
/// `bottom_in[u]` counts the dummy in-arcs of u, all carrying label
/// `bottom_label`.
struct Graph {
  std::size_t num_vertices = 0;
  std::vector<Arc> arcs;
  std::vector<Arc> edges;
  std::vector<double> x;  // discrete ids stored as integral doubles
  std::optional<double> target;
  std::vector<int> vertex_targets;
  std::vector<std::uint32_t> bottom_in;
  std::optional<EdgeLabel> bottom_label;

  std::size_t num_arcs() const { return arcs.size(); }
  bool has_bottom() const { return bottom_label.has_value(); }
  std::vector<std::size_t> in_degrees() const;
  /// True when the arc multiset (ignoring features) is closed under reversal.
  bool is_symmetric() const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

struct Dataset {
  std::vector<Graph> graphs;
  FeatureKind feature_kind = FeatureKind::kDiscrete;
  std::size_t vertex_alphabet = 1;  // K, 0 when continuous
  std::size_t edge_alphabet = 1;    // |A|, includes the bottom label when augmented
  bool has_arc_features = false;
  Task task = Task::kGraphClassification;
  std::size_t num_classes = 0;

  std::size_t size() const { return graphs.size(); }
  std::size_t total_vertices() const;
  std::size_t total_arcs() const;
  /// Prefix sums of vertex counts: vertex u of graph g has global id offsets[g] + u.
  std::vector<std::size_t> vertex_offsets() const;
  std::vector<std::size_t> arc_offsets() const;
  /// All vertex features flattened in global order.
  std::vector<double> vertex_features() const;
  /// All arc features flattened in global arc order.
  std::vector<double> arc_features() const;
  std::vector<int> graph_labels() const;
  bool bottom_augmented() const;
  bool undirected() const;

  /// New dataset holding the listed graphs (same alphabets).
  Dataset subset(std::span<const std::size_t> indices) const;

  /// Throws DataError when an invariant is broken.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Per-vertex, per-label in-neighbour lists (CSR layout).
///
/// Entries of N_u^a are sorted by (source vertex, arc index). Dummy bottom
/// arcs are not listed; `bottom_count(u)` reports them.
struct NeighborIndex {
  std::size_t num_vertices = 0;
  std::size_t num_labels = 0;
  std::vector<std::size_t> offsets;     // (num_vertices * num_labels) + 1
  std::vector<VertexId> neighbors;      // sources
  std::vector<std::size_t> arc_ids;     // index into Graph::arcs
  std::vector<std::size_t> degree;      // real in-degree
  std::vector<std::uint32_t> bottom;    // dummy in-arcs per vertex
  std::size_t deg_max = 0;

  std::span<const VertexId> in_neighbors(VertexId u, EdgeLabel a) const {
    const std::size_t k = u * num_labels + a;
    return {neighbors.data() + offsets[k], offsets[k + 1] - offsets[k]};
  }
  std::span<const std::size_t> in_arcs(VertexId u, EdgeLabel a) const {
    const std::size_t k = u * num_labels + a;
    return {arc_ids.data() + offsets[k], offsets[k + 1] - offsets[k]};
  }
  std::size_t count(VertexId u, EdgeLabel a) const {
    const std::size_t k = u * num_labels + a;
    return offsets[k + 1] - offsets[k];
  }
};

/// `num_labels` defaults to max label + 1 when zero.
NeighborIndex build_neighbor_index(const Graph& g, std::size_t num_labels = 0);

/// Replaces every unordered edge {u,v} by arcs (u,v) and (v,u).
Graph to_directed(const Graph& g);
Dataset to_directed(const Dataset& d);

/// Gives each vertex deg_max(g) - deg(u) dummy in-arcs carrying `bottom_label`.
Graph augment_bottom(const Graph& g, EdgeLabel bottom_label);
/// Applies augment_bottom to every graph with a fresh label |A| and bumps |A|.
Dataset augment_bottom(const Dataset& d);

/// Replaces vertex features by the continuous in-degree. Refuses when the
/// discrete alphabet is informative (K > 1) unless `force`.
Dataset add_degree_feature(const Dataset& d, bool force = false);

struct TuOptions {
  bool allow_truncate_attributes = false;
  bool prefer_attributes = false;  // use node_attributes even if labels exist
};

/// Reads the TU-Dortmund benchmark layout `{root}/{name}_*.txt`.
Dataset load_tu_dataset(const std::string& root, const std::string& name, const TuOptions& opts = {});

/// Line-delimited JSON: a header object, then one graph object per line.
void write_graph_lines(const Dataset& d, const std::string& path);
Dataset read_graph_lines(const std::string& path);

}  // namespace dbgn
