#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dbgn/stack.hpp"

namespace dbgn {

enum class EmbeddingKind { kUnigram, kBigram, kUnibigram };
enum class Aggregation { kSum, kMean };

std::string to_string(EmbeddingKind k);
std::string to_string(Aggregation a);
EmbeddingKind embedding_kind_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);

/// Block width of one layer with C states.
std::size_t block_width(EmbeddingKind kind, std::size_t c);

/// Row-major matrix of embeddings with per-layer block widths.
struct EmbeddingSet {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<std::size_t> vertex_blocks;  // per layer
  std::vector<std::size_t> edge_blocks;    // per layer, E-CGMM graph embeddings only
  EmbeddingKind kind = EmbeddingKind::kUnigram;
  Aggregation aggregation = Aggregation::kSum;
  std::string metadata;                    // JSON object describing the producer

  std::span<const double> row(std::size_t r) const { return {values.data() + r * width, width}; }
  /// Keeps the first `layers` layers' blocks.
  EmbeddingSet truncated(int layers) const;

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

/// Per-vertex embeddings of graph `gi` (rows = its vertices). `vertex_offset`
/// is the global id of its vertex 0 in `layers`.
EmbeddingSet build_vertex_embeddings(std::span<const FrozenPosterior> layers, const Graph& g, std::size_t vertex_offset,
                                     std::size_t num_labels, EmbeddingKind kind, bool out_neighbors = false);

/// Per-vertex embeddings of a whole dataset, graphs concatenated.
EmbeddingSet build_dataset_vertex_embeddings(const Dataset& d, std::span<const FrozenPosterior> layers,
                                             EmbeddingKind kind, bool out_neighbors = false);

/// Aggregates a vertex embedding matrix into one row. Throws DataError on
/// an empty graph.
std::vector<double> aggregate_rows(const EmbeddingSet& vertices, Aggregation agg);

/// One row per graph: aggregated vertex blocks across layers, followed by
/// aggregated arc-posterior blocks when `edges` is non-empty.
EmbeddingSet build_graph_embeddings(const Dataset& d, const StackPosteriors& post, EmbeddingKind kind,
                                    Aggregation agg, bool out_neighbors = false);

/// Structure-agnostic baseline: aggregated one-hot vertex labels (or the raw
/// continuous feature) per graph.
EmbeddingSet bag_of_features(const Dataset& d, Aggregation agg);

/// Link embedding of the pair (u, v) of graph `gi`: per layer the mean of
/// q_uv and q_vu. Without edge posteriors (CGMM) the mean of the endpoint
/// vertex posteriors. Absent arcs are inferred from the endpoint states.
std::vector<double> edge_link_embedding(const TrainedStack& s, const Dataset& d, const StackPosteriors& post,
                                        std::size_t gi, VertexId u, VertexId v);

void export_csv(const EmbeddingSet& e, const std::string& path);
EmbeddingSet import_csv(const std::string& path);
void export_binary(const EmbeddingSet& e, const std::string& path);
EmbeddingSet import_binary(const std::string& path);
/// Sidecar `path + ".json"` with dims, blocks and the producer metadata.
void write_metadata(const EmbeddingSet& e, const std::string& path);
/// Checks `e` against a sidecar; throws DataError on a dimension mismatch.
void check_metadata(const EmbeddingSet& e, const std::string& path);

}  // namespace dbgn
