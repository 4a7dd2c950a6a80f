#include "dbgn/graph.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "dbgn/errors.hpp"

namespace dbgn {

std::string to_string(Task t) {
  switch (t) {
    case Task::kGraphClassification: return "graph-classification";
    case Task::kVertexClassification: return "vertex-classification";
    case Task::kGraphRegression: return "graph-regression";
    case Task::kLinkPrediction: return "link-prediction";
  }
  return "graph-classification";
}

Task task_from_string(const std::string& s) {
  if (s == "graph-classification") return Task::kGraphClassification;
  if (s == "vertex-classification") return Task::kVertexClassification;
  if (s == "graph-regression") return Task::kGraphRegression;
  if (s == "link-prediction") return Task::kLinkPrediction;
  throw ConfigError("unknown task: " + s);
}

std::vector<std::size_t> Graph::in_degrees() const {
  std::vector<std::size_t> deg(num_vertices, 0);
  for (const Arc& a : arcs) ++deg[a.dst];
  return deg;
}

bool Graph::is_symmetric() const {
  using Key = std::tuple<VertexId, VertexId, EdgeLabel>;
  std::vector<Key> fwd, rev;
  fwd.reserve(arcs.size());
  rev.reserve(arcs.size());
  for (const Arc& a : arcs) {
    fwd.emplace_back(a.src, a.dst, a.label);
    rev.emplace_back(a.dst, a.src, a.label);
  }
  std::sort(fwd.begin(), fwd.end());
  std::sort(rev.begin(), rev.end());
  return fwd == rev;
}

std::size_t Dataset::total_vertices() const {
  std::size_t n = 0;
  for (const auto& g : graphs) n += g.num_vertices;
  return n;
}

std::size_t Dataset::total_arcs() const {
  std::size_t n = 0;
  for (const auto& g : graphs) n += g.arcs.size();
  return n;
}

std::vector<std::size_t> Dataset::vertex_offsets() const {
  std::vector<std::size_t> off(graphs.size() + 1, 0);
  for (std::size_t g = 0; g < graphs.size(); ++g) off[g + 1] = off[g] + graphs[g].num_vertices;
  return off;
}

std::vector<std::size_t> Dataset::arc_offsets() const {
  std::vector<std::size_t> off(graphs.size() + 1, 0);
  for (std::size_t g = 0; g < graphs.size(); ++g) off[g + 1] = off[g] + graphs[g].arcs.size();
  return off;
}

std::vector<double> Dataset::vertex_features() const {
  std::vector<double> out;
  out.reserve(total_vertices());
  for (const auto& g : graphs) out.insert(out.end(), g.x.begin(), g.x.end());
  return out;
}

std::vector<double> Dataset::arc_features() const {
  std::vector<double> out;
  out.reserve(total_arcs());
  for (const auto& g : graphs) {
    for (const Arc& a : g.arcs) out.push_back(a.feature);
  }
  return out;
}

std::vector<int> Dataset::graph_labels() const {
  std::vector<int> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) {
    if (!g.target) throw DataError("graph without target label");
    out.push_back(static_cast<int>(*g.target));
  }
  return out;
}

bool Dataset::bottom_augmented() const {
  return !graphs.empty() && graphs.front().has_bottom();
}

bool Dataset::undirected() const {
  return std::all_of(graphs.begin(), graphs.end(), [](const Graph& g) { return g.is_symmetric(); });
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.feature_kind = feature_kind;
  out.vertex_alphabet = vertex_alphabet;
  out.edge_alphabet = edge_alphabet;
  out.has_arc_features = has_arc_features;
  out.task = task;
  out.num_classes = num_classes;
  out.graphs.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= graphs.size()) throw ConfigError("subset index out of range");
    out.graphs.push_back(graphs[i]);
  }
  return out;
}

void Dataset::validate() const {
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    const std::string where = "graph " + std::to_string(gi) + ": ";
    if (g.x.size() != g.num_vertices) throw DataError(where + "feature count differs from vertex count");
    if (!g.edges.empty()) throw DataError(where + "unordered edges present; call to_directed first");
    for (const Arc& a : g.arcs) {
      if (a.src >= g.num_vertices || a.dst >= g.num_vertices) throw DataError(where + "arc endpoint out of range");
      if (a.label >= edge_alphabet) throw DataError(where + "edge label outside alphabet");
    }
    if (feature_kind == FeatureKind::kDiscrete) {
      for (double v : g.x) {
        if (v < 0 || v != static_cast<double>(static_cast<long long>(v)) ||
            static_cast<std::size_t>(v) >= vertex_alphabet) {
          throw DataError(where + "discrete feature outside alphabet");
        }
      }
    }
    if (g.has_bottom() && g.bottom_in.size() != g.num_vertices) throw DataError(where + "bottom counts malformed");
    if (num_classes > 0 && g.target && task != Task::kGraphRegression) {
      const double t = *g.target;
      if (t < 0 || t >= static_cast<double>(num_classes)) throw DataError(where + "class label out of range");
    }
  }
}

NeighborIndex build_neighbor_index(const Graph& g, std::size_t num_labels) {
  if (num_labels == 0) {
    for (const Arc& a : g.arcs) num_labels = std::max<std::size_t>(num_labels, a.label + 1);
    num_labels = std::max<std::size_t>(num_labels, 1);
  }
  NeighborIndex idx;
  idx.num_vertices = g.num_vertices;
  idx.num_labels = num_labels;
  const std::size_t slots = g.num_vertices * num_labels;
  std::vector<std::size_t> counts(slots, 0);
  for (const Arc& a : g.arcs) {
    if (a.label >= num_labels) throw DataError("arc label exceeds neighbour index label count");
    ++counts[a.dst * num_labels + a.label];
  }
  idx.offsets.assign(slots + 1, 0);
  for (std::size_t k = 0; k < slots; ++k) idx.offsets[k + 1] = idx.offsets[k] + counts[k];

  std::vector<std::size_t> order(g.arcs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    const Arc& a = g.arcs[l];
    const Arc& b = g.arcs[r];
    return std::tie(a.dst, a.label, a.src, l) < std::tie(b.dst, b.label, b.src, r);
  });
  idx.neighbors.resize(g.arcs.size());
  idx.arc_ids.resize(g.arcs.size());
  for (std::size_t p = 0; p < order.size(); ++p) {
    idx.neighbors[p] = g.arcs[order[p]].src;
    idx.arc_ids[p] = order[p];
  }
  idx.degree = g.in_degrees();
  idx.bottom = g.has_bottom() ? g.bottom_in : std::vector<std::uint32_t>(g.num_vertices, 0);
  idx.deg_max = idx.degree.empty() ? 0 : *std::max_element(idx.degree.begin(), idx.degree.end());
  return idx;
}

Graph to_directed(const Graph& g) {
  Graph out = g;
  out.edges.clear();
  for (const Arc& e : g.edges) {
    out.arcs.push_back(Arc{e.src, e.dst, e.label, e.feature});
    if (e.src != e.dst) out.arcs.push_back(Arc{e.dst, e.src, e.label, e.feature});
  }
  return out;
}

Dataset to_directed(const Dataset& d) {
  Dataset out = d;
  for (auto& g : out.graphs) g = to_directed(g);
  return out;
}

Graph augment_bottom(const Graph& g, EdgeLabel bottom_label) {
  Graph out = g;
  const auto deg = g.in_degrees();
  const std::size_t deg_max = deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
  out.bottom_in.assign(g.num_vertices, 0);
  for (std::size_t u = 0; u < g.num_vertices; ++u) {
    out.bottom_in[u] = static_cast<std::uint32_t>(deg_max - deg[u]);
  }
  out.bottom_label = bottom_label;
  return out;
}

Dataset augment_bottom(const Dataset& d) {
  if (d.bottom_augmented()) throw ConfigError("dataset already bottom-augmented");
  Dataset out = d;
  const auto label = static_cast<EdgeLabel>(d.edge_alphabet);
  for (auto& g : out.graphs) g = augment_bottom(g, label);
  out.edge_alphabet = d.edge_alphabet + 1;
  return out;
}

Dataset add_degree_feature(const Dataset& d, bool force) {
  if (d.feature_kind == FeatureKind::kDiscrete && d.vertex_alphabet > 1 && !force) {
    throw ConfigError("dataset already has informative discrete vertex features (K=" +
                      std::to_string(d.vertex_alphabet) + "); pass force to override");
  }
  Dataset out = d;
  for (auto& g : out.graphs) {
    const auto deg = g.in_degrees();
    for (std::size_t u = 0; u < g.num_vertices; ++u) g.x[u] = static_cast<double>(deg[u]);
  }
  out.feature_kind = FeatureKind::kContinuous;
  out.vertex_alphabet = 0;
  return out;
}

}  // namespace dbgn
