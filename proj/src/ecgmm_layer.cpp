#include "dbgn/ecgmm_layer.hpp"

#include "dbgn/errors.hpp"
#include "dbgn/numeric.hpp"

namespace dbgn {

std::vector<double> arc_feature_vector(const Dataset& d, bool dummy_arc_feature) {
  if (d.has_arc_features) return d.arc_features();
  if (!dummy_arc_feature) {
    throw ConfigError("E-CGMM needs arc features; enable the constant dummy arc feature to run without them");
  }
  return std::vector<double>(d.total_arcs(), 0.0);
}

LayerStatistics edge_statistics(const Dataset& d, const FrozenPosterior& vertex) {
  if (vertex.rows() != d.total_vertices()) throw ConfigError("vertex posterior row count differs from dataset");
  LayerStatistics s;
  s.num_rows = d.total_arcs();
  s.num_labels = 2;
  s.layers = {vertex.layer};
  s.widths = {vertex.width};
  const std::size_t w = vertex.width;
  std::vector<double> macro(s.num_rows * 2 * w, 0.0);
  std::vector<double> count(s.num_rows * 2, 1.0);
  const auto voff = d.vertex_offsets();
  std::size_t e = 0;
  for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
    for (const Arc& arc : d.graphs[gi].arcs) {
      const auto qs = vertex.row(voff[gi] + arc.src);
      const auto qd = vertex.row(voff[gi] + arc.dst);
      std::copy(qs.begin(), qs.end(), macro.begin() + static_cast<std::ptrdiff_t>((e * 2 + 0) * w));
      std::copy(qd.begin(), qd.end(), macro.begin() + static_cast<std::ptrdiff_t>((e * 2 + 1) * w));
      ++e;
    }
  }
  s.macro.push_back(std::move(macro));
  s.count.push_back(std::move(count));
  return s;
}

LayerStatistics dynamic_statistics(const Dataset& d, const FrozenPosterior& vertex, const FrozenPosterior& edge) {
  if (vertex.rows() != d.total_vertices()) throw ConfigError("vertex posterior row count differs from dataset");
  if (edge.rows() != d.total_arcs()) throw ConfigError("edge posterior row count differs from dataset");
  const std::size_t ce = edge.width;
  const std::size_t w = vertex.width;
  LayerStatistics s;
  s.num_rows = d.total_vertices();
  s.num_labels = ce;
  s.layers = {vertex.layer};
  s.widths = {w};
  std::vector<double> macro(s.num_rows * ce * w, 0.0);
  std::vector<double> count(s.num_rows * ce, 0.0);
  const auto voff = d.vertex_offsets();
  const auto aoff = d.arc_offsets();
  std::vector<double> scratch;

  for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
    const Graph& g = d.graphs[gi];
    const NeighborIndex idx = build_neighbor_index(g, d.edge_alphabet);
    for (VertexId u = 0; u < g.num_vertices; ++u) {
      std::vector<std::pair<VertexId, std::size_t>> in;  // (source, global arc)
      for (std::size_t lab = 0; lab < d.edge_alphabet; ++lab) {
        const auto nbrs = idx.in_neighbors(u, static_cast<EdgeLabel>(lab));
        const auto arcs = idx.in_arcs(u, static_cast<EdgeLabel>(lab));
        for (std::size_t k = 0; k < nbrs.size(); ++k) in.emplace_back(nbrs[k], aoff[gi] + arcs[k]);
      }
      if (in.empty()) continue;
      const std::size_t row = voff[gi] + u;
      for (std::size_t a = 0; a < ce; ++a) {
        scratch.clear();
        for (const auto& [v, e] : in) scratch.push_back(edge.values[e * ce + a]);
        const double mass = canonical_sum(scratch);
        if (!(mass > 0.0)) continue;
        count[row * ce + a] = mass;
        double* out = macro.data() + (row * ce + a) * w;
        for (std::size_t j = 0; j < w; ++j) {
          scratch.clear();
          for (const auto& [v, e] : in) scratch.push_back(edge.values[e * ce + a] * vertex.values[(voff[gi] + v) * w + j]);
          out[j] = canonical_sum(scratch) / mass;
        }
      }
    }
  }
  s.macro.push_back(std::move(macro));
  s.count.push_back(std::move(count));
  return s;
}

namespace {

LayerTrainConfig layer_config(const EcgmmConfig& cfg, std::size_t states, std::uint64_t seed) {
  LayerTrainConfig c;
  c.num_states = states;
  c.epochs = cfg.epochs;
  c.threshold = cfg.threshold;
  c.seed = seed;
  c.batch_size = cfg.batch_size;
  c.workers = cfg.workers;
  c.ginit = cfg.ginit;
  return c;
}

}  // namespace

EcgmmLayerParams train_ecgmm_layer(const Dataset& d, std::span<const FrozenPosterior> frozen_vertex,
                                   std::span<const FrozenPosterior> frozen_edge, int layer, const EcgmmConfig& cfg,
                                   EcgmmLayerReport* report) {
  if (cfg.vertex_states == 0 || cfg.edge_states == 0) throw ConfigError("E-CGMM needs C_V, C_E >= 1");
  if (layer > 0 && (frozen_vertex.size() < static_cast<std::size_t>(layer) ||
                    frozen_edge.size() < static_cast<std::size_t>(layer))) {
    throw ConfigError("missing frozen posteriors of layer " + std::to_string(layer - 1));
  }
  const std::vector<double> arc_x = arc_feature_vector(d, cfg.dummy_arc_feature);
  const std::vector<double> vx = d.vertex_features();
  if (arc_x.empty()) throw ConfigError("E-CGMM on a dataset without arcs");

  EcgmmLayerParams p;
  const std::uint64_t vseed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(layer)});
  const std::uint64_t eseed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(layer), 1});

  // Edge component.
  std::optional<LayerStatistics> estats;
  if (layer > 0) estats = edge_statistics(d, frozen_vertex[layer - 1]);
  const LayerStatistics* es = estats ? &*estats : nullptr;
  const LayerShape eshape = layer_shape(cfg.edge_states, es, FeatureKind::kContinuous, 0);
  CgmmLayerParams einit = init_layer(eshape, arc_x, eseed, cfg.ginit);
  einit.component = LayerComponent::kEcgmmEdge;
  einit.learn_sp_edge = !d.undirected();
  p.edge = train_layer(std::move(einit), arc_x, es, layer_config(cfg, cfg.edge_states, eseed),
                       report ? &report->edge : nullptr);

  // Vertex component.
  std::optional<LayerStatistics> vstats;
  if (layer > 0) vstats = dynamic_statistics(d, frozen_vertex[layer - 1], frozen_edge[layer - 1]);
  const LayerStatistics* vs = vstats ? &*vstats : nullptr;
  const LayerShape vshape = layer_shape(cfg.vertex_states, vs, d.feature_kind, d.vertex_alphabet);
  CgmmLayerParams vinit = init_layer(vshape, vx, vseed, cfg.ginit);
  vinit.component = LayerComponent::kEcgmmVertex;
  p.vertex = train_layer(std::move(vinit), vx, vs, layer_config(cfg, cfg.vertex_states, vseed),
                         report ? &report->vertex : nullptr);
  return p;
}

FrozenPosterior infer_edge_posteriors(const Dataset& d, const EcgmmLayerParams& p, const FrozenPosterior* prev_vertex,
                                      PosteriorMode mode, int layer, bool dummy_arc_feature, std::size_t workers) {
  const std::vector<double> arc_x = arc_feature_vector(d, dummy_arc_feature);
  std::optional<LayerStatistics> estats;
  if (!p.edge.is_mixture()) {
    if (prev_vertex == nullptr) throw ConfigError("edge inference needs the previous vertex posteriors");
    estats = edge_statistics(d, *prev_vertex);
  }
  return infer_layer(p.edge, arc_x, estats ? &*estats : nullptr, mode, layer, workers);
}

FrozenPosterior infer_ecgmm_vertices(const Dataset& d, const EcgmmLayerParams& p, const FrozenPosterior* prev_vertex,
                                     const FrozenPosterior* prev_edge, PosteriorMode mode, int layer,
                                     std::size_t workers) {
  const std::vector<double> vx = d.vertex_features();
  std::optional<LayerStatistics> vstats;
  if (!p.vertex.is_mixture()) {
    if (prev_vertex == nullptr || prev_edge == nullptr) {
      throw ConfigError("vertex inference needs the previous vertex and edge posteriors");
    }
    vstats = dynamic_statistics(d, *prev_vertex, *prev_edge);
  }
  return infer_layer(p.vertex, vx, vstats ? &*vstats : nullptr, mode, layer, workers);
}

std::vector<double> edge_posterior_for_pair(const CgmmLayerParams& edge, std::span<const double> q_src,
                                            std::span<const double> q_dst, std::optional<double> feature) {
  std::optional<LayerStatistics> s;
  if (!edge.is_mixture()) {
    if (q_src.size() != edge.widths[0] || q_dst.size() != edge.widths[0]) {
      throw ConfigError("endpoint posterior width differs from the edge component");
    }
    LayerStatistics st;
    st.num_rows = 1;
    st.num_labels = 2;
    st.layers = edge.layers;
    st.widths = edge.widths;
    std::vector<double> macro(q_src.begin(), q_src.end());
    macro.insert(macro.end(), q_dst.begin(), q_dst.end());
    st.macro.push_back(std::move(macro));
    st.count.push_back({1.0, 1.0});
    s = std::move(st);
  }
  if (!feature) {
    return s ? aggregate_prior(edge, *s, 0) : edge.prior;
  }
  const double x = *feature;
  const PosteriorTensor t = e_step(edge, std::span<const double>(&x, 1), s ? &*s : nullptr, 0, 1);
  return t.z_i;
}

}  // namespace dbgn
