#include "dbgn/embeddings.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dbgn/binary_io.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/numeric.hpp"
#include "json.hpp"

namespace dbgn {
namespace {

constexpr std::uint32_t kEmbeddingVersion = 1;

std::vector<std::vector<VertexId>> neighbour_lists(const Graph& g, std::size_t num_labels, bool out_neighbors) {
  std::vector<std::vector<VertexId>> out(g.num_vertices);
  if (out_neighbors) {
    for (const Arc& a : g.arcs) out[a.src].push_back(a.dst);
    for (auto& l : out) std::sort(l.begin(), l.end());
    return out;
  }
  const NeighborIndex idx = build_neighbor_index(g, num_labels);
  for (VertexId u = 0; u < g.num_vertices; ++u) {
    for (std::size_t a = 0; a < idx.num_labels; ++a) {
      const auto nb = idx.in_neighbors(u, static_cast<EdgeLabel>(a));
      out[u].insert(out[u].end(), nb.begin(), nb.end());
    }
  }
  return out;
}

// Column-wise canonical sum over rows [begin, end) of a row-major matrix.
void aggregate_block(const double* data, std::size_t stride, std::size_t begin, std::size_t end, std::size_t width,
                     Aggregation agg, double* out) {
  std::vector<double> scratch;
  const std::size_t n = end - begin;
  for (std::size_t k = 0; k < width; ++k) {
    scratch.clear();
    for (std::size_t r = begin; r < end; ++r) scratch.push_back(data[r * stride + k]);
    const double s = canonical_sum(scratch);
    out[k] = agg == Aggregation::kMean ? (n == 0 ? 0.0 : s / static_cast<double>(n)) : s;
  }
}

nlohmann::json base_metadata(const EmbeddingSet& e) {
  return {{"rows", e.rows},
          {"width", e.width},
          {"kind", to_string(e.kind)},
          {"aggregation", to_string(e.aggregation)},
          {"vertex_blocks", e.vertex_blocks},
          {"edge_blocks", e.edge_blocks}};
}

}  // namespace

std::string to_string(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::kUnigram: return "unigram";
    case EmbeddingKind::kBigram: return "bigram";
    case EmbeddingKind::kUnibigram: return "unibigram";
  }
  return "?";
}

std::string to_string(Aggregation a) { return a == Aggregation::kSum ? "sum" : "mean"; }

EmbeddingKind embedding_kind_from_string(const std::string& s) {
  if (s == "unigram") return EmbeddingKind::kUnigram;
  if (s == "bigram") return EmbeddingKind::kBigram;
  if (s == "unibigram") return EmbeddingKind::kUnibigram;
  throw ConfigError("unknown embedding kind '" + s + "'");
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "sum") return Aggregation::kSum;
  if (s == "mean") return Aggregation::kMean;
  throw ConfigError("unknown aggregation '" + s + "'");
}

std::size_t block_width(EmbeddingKind kind, std::size_t c) {
  switch (kind) {
    case EmbeddingKind::kUnigram: return c;
    case EmbeddingKind::kBigram: return c * c;
    case EmbeddingKind::kUnibigram: return c + c * c;
  }
  return 0;
}

EmbeddingSet EmbeddingSet::truncated(int layers) const {
  if (layers < 0 || static_cast<std::size_t>(layers) > vertex_blocks.size()) {
    throw ConfigError("cannot truncate embeddings to " + std::to_string(layers) + " layers");
  }
  // Column ranges to keep: leading vertex blocks, then leading edge blocks.
  std::vector<std::pair<std::size_t, std::size_t>> keep;
  std::size_t pos = 0, vkeep = 0;
  for (std::size_t l = 0; l < vertex_blocks.size(); ++l) {
    if (l < static_cast<std::size_t>(layers)) vkeep += vertex_blocks[l];
    pos += vertex_blocks[l];
  }
  keep.emplace_back(0, vkeep);
  std::size_t ekeep = 0;
  for (std::size_t l = 0; l < edge_blocks.size() && l < static_cast<std::size_t>(layers); ++l) ekeep += edge_blocks[l];
  if (ekeep > 0) keep.emplace_back(pos, pos + ekeep);

  EmbeddingSet out;
  out.rows = rows;
  out.kind = kind;
  out.aggregation = aggregation;
  out.metadata = metadata;
  out.vertex_blocks.assign(vertex_blocks.begin(), vertex_blocks.begin() + layers);
  out.edge_blocks.assign(edge_blocks.begin(),
                         edge_blocks.begin() + std::min<std::ptrdiff_t>(layers, static_cast<std::ptrdiff_t>(edge_blocks.size())));
  out.width = vkeep + ekeep;
  out.values.reserve(rows * out.width);
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto& [b, e] : keep) {
      out.values.insert(out.values.end(), values.begin() + static_cast<std::ptrdiff_t>(r * width + b),
                        values.begin() + static_cast<std::ptrdiff_t>(r * width + e));
    }
  }
  return out;
}

EmbeddingSet build_vertex_embeddings(std::span<const FrozenPosterior> layers, const Graph& g, std::size_t vertex_offset,
                                     std::size_t num_labels, EmbeddingKind kind, bool out_neighbors) {
  EmbeddingSet e;
  e.rows = g.num_vertices;
  e.kind = kind;
  for (const auto& p : layers) {
    e.vertex_blocks.push_back(block_width(kind, p.width));
    e.width += e.vertex_blocks.back();
  }
  e.values.assign(e.rows * e.width, 0.0);
  const bool need_bigram = kind != EmbeddingKind::kUnigram;
  std::vector<std::vector<VertexId>> nbrs;
  if (need_bigram) nbrs = neighbour_lists(g, num_labels, out_neighbors);

  std::vector<double> scratch, nsum;
  std::size_t col = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const FrozenPosterior& p = layers[l];
    const std::size_t c = p.width;
    nsum.assign(c, 0.0);
    for (VertexId u = 0; u < g.num_vertices; ++u) {
      const auto qu = p.row(vertex_offset + u);
      double* out = e.values.data() + u * e.width + col;
      if (kind != EmbeddingKind::kBigram) {
        std::copy(qu.begin(), qu.end(), out);
        out += c;
      }
      if (!need_bigram) continue;
      for (std::size_t j = 0; j < c; ++j) {
        scratch.clear();
        for (VertexId v : nbrs[u]) scratch.push_back(p.values[(vertex_offset + v) * c + j]);
        nsum[j] = canonical_sum(scratch);
      }
      for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = qu[i] * nsum[j];
      }
    }
    col += e.vertex_blocks[l];
  }
  return e;
}

EmbeddingSet build_dataset_vertex_embeddings(const Dataset& d, std::span<const FrozenPosterior> layers,
                                             EmbeddingKind kind, bool out_neighbors) {
  EmbeddingSet all;
  const auto off = d.vertex_offsets();
  for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
    EmbeddingSet e = build_vertex_embeddings(layers, d.graphs[gi], off[gi], d.edge_alphabet, kind, out_neighbors);
    if (gi == 0) {
      all = std::move(e);
      continue;
    }
    all.rows += e.rows;
    all.values.insert(all.values.end(), e.values.begin(), e.values.end());
  }
  return all;
}

std::vector<double> aggregate_rows(const EmbeddingSet& vertices, Aggregation agg) {
  if (vertices.rows == 0) throw DataError("cannot embed an empty graph");
  std::vector<double> out(vertices.width);
  aggregate_block(vertices.values.data(), vertices.width, 0, vertices.rows, vertices.width, agg, out.data());
  return out;
}

EmbeddingSet build_graph_embeddings(const Dataset& d, const StackPosteriors& post, EmbeddingKind kind, Aggregation agg,
                                    bool out_neighbors) {
  EmbeddingSet out;
  out.rows = d.graphs.size();
  out.kind = kind;
  out.aggregation = agg;
  for (const auto& p : post.vertex) out.vertex_blocks.push_back(block_width(kind, p.width));
  for (const auto& p : post.edge) out.edge_blocks.push_back(p.width);
  for (auto w : out.vertex_blocks) out.width += w;
  for (auto w : out.edge_blocks) out.width += w;
  out.values.assign(out.rows * out.width, 0.0);

  const auto voff = d.vertex_offsets();
  const auto aoff = d.arc_offsets();
  for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
    const Graph& g = d.graphs[gi];
    if (g.num_vertices == 0) throw DataError("cannot embed empty graph " + std::to_string(gi));
    const EmbeddingSet ve = build_vertex_embeddings(post.vertex, g, voff[gi], d.edge_alphabet, kind, out_neighbors);
    double* row = out.values.data() + gi * out.width;
    aggregate_block(ve.values.data(), ve.width, 0, ve.rows, ve.width, agg, row);
    std::size_t col = ve.width;
    for (const auto& ep : post.edge) {
      aggregate_block(ep.values.data(), ep.width, aoff[gi], aoff[gi + 1], ep.width, agg, row + col);
      col += ep.width;
    }
  }
  out.metadata = base_metadata(out).dump();
  return out;
}

EmbeddingSet bag_of_features(const Dataset& d, Aggregation agg) {
  EmbeddingSet out;
  out.rows = d.graphs.size();
  out.kind = EmbeddingKind::kUnigram;
  out.aggregation = agg;
  const bool discrete = d.feature_kind == FeatureKind::kDiscrete;
  out.width = discrete ? d.vertex_alphabet : 1;
  out.vertex_blocks = {out.width};
  out.values.assign(out.rows * out.width, 0.0);
  for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
    const Graph& g = d.graphs[gi];
    if (g.num_vertices == 0) throw DataError("cannot embed empty graph " + std::to_string(gi));
    std::vector<double> onehot(g.num_vertices * out.width, 0.0);
    for (std::size_t u = 0; u < g.num_vertices; ++u) {
      if (discrete) {
        onehot[u * out.width + static_cast<std::size_t>(g.x[u])] = 1.0;
      } else {
        onehot[u] = g.x[u];
      }
    }
    aggregate_block(onehot.data(), out.width, 0, g.num_vertices, out.width, agg, out.values.data() + gi * out.width);
  }
  out.metadata = nlohmann::json{{"model", "bag-of-features"}}.dump();
  return out;
}

std::vector<double> edge_link_embedding(const TrainedStack& s, const Dataset& d, const StackPosteriors& post,
                                        std::size_t gi, VertexId u, VertexId v) {
  if (gi >= d.graphs.size()) throw ConfigError("graph index out of range");
  const Graph& g = d.graphs[gi];
  if (u >= g.num_vertices || v >= g.num_vertices) throw ConfigError("vertex out of range");
  const auto voff = d.vertex_offsets();
  std::vector<double> out;
  if (post.edge.empty()) {
    for (const auto& p : post.vertex) {
      const auto hu = p.row(voff[gi] + u);
      const auto hv = p.row(voff[gi] + v);
      for (std::size_t i = 0; i < p.width; ++i) out.push_back(0.5 * (hu[i] + hv[i]));
    }
    return out;
  }
  const auto aoff = d.arc_offsets();
  auto find_arc = [&](VertexId a, VertexId b) -> std::ptrdiff_t {
    for (std::size_t k = 0; k < g.arcs.size(); ++k) {
      if (g.arcs[k].src == a && g.arcs[k].dst == b) return static_cast<std::ptrdiff_t>(k);
    }
    return -1;
  };
  const std::ptrdiff_t uv = find_arc(u, v), vu = find_arc(v, u);
  for (std::size_t l = 0; l < post.edge.size(); ++l) {
    const FrozenPosterior& ep = post.edge[l];
    auto posterior = [&](std::ptrdiff_t arc, VertexId a, VertexId b) {
      if (arc >= 0) {
        const auto r = ep.row(aoff[gi] + static_cast<std::size_t>(arc));
        return std::vector<double>(r.begin(), r.end());
      }
      std::span<const double> qa, qb;
      if (l > 0) {
        qa = post.vertex[l - 1].row(voff[gi] + a);
        qb = post.vertex[l - 1].row(voff[gi] + b);
      }
      return edge_posterior_for_pair(s.ecgmm[l].edge, qa, qb, std::nullopt);
    };
    const auto p1 = posterior(uv, u, v);
    const auto p2 = posterior(vu, v, u);
    for (std::size_t i = 0; i < ep.width; ++i) out.push_back(0.5 * (p1[i] + p2[i]));
  }
  return out;
}

void export_csv(const EmbeddingSet& e, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw IoError("cannot open for writing: " + path);
  std::fprintf(f, "graph_id");
  for (std::size_t k = 0; k < e.width; ++k) std::fprintf(f, ",dim_%zu", k);
  std::fprintf(f, "\n");
  for (std::size_t r = 0; r < e.rows; ++r) {
    std::fprintf(f, "%zu", r);
    for (double v : e.row(r)) std::fprintf(f, ",%.17g", v);
    std::fprintf(f, "\n");
  }
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

EmbeddingSet import_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  EmbeddingSet e;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty embedding file: " + path);
  e.width = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        e.values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (n != e.width) throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(e.width) + " values");
    ++e.rows;
  }
  e.vertex_blocks = {e.width};
  return e;
}

void export_binary(const EmbeddingSet& e, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("DBGNEMB1");
  w.u32(kEmbeddingVersion);
  w.u64(e.rows);
  w.u64(e.width);
  w.u32(static_cast<std::uint32_t>(e.kind));
  w.u32(static_cast<std::uint32_t>(e.aggregation));
  w.u64(e.vertex_blocks.size());
  for (auto b : e.vertex_blocks) w.u64(b);
  w.u64(e.edge_blocks.size());
  for (auto b : e.edge_blocks) w.u64(b);
  w.str(e.metadata);
  w.f64s(e.values);
  w.close();
}

EmbeddingSet import_binary(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("DBGNEMB1");
  r.expect_version(kEmbeddingVersion);
  EmbeddingSet e;
  e.rows = r.u64();
  e.width = r.u64();
  e.kind = static_cast<EmbeddingKind>(r.u32());
  e.aggregation = static_cast<Aggregation>(r.u32());
  const auto nv = r.u64();
  if (nv > (1u << 20)) throw IoError("implausible block count in " + path);
  for (std::uint64_t k = 0; k < nv; ++k) e.vertex_blocks.push_back(r.u64());
  const auto ne = r.u64();
  if (ne > (1u << 20)) throw IoError("implausible block count in " + path);
  for (std::uint64_t k = 0; k < ne; ++k) e.edge_blocks.push_back(r.u64());
  e.metadata = r.str();
  e.values = r.f64s(e.rows * e.width);
  return e;
}

void write_metadata(const EmbeddingSet& e, const std::string& path) {
  nlohmann::json j = base_metadata(e);
  if (!e.metadata.empty()) j["producer"] = nlohmann::json::parse(e.metadata);
  std::ofstream out(path + ".json");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path + ".json");
}

void check_metadata(const EmbeddingSet& e, const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw IoError("missing metadata sidecar " + path + ".json");
  const auto j = nlohmann::json::parse(in);
  const auto width = j.at("width").get<std::size_t>();
  const auto rows = j.at("rows").get<std::size_t>();
  if (width != e.width || rows != e.rows) {
    throw DataError("embedding dimensions " + std::to_string(e.rows) + "x" + std::to_string(e.width) +
                    " differ from metadata " + std::to_string(rows) + "x" + std::to_string(width));
  }
  std::size_t blocks = 0;
  for (auto b : j.at("vertex_blocks").get<std::vector<std::size_t>>()) blocks += b;
  for (auto b : j.at("edge_blocks").get<std::vector<std::size_t>>()) blocks += b;
  if (blocks != width) throw DataError("metadata block widths do not add up to the embedding width");
}

}  // namespace dbgn
