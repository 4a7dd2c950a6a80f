#include "dbgn/statistics.hpp"

#include <cmath>

#include "dbgn/binary_io.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/numeric.hpp"

namespace dbgn {
namespace {

constexpr std::uint32_t kPosteriorVersion = 1;
constexpr std::uint32_t kStatisticsVersion = 1;

}  // namespace

void FrozenPosterior::validate() const {
  if (width == 0) throw ConfigError("frozen posterior with zero width");
  if (values.size() % width != 0) throw ConfigError("frozen posterior size is not a multiple of its width");
  for (std::size_t r = 0; r < rows(); ++r) {
    double s = 0.0;
    int ones = 0;
    for (double v : row(r)) {
      if (!(v >= 0.0)) throw ConfigError("negative or NaN posterior entry in row " + std::to_string(r));
      s += v;
      if (v == 1.0) ++ones;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("posterior row " + std::to_string(r) + " does not sum to 1");
    if (mode == PosteriorMode::kOneHot && ones != 1) {
      throw ConfigError("one-hot posterior row " + std::to_string(r) + " is not one-hot");
    }
  }
}

FrozenPosterior FrozenPosterior::one_hot() const {
  FrozenPosterior out = *this;
  out.mode = PosteriorMode::kOneHot;
  for (std::size_t r = 0; r < rows(); ++r) {
    const std::size_t best = argmax_lowest(row(r));
    auto dst = out.row(r);
    for (std::size_t i = 0; i < width; ++i) dst[i] = i == best ? 1.0 : 0.0;
  }
  return out;
}

FrozenPosterior FrozenPosterior::slice(std::size_t begin, std::size_t end) const {
  FrozenPosterior out;
  out.layer = layer;
  out.width = width;
  out.mode = mode;
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * width),
                    values.begin() + static_cast<std::ptrdiff_t>(end * width));
  return out;
}

void save_posterior(const FrozenPosterior& p, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("DBGNPOST");
  w.u32(kPosteriorVersion);
  w.u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(p.layer)));
  w.u64(p.width);
  w.u32(p.mode == PosteriorMode::kOneHot ? 1 : 0);
  w.u64(p.rows());
  w.f64s(p.values);
  w.close();
}

FrozenPosterior load_posterior(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("DBGNPOST");
  r.expect_version(kPosteriorVersion);
  FrozenPosterior p;
  p.layer = static_cast<int>(static_cast<std::int64_t>(r.u64()));
  p.width = r.u64();
  p.mode = r.u32() == 1 ? PosteriorMode::kOneHot : PosteriorMode::kContinuous;
  const auto rows = r.u64();
  p.values = r.f64s(rows * p.width);
  return p;
}

LayerStatistics compute_statistics(const Dataset& d, std::span<const FrozenPosterior> frozen,
                                   std::span<const int> layer_subset) {
  LayerStatistics s;
  s.num_rows = d.total_vertices();
  s.num_labels = d.edge_alphabet;
  const bool bottom = d.bottom_augmented();
  const auto offsets = d.vertex_offsets();

  for (int layer : layer_subset) {
    if (layer < 0 || static_cast<std::size_t>(layer) >= frozen.size() || frozen[layer].layer != layer) {
      throw ConfigError("missing frozen posterior for layer " + std::to_string(layer));
    }
    if (frozen[layer].rows() != s.num_rows) {
      throw ConfigError("frozen posterior of layer " + std::to_string(layer) + " has wrong row count");
    }
    s.layers.push_back(layer);
    s.widths.push_back(frozen[layer].width + (bottom ? 1 : 0));
  }

  std::vector<double> scratch;
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    const FrozenPosterior& q = frozen[s.layers[l]];
    const std::size_t w = s.widths[l];
    const std::size_t c = q.width;
    std::vector<double> macro(s.num_rows * s.num_labels * w, 0.0);
    std::vector<double> count(s.num_rows * s.num_labels, 0.0);

    for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
      const Graph& g = d.graphs[gi];
      const NeighborIndex idx = build_neighbor_index(g, s.num_labels);
      const std::size_t base = offsets[gi];
      for (VertexId u = 0; u < g.num_vertices; ++u) {
        const std::size_t row = base + u;
        for (std::size_t a = 0; a < s.num_labels; ++a) {
          const auto nbrs = idx.in_neighbors(u, static_cast<EdgeLabel>(a));
          const std::size_t n = nbrs.size();
          if (n == 0) continue;
          count[row * s.num_labels + a] = static_cast<double>(n);
          double* out = macro.data() + (row * s.num_labels + a) * w;
          for (std::size_t j = 0; j < c; ++j) {
            scratch.clear();
            for (VertexId v : nbrs) scratch.push_back(q.values[(base + v) * c + j]);
            out[j] = canonical_sum(scratch) / static_cast<double>(n);
          }
        }
        if (bottom && idx.bottom[u] > 0) {
          const std::size_t a = *g.bottom_label;
          count[row * s.num_labels + a] += static_cast<double>(idx.bottom[u]);
          double* out = macro.data() + (row * s.num_labels + a) * w;
          out[c] = 1.0;
        }
      }
    }
    s.macro.push_back(std::move(macro));
    s.count.push_back(std::move(count));
  }
  return s;
}

void save_statistics(const LayerStatistics& s, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("DBGNSTAT");
  w.u32(kStatisticsVersion);
  w.u64(s.num_rows);
  w.u64(s.layers.size());
  w.u64(s.num_labels);
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    w.u64(static_cast<std::uint64_t>(s.layers[l]));
    w.u64(s.widths[l]);
  }
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    w.f64s(s.macro[l]);
    w.f64s(s.count[l]);
  }
  w.close();
}

LayerStatistics load_statistics(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("DBGNSTAT");
  r.expect_version(kStatisticsVersion);
  LayerStatistics s;
  s.num_rows = r.u64();
  const auto nl = r.u64();
  s.num_labels = r.u64();
  if (nl > 4096) throw IoError("implausible layer count in " + path);
  for (std::uint64_t l = 0; l < nl; ++l) {
    s.layers.push_back(static_cast<int>(r.u64()));
    s.widths.push_back(r.u64());
  }
  for (std::uint64_t l = 0; l < nl; ++l) {
    s.macro.push_back(r.f64s(s.num_rows * s.num_labels * s.widths[l]));
    s.count.push_back(r.f64s(s.num_rows * s.num_labels));
  }
  return s;
}

}  // namespace dbgn
