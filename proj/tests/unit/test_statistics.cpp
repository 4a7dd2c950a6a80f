#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dbgn/errors.hpp"
#include "dbgn/statistics.hpp"
#include "synthetic.hpp"
#include "tempdir.hpp"

using namespace dbgn;
using dbgn::testing::TempDir;

namespace {

FrozenPosterior random_posterior(Rng& rng, std::size_t rows, std::size_t width, int layer = 0) {
  FrozenPosterior p;
  p.layer = layer;
  p.width = width;
  std::vector<double> alpha(width, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = sample_dirichlet(rng, alpha);
    p.values.insert(p.values.end(), row.begin(), row.end());
  }
  return p;
}

Dataset single_graph(std::size_t n, const std::vector<std::pair<VertexId, VertexId>>& arcs) {
  Dataset d;
  Graph g;
  g.num_vertices = n;
  g.x.assign(n, 0);
  for (auto [u, v] : arcs) g.arcs.push_back({u, v, 0, 0});
  d.graphs.push_back(g);
  return d;
}

}  // namespace

TEST(Statistics, SingleNeighborOneHotIsCopied) {
  const Dataset d = single_graph(2, {{0, 1}});
  FrozenPosterior q{0, 3, PosteriorMode::kOneHot, {0, 0, 1, 1, 0, 0}};
  const int layers[] = {0};
  const LayerStatistics s = compute_statistics(d, std::span(&q, 1), layers);
  const auto m = s.macro_state(0, 1, 0);
  EXPECT_EQ(std::vector<double>(m.begin(), m.end()), (std::vector<double>{0, 0, 1}));
  EXPECT_EQ(s.neighbor_count(0, 1, 0), 1.0);
  const auto empty = s.macro_state(0, 0, 0);
  EXPECT_EQ(std::vector<double>(empty.begin(), empty.end()), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(s.neighbor_count(0, 0, 0), 0.0);
}

TEST(Statistics, TwoNeighborsAverage) {
  const Dataset d = single_graph(3, {{0, 2}, {1, 2}});
  FrozenPosterior q{0, 2, PosteriorMode::kContinuous, {1, 0, 0, 1, 0.5, 0.5}};
  const int layers[] = {0};
  const LayerStatistics s = compute_statistics(d, std::span(&q, 1), layers);
  const auto m = s.macro_state(0, 2, 0);
  EXPECT_DOUBLE_EQ(m[0], 0.5);
  EXPECT_DOUBLE_EQ(m[1], 0.5);
}

TEST(Statistics, MatchesExplicitLoop) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Dataset d = dbgn::testing::random_dataset(200 + trial, 3, 6, 2, 2, false, 0.4);
    const std::size_t n = d.total_vertices();
    std::vector<FrozenPosterior> frozen = {random_posterior(rng, n, 3, 0), random_posterior(rng, n, 2, 1)};
    const int layers[] = {0, 1};
    const LayerStatistics s = compute_statistics(d, frozen, layers);
    const auto off = d.vertex_offsets();
    for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
      const Graph& g = d.graphs[gi];
      for (std::size_t l = 0; l < 2; ++l) {
        const std::size_t w = frozen[l].width;
        for (std::size_t u = 0; u < g.num_vertices; ++u) {
          for (EdgeLabel a = 0; a < 2; ++a) {
            std::vector<double> sum(w, 0.0);
            double cnt = 0;
            for (const Arc& arc : g.arcs) {
              if (arc.dst != u || arc.label != a) continue;
              cnt += 1;
              for (std::size_t j = 0; j < w; ++j) sum[j] += frozen[l].row(off[gi] + arc.src)[j];
            }
            const auto m = s.macro_state(l, off[gi] + u, a);
            ASSERT_EQ(m.size(), w);
            EXPECT_EQ(s.neighbor_count(l, off[gi] + u, a), cnt);
            double total = 0;
            for (std::size_t j = 0; j < w; ++j) {
              EXPECT_NEAR(m[j], cnt > 0 ? sum[j] / cnt : 0.0, 1e-12);
              total += m[j];
            }
            if (cnt > 0) {
              EXPECT_NEAR(total, 1.0, 1e-9);
            }
          }
        }
      }
    }
  }
}

TEST(Statistics, UniformPosteriorsGiveUniformMacroStates) {
  Dataset d = dbgn::testing::random_dataset(3, 4, 8, 2);
  FrozenPosterior q{0, 4, PosteriorMode::kContinuous, std::vector<double>(d.total_vertices() * 4, 0.25)};
  const int layers[] = {0};
  const LayerStatistics s = compute_statistics(d, std::span(&q, 1), layers);
  for (std::size_t u = 0; u < d.total_vertices(); ++u) {
    if (s.neighbor_count(0, u, 0) == 0) continue;
    for (double v : s.macro_state(0, u, 0)) EXPECT_NEAR(v, 0.25, 1e-15);
  }
}

TEST(Statistics, PermutationCovariant) {
  Rng rng(5);
  Dataset d = dbgn::testing::random_dataset(8, 1, 12, 2);
  const std::size_t n = d.total_vertices();
  const FrozenPosterior q = random_posterior(rng, n, 3);
  std::vector<VertexId> perm;
  Dataset dp = d;
  dp.graphs[0] = dbgn::testing::permuted(d.graphs[0], rng, &perm);
  FrozenPosterior qp = q;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t j = 0; j < 3; ++j) qp.row(perm[u])[j] = q.row(u)[j];
  }
  const int layers[] = {0};
  const LayerStatistics s = compute_statistics(d, std::span(&q, 1), layers);
  const LayerStatistics sp = compute_statistics(dp, std::span(&qp, 1), layers);
  for (std::size_t u = 0; u < n; ++u) {
    EXPECT_EQ(s.neighbor_count(0, u, 0), sp.neighbor_count(0, perm[u], 0));
    const auto a = s.macro_state(0, u, 0);
    const auto b = sp.macro_state(0, perm[u], 0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a[j], b[j], 1e-15);
  }
}

TEST(Statistics, BottomCoordinateAppended) {
  Dataset d;
  Graph g;
  g.num_vertices = 3;
  g.x = {0, 0, 0};
  dbgn::testing::add_edge(g, 0, 1);
  dbgn::testing::add_edge(g, 0, 2);
  d.graphs.push_back(g);
  const Dataset aug = augment_bottom(d);
  FrozenPosterior q{0, 2, PosteriorMode::kContinuous, {1, 0, 0, 1, 0, 1}};
  const int layers[] = {0};
  const LayerStatistics s = compute_statistics(aug, std::span(&q, 1), layers);
  ASSERT_EQ(s.widths[0], 3u);
  // Vertex 1: one real neighbour (vertex 0) on label 0, one dummy on the bottom label.
  const auto real = s.macro_state(0, 1, 0);
  EXPECT_EQ(std::vector<double>(real.begin(), real.end()), (std::vector<double>{1, 0, 0}));
  const auto bottom = s.macro_state(0, 1, 1);
  EXPECT_EQ(std::vector<double>(bottom.begin(), bottom.end()), (std::vector<double>{0, 0, 1}));
  EXPECT_EQ(s.neighbor_count(0, 1, 1), 1.0);
  EXPECT_EQ(s.neighbor_count(0, 0, 1), 0.0);
}

TEST(Statistics, MissingFrozenLayerIsConfigError) {
  const Dataset d = single_graph(2, {{0, 1}});
  FrozenPosterior q{0, 2, PosteriorMode::kContinuous, {1, 0, 0, 1}};
  const int layers[] = {1};
  EXPECT_THROW(compute_statistics(d, std::span(&q, 1), layers), ConfigError);
}

TEST(Statistics, SaveLoadBitExact) {
  TempDir dir;
  Rng rng(1);
  Dataset d = dbgn::testing::random_dataset(9, 5, 10, 2, 2);
  std::vector<FrozenPosterior> frozen = {random_posterior(rng, d.total_vertices(), 5)};
  const int layers[] = {0};
  const LayerStatistics s = compute_statistics(d, frozen, layers);
  save_statistics(s, dir.file("s.bin"));
  EXPECT_EQ(load_statistics(dir.file("s.bin")), s);

  save_posterior(frozen[0], dir.file("p.bin"));
  EXPECT_EQ(load_posterior(dir.file("p.bin")), frozen[0]);
}

TEST(Statistics, TruncatedFileIsIoError) {
  TempDir dir;
  Rng rng(2);
  Dataset d = dbgn::testing::random_dataset(9, 5, 10, 2);
  std::vector<FrozenPosterior> frozen = {random_posterior(rng, d.total_vertices(), 3)};
  const int layers[] = {0};
  save_statistics(compute_statistics(d, frozen, layers), dir.file("s.bin"));
  const auto size = std::filesystem::file_size(dir.file("s.bin"));
  std::filesystem::resize_file(dir.file("s.bin"), size / 2);
  EXPECT_THROW(load_statistics(dir.file("s.bin")), IoError);
  EXPECT_THROW(load_statistics(dir.file("missing.bin")), IoError);
}

TEST(Statistics, VersionMismatchIsIoError) {
  TempDir dir;
  Rng rng(2);
  Dataset d = dbgn::testing::random_dataset(9, 2, 4, 2);
  std::vector<FrozenPosterior> frozen = {random_posterior(rng, d.total_vertices(), 2)};
  const int layers[] = {0};
  save_statistics(compute_statistics(d, frozen, layers), dir.file("s.bin"));
  std::fstream f(dir.file("s.bin"), std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(8);
  const char bad[4] = {99, 0, 0, 0};
  f.write(bad, 4);
  f.close();
  EXPECT_THROW(load_statistics(dir.file("s.bin")), IoError);
}

TEST(FrozenPosterior, ValidateAndOneHot) {
  FrozenPosterior p{0, 2, PosteriorMode::kContinuous, {0.2, 0.8, 0.5, 0.5}};
  EXPECT_NO_THROW(p.validate());
  const FrozenPosterior h = p.one_hot();
  EXPECT_EQ(h.values, (std::vector<double>{0, 1, 1, 0}));
  EXPECT_EQ(h.mode, PosteriorMode::kOneHot);
  FrozenPosterior bad{0, 2, PosteriorMode::kContinuous, {0.2, 0.7}};
  EXPECT_THROW(bad.validate(), ConfigError);
  FrozenPosterior bad_hot{0, 2, PosteriorMode::kOneHot, {0.5, 0.5}};
  EXPECT_THROW(bad_hot.validate(), ConfigError);
}
