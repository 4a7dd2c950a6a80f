#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <tuple>

#include "dbgn/errors.hpp"
#include "dbgn/graph.hpp"
#include "synthetic.hpp"
#include "tempdir.hpp"

using namespace dbgn;
using dbgn::testing::TempDir;
using dbgn::testing::write_text;

namespace {

void write_tu(const TempDir& dir, const std::string& arcs) {
  write_text(dir.file("T_A.txt"), arcs);
  write_text(dir.file("T_graph_indicator.txt"), "1\n1\n1\n2\n2\n");
  write_text(dir.file("T_graph_labels.txt"), "1\n-1\n");
}

std::multiset<std::tuple<VertexId, VertexId, EdgeLabel>> arc_set(const Graph& g) {
  std::multiset<std::tuple<VertexId, VertexId, EdgeLabel>> s;
  for (const Arc& a : g.arcs) s.insert({a.src, a.dst, a.label});
  return s;
}

}  // namespace

TEST(TuLoader, SplitsGraphsByIndicator) {
  TempDir dir;
  write_tu(dir, "1, 2\n2, 1\n2, 3\n3, 2\n4, 5\n5, 4\n");
  const Dataset d = load_tu_dataset(dir.path().string(), "T");
  ASSERT_EQ(d.graphs.size(), 2u);
  EXPECT_EQ(d.graphs[0].num_vertices, 3u);
  EXPECT_EQ(d.graphs[1].num_vertices, 2u);
  EXPECT_EQ(d.graphs[0].arcs.size(), 4u);
  EXPECT_EQ(d.graphs[1].arcs[0].src, 0u);
  EXPECT_EQ(d.graphs[1].arcs[0].dst, 1u);
  // Missing vertex and edge labels: constant feature, single label.
  EXPECT_EQ(d.vertex_alphabet, 1u);
  EXPECT_EQ(d.edge_alphabet, 1u);
  for (double x : d.graphs[0].x) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(d.num_classes, 2u);
}

TEST(TuLoader, CrossGraphArcIsIntegrityError) {
  TempDir dir;
  write_tu(dir, "1, 2\n3, 5\n");
  EXPECT_THROW(load_tu_dataset(dir.path().string(), "T"), DataError);
}

TEST(TuLoader, MalformedLineReportsLineNumber) {
  TempDir dir;
  write_tu(dir, "1, 2\nfoo\n");
  try {
    load_tu_dataset(dir.path().string(), "T");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(TuLoader, MultiDimensionalAttributesRejected) {
  TempDir dir;
  write_tu(dir, "1, 2\n2, 1\n");
  write_text(dir.file("T_node_attributes.txt"), "0.1, 0.2\n0.1, 0.2\n0.1, 0.2\n0.1, 0.2\n0.1, 0.2\n");
  TuOptions opts;
  opts.prefer_attributes = true;
  EXPECT_THROW(load_tu_dataset(dir.path().string(), "T", opts), DataError);
  opts.allow_truncate_attributes = true;
  const Dataset d = load_tu_dataset(dir.path().string(), "T", opts);
  EXPECT_EQ(d.feature_kind, FeatureKind::kContinuous);
}

TEST(TuLoader, ReserializeGivesSameArcMultiset) {
  TempDir dir;
  write_tu(dir, "1, 2\n2, 1\n2, 3\n3, 2\n4, 5\n5, 4\n");
  write_text(dir.file("T_node_labels.txt"), "0\n1\n0\n2\n1\n");
  const Dataset d = load_tu_dataset(dir.path().string(), "T");
  write_graph_lines(d, dir.file("d.jsonl"));
  const Dataset back = read_graph_lines(dir.file("d.jsonl"));
  ASSERT_EQ(back.graphs.size(), d.graphs.size());
  for (std::size_t i = 0; i < d.graphs.size(); ++i) EXPECT_EQ(arc_set(back.graphs[i]), arc_set(d.graphs[i]));
  EXPECT_EQ(back, d);
}

TEST(GraphLines, BitExactRoundTrip) {
  TempDir dir;
  Dataset d = dbgn::testing::random_dataset(5, 20, 10, 1, 2, true);
  d.has_arc_features = true;
  Rng rng(9);
  for (auto& g : d.graphs) {
    for (auto& a : g.arcs) a.feature = sample_normal(rng, 0.0, 1.0) / 3.0;
  }
  write_graph_lines(d, dir.file("x.jsonl"));
  EXPECT_EQ(read_graph_lines(dir.file("x.jsonl")), d);
}

TEST(ToDirected, SingleEdgeBecomesTwoArcs) {
  Graph g;
  g.num_vertices = 2;
  g.x = {0, 0};
  g.edges.push_back({0, 1, 0, 0.5});
  const Graph out = to_directed(g);
  ASSERT_EQ(out.arcs.size(), 2u);
  EXPECT_TRUE(out.edges.empty());
  EXPECT_EQ(out.arcs[0], (Arc{0, 1, 0, 0.5}));
  EXPECT_EQ(out.arcs[1], (Arc{1, 0, 0, 0.5}));
}

TEST(ToDirected, IdempotentAndTriangleHasSixArcs) {
  Graph g;
  g.num_vertices = 3;
  g.x = {0, 0, 0};
  g.edges = {{0, 1, 0, 0}, {1, 2, 0, 0}, {0, 2, 0, 0}};
  const Graph once = to_directed(g);
  EXPECT_EQ(once.arcs.size(), 6u);
  EXPECT_EQ(to_directed(once), once);
}

TEST(AugmentBottom, StarLeavesGainTwoDummies) {
  Graph g;
  g.num_vertices = 4;
  g.x = {0, 0, 0, 0};
  for (VertexId v = 1; v < 4; ++v) dbgn::testing::add_edge(g, 0, v);
  const Graph out = augment_bottom(g, 1);
  EXPECT_EQ(out.bottom_in, (std::vector<std::uint32_t>{0, 2, 2, 2}));
}

TEST(AugmentBottom, RegularGraphGainsNothing) {
  Graph g;
  g.num_vertices = 4;
  g.x.assign(4, 0);
  for (VertexId u = 0; u < 4; ++u) dbgn::testing::add_edge(g, u, (u + 1) % 4);
  const Graph out = augment_bottom(g, 1);
  for (auto b : out.bottom_in) EXPECT_EQ(b, 0u);
}

TEST(AugmentBottom, DegreePlusDummiesConstantAgainstBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d = dbgn::testing::random_dataset(100 + trial, 3, 12, 2);
    const Dataset aug = augment_bottom(d);
    EXPECT_EQ(aug.edge_alphabet, d.edge_alphabet + 1);
    for (const Graph& g : aug.graphs) {
      std::vector<std::size_t> deg(g.num_vertices, 0);
      for (const Arc& a : g.arcs) ++deg[a.dst];
      const std::size_t mx = *std::max_element(deg.begin(), deg.end());
      for (std::size_t u = 0; u < g.num_vertices; ++u) EXPECT_EQ(deg[u] + g.bottom_in[u], mx);
      ASSERT_TRUE(g.bottom_label.has_value());
      EXPECT_EQ(*g.bottom_label, d.edge_alphabet);
    }
    EXPECT_NO_THROW(aug.validate());
  }
}

TEST(DegreeFeature, IsolatedCliqueAndColumnSums) {
  Dataset d;
  d.vertex_alphabet = 1;
  Graph iso;
  iso.num_vertices = 1;
  iso.x = {0};
  Graph clique;
  clique.num_vertices = 5;
  clique.x.assign(5, 0);
  for (VertexId u = 0; u < 5; ++u) {
    for (VertexId v = u + 1; v < 5; ++v) dbgn::testing::add_edge(clique, u, v);
  }
  d.graphs = {iso, clique};
  Dataset r = dbgn::testing::random_dataset(4, 5, 15, 1);
  for (auto& g : r.graphs) d.graphs.push_back(g);
  const Dataset out = add_degree_feature(d);
  EXPECT_EQ(out.feature_kind, FeatureKind::kContinuous);
  EXPECT_EQ(out.graphs[0].x[0], 0.0);
  for (double x : out.graphs[1].x) EXPECT_EQ(x, 4.0);
  for (std::size_t gi = 2; gi < out.graphs.size(); ++gi) {
    const Graph& g = out.graphs[gi];
    std::vector<std::vector<int>> adj(g.num_vertices, std::vector<int>(g.num_vertices, 0));
    for (const Arc& a : g.arcs) adj[a.src][a.dst] += 1;
    for (std::size_t v = 0; v < g.num_vertices; ++v) {
      int col = 0;
      for (std::size_t u = 0; u < g.num_vertices; ++u) col += adj[u][v];
      EXPECT_EQ(g.x[v], col);
    }
  }
}

TEST(DegreeFeature, RefusesInformativeLabelsUnlessForced) {
  Dataset d = dbgn::testing::random_dataset(1, 3, 5, 3);
  EXPECT_THROW(add_degree_feature(d), ConfigError);
  EXPECT_NO_THROW(add_degree_feature(d, true));
}

TEST(NeighborIndex, SingleArc) {
  Graph g;
  g.num_vertices = 2;
  g.x = {0, 0};
  g.arcs = {{0, 1, 0, 0}};
  const NeighborIndex idx = build_neighbor_index(g, 1);
  ASSERT_EQ(idx.in_neighbors(1, 0).size(), 1u);
  EXPECT_EQ(idx.in_neighbors(1, 0)[0], 0u);
  EXPECT_TRUE(idx.in_neighbors(0, 0).empty());
}

TEST(NeighborIndex, ParallelArcsWithTwoLabels) {
  Graph g;
  g.num_vertices = 2;
  g.x = {0, 0};
  g.arcs = {{0, 1, 0, 0}, {0, 1, 1, 0}};
  const NeighborIndex idx = build_neighbor_index(g, 2);
  EXPECT_EQ(idx.count(1, 0), 1u);
  EXPECT_EQ(idx.count(1, 1), 1u);
  EXPECT_EQ(idx.in_neighbors(1, 1)[0], 0u);
  EXPECT_EQ(idx.degree[1], 2u);
}

TEST(NeighborIndex, CountsMatchArcsOnRandomGraph) {
  Rng rng(77);
  const Graph g = dbgn::testing::random_graph(rng, 50, 0.1, 2, 3);
  const NeighborIndex idx = build_neighbor_index(g, 3);
  std::size_t total = 0;
  for (VertexId u = 0; u < 50; ++u) {
    std::size_t per_u = 0;
    for (EdgeLabel a = 0; a < 3; ++a) {
      per_u += idx.count(u, a);
      const auto nb = idx.in_neighbors(u, a);
      EXPECT_TRUE(std::is_sorted(nb.begin(), nb.end()));
    }
    EXPECT_EQ(per_u, idx.degree[u]);
    total += per_u;
  }
  EXPECT_EQ(total, g.arcs.size());
}

TEST(Dataset, ValidateRejectsBadArcs) {
  Dataset d = dbgn::testing::random_dataset(2, 2, 5, 2);
  d.graphs[0].arcs.push_back({0, 99, 0, 0});
  EXPECT_THROW(d.validate(), DataError);
  Dataset e = dbgn::testing::random_dataset(2, 2, 5, 2);
  e.graphs[0].x[0] = 7;
  EXPECT_THROW(e.validate(), DataError);
}
