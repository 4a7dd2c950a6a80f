#include <gtest/gtest.h>

#include <fstream>

#include "dbgn/embeddings.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/stack.hpp"
#include "synthetic.hpp"
#include "tempdir.hpp"

using namespace dbgn;
namespace dt = dbgn::testing;

namespace {

FrozenPosterior random_posterior(Rng& rng, std::size_t rows, std::size_t width, int layer = 0) {
  FrozenPosterior p;
  p.layer = layer;
  p.width = width;
  const std::vector<double> alpha(width, 0.7);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = sample_dirichlet(rng, alpha);
    p.values.insert(p.values.end(), row.begin(), row.end());
  }
  return p;
}

StackPosteriors random_stack(Rng& rng, std::size_t rows, std::vector<std::size_t> widths) {
  StackPosteriors s;
  for (std::size_t l = 0; l < widths.size(); ++l) s.vertex.push_back(random_posterior(rng, rows, widths[l], static_cast<int>(l)));
  return s;
}

}  // namespace

TEST(Embeddings, BlockWidths) {
  EXPECT_EQ(block_width(EmbeddingKind::kUnigram, 20), 20u);
  EXPECT_EQ(block_width(EmbeddingKind::kBigram, 20), 400u);
  EXPECT_EQ(block_width(EmbeddingKind::kUnibigram, 20), 420u);
  // 20 layers of C = 20, unibigram.
  Dataset d;
  Graph g;
  g.num_vertices = 2;
  g.x = {0, 0};
  dt::add_edge(g, 0, 1);
  d.graphs.push_back(g);
  StackPosteriors post;
  for (int l = 0; l < 20; ++l) {
    FrozenPosterior p{l, 20, PosteriorMode::kContinuous, std::vector<double>(40, 0.05)};
    post.vertex.push_back(p);
  }
  const EmbeddingSet e = build_graph_embeddings(d, post, EmbeddingKind::kUnibigram, Aggregation::kSum);
  EXPECT_EQ(e.width, 8400u);
  EXPECT_EQ(e.vertex_blocks, std::vector<std::size_t>(20, 420));
}

TEST(Embeddings, IsolatedVertexHasZeroBigram) {
  Graph g;
  g.num_vertices = 1;
  g.x = {0};
  FrozenPosterior q{0, 3, PosteriorMode::kContinuous, {0.2, 0.3, 0.5}};
  const EmbeddingSet e = build_vertex_embeddings(std::span(&q, 1), g, 0, 1, EmbeddingKind::kBigram);
  ASSERT_EQ(e.width, 9u);
  for (double v : e.values) EXPECT_EQ(v, 0.0);
}

TEST(Embeddings, OneHotBigramSingleEntry) {
  Graph g;
  g.num_vertices = 2;
  g.x = {0, 0};
  g.arcs = {{1, 0, 0, 0}};
  FrozenPosterior q{0, 3, PosteriorMode::kOneHot, {0, 1, 0, 0, 0, 1}};
  const EmbeddingSet e = build_vertex_embeddings(std::span(&q, 1), g, 0, 1, EmbeddingKind::kBigram);
  std::vector<double> want(9, 0.0);
  want[1 * 3 + 2] = 1.0;
  const auto r0 = e.row(0);
  EXPECT_EQ(std::vector<double>(r0.begin(), r0.end()), want);
}

TEST(Embeddings, BigramMatchesDoubleLoop) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset d = dt::random_dataset(seed, 1, 4, 2, 2, false, 0.5);
    const Graph& g = d.graphs[0];
    Rng rng(seed);
    const FrozenPosterior q = random_posterior(rng, g.num_vertices, 3);
    const EmbeddingSet e = build_vertex_embeddings(std::span(&q, 1), g, 0, 2, EmbeddingKind::kUnibigram);
    ASSERT_EQ(e.width, 12u);
    for (VertexId u = 0; u < g.num_vertices; ++u) {
      for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(e.row(u)[i], q.row(u)[i]);
        for (std::size_t j = 0; j < 3; ++j) {
          double want = 0;
          for (const Arc& a : g.arcs) {
            if (a.dst == u) want += q.row(u)[i] * q.row(a.src)[j];
          }
          EXPECT_NEAR(e.row(u)[3 + i * 3 + j], want, 1e-14);
        }
      }
    }
  }
}

TEST(Embeddings, BottomArcsExcludedFromBigram) {
  Dataset d;
  Graph g;
  g.num_vertices = 3;
  g.x = {0, 0, 0};
  dt::add_edge(g, 0, 1);
  dt::add_edge(g, 0, 2);
  d.graphs.push_back(g);
  const Dataset aug = augment_bottom(d);
  Rng rng(3);
  const FrozenPosterior q = random_posterior(rng, 3, 2);
  const EmbeddingSet a = build_vertex_embeddings(std::span(&q, 1), d.graphs[0], 0, 1, EmbeddingKind::kBigram);
  const EmbeddingSet b = build_vertex_embeddings(std::span(&q, 1), aug.graphs[0], 0, 2, EmbeddingKind::kBigram);
  EXPECT_EQ(a.values, b.values);
}

TEST(Embeddings, UnibigramPrefixEqualsUnigram) {
  const Dataset d = dt::random_dataset(5, 6, 8, 2);
  Rng rng(5);
  const StackPosteriors post = random_stack(rng, d.total_vertices(), {3, 4});
  const EmbeddingSet uni = build_graph_embeddings(d, post, EmbeddingKind::kUnigram, Aggregation::kMean);
  const EmbeddingSet ub = build_graph_embeddings(d, post, EmbeddingKind::kUnibigram, Aggregation::kMean);
  ASSERT_EQ(ub.vertex_blocks, (std::vector<std::size_t>{12, 20}));
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ub.row(r)[i], uni.row(r)[i]);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ub.row(r)[12 + i], uni.row(r)[3 + i]);
  }
}

TEST(Embeddings, MeanOfIdenticalVerticesAndSumLinearity) {
  Dataset d;
  Graph g;
  g.num_vertices = 5;
  g.x.assign(5, 0);
  d.graphs.push_back(g);
  StackPosteriors post;
  FrozenPosterior q{0, 2, PosteriorMode::kContinuous, {}};
  for (int i = 0; i < 5; ++i) q.values.insert(q.values.end(), {0.3, 0.7});
  post.vertex.push_back(q);
  const EmbeddingSet mean = build_graph_embeddings(d, post, EmbeddingKind::kUnigram, Aggregation::kMean);
  const EmbeddingSet sum = build_graph_embeddings(d, post, EmbeddingKind::kUnigram, Aggregation::kSum);
  EXPECT_NEAR(mean.values[0], 0.3, 1e-15);
  EXPECT_NEAR(mean.values[1], 0.7, 1e-15);
  EXPECT_NEAR(sum.values[0], 5 * mean.values[0], 1e-14);
  EXPECT_NEAR(sum.values[1], 5 * mean.values[1], 1e-14);
}

TEST(Embeddings, EmptyGraphIsError) {
  Dataset d;
  d.graphs.push_back(Graph{});
  StackPosteriors post;
  post.vertex.push_back(FrozenPosterior{0, 2, PosteriorMode::kContinuous, {}});
  EXPECT_THROW(build_graph_embeddings(d, post, EmbeddingKind::kUnigram, Aggregation::kMean), DataError);
}

TEST(Embeddings, PermutationInvariantExactly) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d = dt::random_dataset(100 + trial, 1, 15, 2);
    const std::size_t n = d.total_vertices();
    const StackPosteriors post = random_stack(rng, n, {3, 2});
    std::vector<VertexId> perm;
    Dataset dp = d;
    dp.graphs[0] = dt::permuted(d.graphs[0], rng, &perm);
    StackPosteriors pp = post;
    for (std::size_t l = 0; l < 2; ++l) {
      const std::size_t w = post.vertex[l].width;
      for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t j = 0; j < w; ++j) pp.vertex[l].values[perm[u] * w + j] = post.vertex[l].values[u * w + j];
      }
    }
    for (auto agg : {Aggregation::kSum, Aggregation::kMean}) {
      const EmbeddingSet a = build_graph_embeddings(d, post, EmbeddingKind::kUnibigram, agg);
      const EmbeddingSet b = build_graph_embeddings(dp, pp, EmbeddingKind::kUnibigram, agg);
      EXPECT_EQ(a.values, b.values);
    }
  }
}

TEST(Embeddings, DisjointUnionSumsParts) {
  const Dataset parts = dt::random_dataset(9, 2, 8, 2);
  Rng rng(9);
  const StackPosteriors post = random_stack(rng, parts.total_vertices(), {3});
  Dataset uni = parts;
  Graph merged = parts.graphs[0];
  const auto off = static_cast<VertexId>(merged.num_vertices);
  merged.num_vertices += parts.graphs[1].num_vertices;
  merged.x.insert(merged.x.end(), parts.graphs[1].x.begin(), parts.graphs[1].x.end());
  for (Arc a : parts.graphs[1].arcs) {
    a.src += off;
    a.dst += off;
    merged.arcs.push_back(a);
  }
  uni.graphs = {merged};
  const EmbeddingSet ep = build_graph_embeddings(parts, post, EmbeddingKind::kUnibigram, Aggregation::kSum);
  const EmbeddingSet eu = build_graph_embeddings(uni, post, EmbeddingKind::kUnibigram, Aggregation::kSum);
  for (std::size_t k = 0; k < ep.width; ++k) EXPECT_NEAR(eu.values[k], ep.row(0)[k] + ep.row(1)[k], 1e-13);
}

TEST(Embeddings, EcgmmAppendsEdgeBlocks) {
  std::vector<int> truth;
  const Dataset d = dt::arc_cluster_dataset(3, 5, 6, &truth);
  StackConfig c;
  c.model = ModelKind::kEcgmm;
  c.layers = 2;
  c.states = 3;
  c.edge_states = 2;
  const TrainedStack s = train_stack(d, c);
  const EmbeddingSet e = build_graph_embeddings(d, s.train, EmbeddingKind::kUnigram, Aggregation::kSum);
  EXPECT_EQ(e.vertex_blocks, (std::vector<std::size_t>{3, 3}));
  EXPECT_EQ(e.edge_blocks, (std::vector<std::size_t>{2, 2}));
  EXPECT_EQ(e.width, 10u);
  // Sum of arc posteriors of graph 0 in layer 0 equals its arc count.
  EXPECT_NEAR(e.row(0)[6] + e.row(0)[7], static_cast<double>(d.graphs[0].arcs.size()), 1e-12);
  const EmbeddingSet t = e.truncated(1);
  EXPECT_EQ(t.width, 5u);
  EXPECT_EQ(t.row(0)[3], e.row(0)[6]);
}

TEST(Embeddings, BagOfFeatures) {
  Dataset d;
  d.vertex_alphabet = 3;
  Graph g;
  g.num_vertices = 4;
  g.x = {0, 2, 2, 1};
  d.graphs.push_back(g);
  const EmbeddingSet e = bag_of_features(d, Aggregation::kSum);
  EXPECT_EQ(e.values, (std::vector<double>{1, 1, 2}));
  const EmbeddingSet m = bag_of_features(d, Aggregation::kMean);
  EXPECT_EQ(m.values, (std::vector<double>{0.25, 0.25, 0.5}));
}

TEST(EmbeddingIo, BinaryRoundTripBitExact) {
  dt::TempDir dir;
  const Dataset d = dt::random_dataset(11, 10, 8, 2);
  Rng rng(11);
  EmbeddingSet e = build_graph_embeddings(d, random_stack(rng, d.total_vertices(), {3, 5}),
                                          EmbeddingKind::kUnibigram, Aggregation::kMean);
  e.metadata = R"({"model":"cgmm"})";
  export_binary(e, dir.file("e.bin"));
  EXPECT_EQ(import_binary(dir.file("e.bin")), e);
}

TEST(EmbeddingIo, CsvRoundTripWithinPrecision) {
  dt::TempDir dir;
  const Dataset d = dt::random_dataset(12, 10, 8, 2);
  Rng rng(12);
  const EmbeddingSet e =
      build_graph_embeddings(d, random_stack(rng, d.total_vertices(), {4}), EmbeddingKind::kBigram, Aggregation::kMean);
  export_csv(e, dir.file("e.csv"));
  const EmbeddingSet back = import_csv(dir.file("e.csv"));
  ASSERT_EQ(back.rows, e.rows);
  ASSERT_EQ(back.width, e.width);
  for (std::size_t k = 0; k < e.values.size(); ++k) EXPECT_LT(std::abs(back.values[k] - e.values[k]), 1e-15);
  std::ifstream in(dir.file("e.csv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("graph_id,dim_0,dim_1", 0), 0u);
}

TEST(EmbeddingIo, MetadataMismatchIsError) {
  dt::TempDir dir;
  const Dataset d = dt::random_dataset(13, 4, 8, 2);
  Rng rng(13);
  const EmbeddingSet e =
      build_graph_embeddings(d, random_stack(rng, d.total_vertices(), {3}), EmbeddingKind::kUnigram, Aggregation::kSum);
  write_metadata(e, dir.file("e.csv"));
  EXPECT_NO_THROW(check_metadata(e, dir.file("e.csv")));
  const EmbeddingSet wider =
      build_graph_embeddings(d, random_stack(rng, d.total_vertices(), {4}), EmbeddingKind::kUnigram, Aggregation::kSum);
  EXPECT_THROW(check_metadata(wider, dir.file("e.csv")), DataError);
}
