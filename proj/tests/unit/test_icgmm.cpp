#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dbgn/errors.hpp"
#include "dbgn/icgmm_layer.hpp"
#include "freq.hpp"
#include "synthetic.hpp"
#include "tempdir.hpp"

using namespace dbgn;
namespace dt = dbgn::testing;

namespace {

EmissionPrior single_symbol_prior() {
  EmissionPrior p;
  p.kind = FeatureKind::kDiscrete;
  p.alphabet = 1;
  return p;
}

// Hand-built state of one group over states with the given dish counts.
// With K = 1 every emission density is exactly 1.
HdpState counted_state(const std::vector<std::uint64_t>& counts, const std::vector<double>& beta, double alpha0) {
  const std::vector<std::uint32_t> groups;
  HdpState s = make_hdp_state(1, groups, single_symbol_prior(), alpha0, 1.0, 0);
  Rng rng(0);
  for (std::size_t i = 0; i < counts.size(); ++i) add_state(s, HdpTheta{{1.0}, 0, 1}, rng);
  s.beta = beta;
  s.n[0] = counts;
  return s;
}

std::size_t total_customers(const HdpState& s) {
  std::size_t n = 0;
  for (const auto& row : s.n) {
    for (auto v : row) n += v;
  }
  return n;
}

FrozenPosterior random_posterior(Rng& rng, std::size_t rows, std::size_t width) {
  FrozenPosterior p;
  p.width = width;
  const std::vector<double> alpha(width, 0.5);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = sample_dirichlet(rng, alpha);
    p.values.insert(p.values.end(), row.begin(), row.end());
  }
  return p;
}

}  // namespace

TEST(SelectGroups, OneHotNeighboursAndTies) {
  Dataset d;
  Graph g;
  g.num_vertices = 4;
  g.x = {0, 0, 0, 0};
  g.arcs = {{0, 2, 0, 0}, {1, 2, 0, 0}, {0, 3, 0, 0}};
  d.graphs.push_back(g);
  FrozenPosterior q{0, 4, PosteriorMode::kOneHot, {0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0}};
  // Vertex 3 only hears vertex 0 (state 3); vertex 2 hears states 3 and 0.
  const auto groups = select_groups(d, &q);
  EXPECT_EQ(groups[3], 3u);
  EXPECT_EQ(groups[2], 0u);
  EXPECT_EQ(groups[0], 0u);  // no neighbours
  FrozenPosterior tie{0, 2, PosteriorMode::kOneHot, {1, 0, 0, 1, 0, 1, 0, 1}};
  EXPECT_EQ(select_groups(d, &tie)[2], 0u);
  EXPECT_EQ(select_groups(d, nullptr), std::vector<std::uint32_t>(4, 0));
}

TEST(SelectGroups, MatchesMeanArgmaxLoop) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset d = dt::random_dataset(seed, 1, 6, 2, 1, false, 0.5);
    Rng rng(seed);
    const FrozenPosterior q = random_posterior(rng, d.total_vertices(), 4);
    const auto groups = select_groups(d, &q);
    const Graph& g = d.graphs[0];
    for (VertexId u = 0; u < g.num_vertices; ++u) {
      std::vector<double> m(4, 0.0);
      int cnt = 0;
      for (const Arc& a : g.arcs) {
        if (a.dst != u) continue;
        ++cnt;
        for (std::size_t j = 0; j < 4; ++j) m[j] += q.row(a.src)[j];
      }
      const auto want = cnt == 0 ? 0 : std::max_element(m.begin(), m.end()) - m.begin();
      EXPECT_EQ(groups[u], static_cast<std::uint32_t>(want));
    }
  }
}

TEST(SampleDish, EmptyStateAlwaysInnovates) {
  const HdpState s = counted_state({}, {1.0}, 1.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_dish(s, 0, 0.0, rng).index, 0u);
}

TEST(SampleDish, ZeroConcentrationNeverInnovates) {
  const HdpState s = counted_state({3, 1}, {0.3, 0.3, 0.4}, 0.0);
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) EXPECT_LT(sample_dish(s, 0, 0.0, rng).index, 2u);
}

TEST(SampleDish, FrequenciesMatchAnalyticProbabilities) {
  const double a0 = 0.5;
  const HdpState s = counted_state({10, 0}, {0.3, 0.3, 0.4}, a0);
  const std::vector<double> w = {10 + a0 * 0.3, a0 * 0.3, a0 * 0.4};
  const double z = w[0] + w[1] + w[2];
  Rng rng(3);
  std::vector<std::size_t> obs(3, 0);
  for (int i = 0; i < 100000; ++i) ++obs[sample_dish(s, 0, 0.0, rng).index];
  EXPECT_GT(dt::chi_square_pvalue(obs, {w[0] / z, w[1] / z, w[2] / z}), 0.01);
  EXPECT_NEAR(static_cast<double>(obs[0]) / 1e5, 10.15 / 10.5, 0.005);
}

TEST(SampleDish, LikelihoodWeighting) {
  EmissionPrior pr;
  pr.kind = FeatureKind::kDiscrete;
  pr.alphabet = 2;
  const std::vector<std::uint32_t> groups;
  HdpState s = make_hdp_state(1, groups, pr, 0.0, 1.0, 0);
  Rng rng(0);
  add_state(s, HdpTheta{{0.8, 0.2}, 0, 1}, rng);
  add_state(s, HdpTheta{{0.4, 0.6}, 0, 1}, rng);
  s.n[0] = {1, 1};
  std::vector<std::size_t> obs(3, 0);
  for (int i = 0; i < 100000; ++i) ++obs[sample_dish(s, 0, 1.0, rng).index];
  EXPECT_GT(dt::chi_square_pvalue(obs, {0.25, 0.75, 0.0}), 0.01);
}

TEST(SampleTable, NewTableWhenNoneServesDish) {
  HdpState s = counted_state({2, 1}, {0.3, 0.3, 0.4}, 1.0);
  s.tables[0] = {{0, 2}};
  Rng rng(4);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_table(s, 0, 1, rng), 1u);
}

TEST(SampleTable, FrequenciesMatchAnalyticProbabilities) {
  HdpState s = counted_state({99, 5}, {0.5, 0.25, 0.25}, 2.0);
  s.tables[0] = {{1, 5}, {0, 99}};
  Rng rng(5);
  std::vector<std::size_t> obs(3, 0);
  for (int i = 0; i < 100000; ++i) ++obs[sample_table(s, 0, 0, rng)];
  EXPECT_EQ(obs[0], 0u);
  EXPECT_GT(dt::chi_square_pvalue(obs, {0.0, 0.99, 0.01}), 0.01);
}

TEST(SampleTable, SeatingAddsExactlyOneCustomer) {
  const std::vector<std::uint32_t> groups(5, 0);
  HdpState s = make_hdp_state(1, groups, single_symbol_prior(), 1.0, 1.0, 7);
  const std::vector<double> x(5, 0.0);
  SweepOptions opt;
  gibbs_sweep_exact(s, x, opt);
  std::uint64_t before = 0;
  for (const auto& t : s.tables[0]) before += t.customers;
  EXPECT_EQ(before, 5u);
}

TEST(SampleBeta, DirichletMeans) {
  HdpState s = counted_state({5}, {0.5, 0.5}, 1.0);
  s.m[0] = {5};
  s.gamma = 1.0;
  Rng rng(6);
  double mean = 0;
  for (int i = 0; i < 10000; ++i) {
    sample_beta(s, rng);
    mean += s.beta[0];
  }
  EXPECT_NEAR(mean / 1e4, 5.0 / 6.0, 0.02);

  HdpState e = counted_state({2, 2, 2}, {0.25, 0.25, 0.25, 0.25}, 1.0);
  e.m[0] = {3, 3, 3};
  std::vector<double> means(3, 0.0);
  for (int i = 0; i < 10000; ++i) {
    sample_beta(e, rng);
    for (std::size_t c = 0; c < 3; ++c) means[c] += e.beta[c] / 1e4;
  }
  EXPECT_NEAR(means[0], means[1], 0.02);
  EXPECT_NEAR(means[1], means[2], 0.02);

  e.gamma = 1e-6;
  double rest = 0;
  for (int i = 0; i < 1000; ++i) {
    sample_beta(e, rng);
    rest += e.beta[3] / 1e3;
  }
  EXPECT_LT(rest, 1e-3);
}

TEST(SampleEmissions, CategoricalPosteriorMean) {
  EmissionPrior pr;
  pr.kind = FeatureKind::kDiscrete;
  pr.alphabet = 2;
  pr.eta = 1.0;
  const std::vector<std::uint32_t> groups(4, 0);
  HdpState s = make_hdp_state(1, groups, pr, 1.0, 1.0, 0);
  const std::vector<double> x = {0, 0, 0, 1};
  Rng rng(7);
  add_state(s, HdpTheta{{0.5, 0.5}, 0, 1}, rng);
  s.q = {0, 0, 0, 0};
  double mean = 0;
  for (int i = 0; i < 10000; ++i) {
    sample_emissions(s, x, rng);
    mean += s.theta[0].probs[0] / 1e4;
  }
  EXPECT_NEAR(mean, 2.0 / 3.0, 0.02);
}

TEST(SampleEmissions, NormalGammaPosteriorMeans) {
  EmissionPrior pr;
  pr.kind = FeatureKind::kContinuous;
  pr.alphabet = 0;
  pr.mu0 = 0.5;
  pr.lambda0 = 2.0;
  pr.a0 = 2.0;
  pr.b0 = 1.0;
  const std::vector<double> x = {1.0, 1.5, 0.2, 2.1, 1.2};
  const std::vector<std::uint32_t> groups(x.size(), 0);
  HdpState s = make_hdp_state(1, groups, pr, 1.0, 1.0, 0);
  Rng rng(8);
  add_state(s, HdpTheta{{}, 0, 1}, rng);
  s.q.assign(x.size(), 0);

  const double n = 5;
  double xbar = 0;
  for (double v : x) xbar += v / n;
  double var = 0;
  for (double v : x) var += (v - xbar) * (v - xbar) / n;
  const double mu_n = (pr.lambda0 * pr.mu0 + n * xbar) / (pr.lambda0 + n);
  const double shape = pr.a0 + n / 2;
  const double rate = pr.b0 + 0.5 * (n * var + pr.lambda0 * n * (xbar - pr.mu0) * (xbar - pr.mu0) / (pr.lambda0 + n));

  double mu = 0, tau = 0;
  for (int i = 0; i < 10000; ++i) {
    sample_emissions(s, x, rng);
    mu += s.theta[0].mu / 1e4;
    tau += s.theta[0].tau / 1e4;
  }
  EXPECT_NEAR(mu, mu_n, 0.02);
  EXPECT_NEAR(tau, shape / rate, 0.02);
}

TEST(SampleEmissions, NormalGammaLimits) {
  EmissionPrior pr;
  pr.kind = FeatureKind::kContinuous;
  pr.alphabet = 0;
  pr.mu0 = -1.0;
  pr.lambda0 = 1e9;
  const std::vector<double> x = {5.0};
  const std::vector<std::uint32_t> groups = {0};
  HdpState s = make_hdp_state(1, groups, pr, 1.0, 1.0, 0);
  Rng rng(9);
  add_state(s, HdpTheta{{}, 0, 1}, rng);
  s.q = {0};
  double mu = 0;
  for (int i = 0; i < 10000; ++i) {
    sample_emissions(s, x, rng);
    mu += s.theta[0].mu / 1e4;
  }
  EXPECT_NEAR(mu, -1.0, 1e-3);

  s.prior.lambda0 = 0.01;
  s.prior.mu0 = 0.0;
  s.prior.a0 = 3.0;
  mu = 0;
  for (int i = 0; i < 10000; ++i) {
    sample_emissions(s, x, rng);
    mu += s.theta[0].mu / 1e4;
  }
  EXPECT_NEAR(mu, 5.0, 0.05);
}

TEST(SampleAlpha0, PriorOnlyMean) {
  const std::vector<std::uint32_t> groups;
  HdpState s = make_hdp_state(1, groups, single_symbol_prior(), 1.0, 1.0, 0);
  Rng rng(10);
  double mean = 0;
  for (int i = 0; i < 10000; ++i) {
    s.alpha0 = 1.0;
    sample_alpha0(s, rng);
    mean += s.alpha0 / 1e4;
  }
  // Gamma(1, rate 0.01): mean 100, sd 100; three standard errors.
  EXPECT_NEAR(mean, 100.0, 3.0);
}

TEST(SampleAlpha0, AuxiliaryPosteriorTwoGroups) {
  const std::vector<std::uint32_t> groups;
  HdpState s = make_hdp_state(2, groups, single_symbol_prior(), 1.5, 1.0, 0);
  Rng add(0);
  add_state(s, HdpTheta{{1.0}, 0, 1}, add);
  add_state(s, HdpTheta{{1.0}, 0, 1}, add);
  s.n = {{4, 2}, {0, 3}};
  s.m = {{2, 1}, {0, 2}};
  Rng rng(11);
  Rng mirror = rng;
  sample_alpha0(s, rng);

  // Hand evaluation with the same auxiliary draws: n_1. = 6, n_2. = 3, m.. = 5.
  const double w1 = sample_beta(mirror, 2.5, 6.0);
  const double s1 = mirror.uniform() < 6.0 / 7.5 ? 1.0 : 0.0;
  const double w2 = sample_beta(mirror, 2.5, 3.0);
  const double s2 = mirror.uniform() < 3.0 / 4.5 ? 1.0 : 0.0;
  const double want = sample_gamma(mirror, 1.0 + 5.0 - s1 - s2, 0.01 - std::log(w1) - std::log(w2));
  EXPECT_NEAR(s.alpha0, want, 1e-12 * want);
}

TEST(SampleGamma, PriorOnlyAndAutoOff) {
  const std::vector<std::uint32_t> groups = {0, 0, 0};
  HdpState s = make_hdp_state(1, groups, single_symbol_prior(), 2.0, 3.0, 12);
  const std::vector<double> x(3, 0.0);
  SweepOptions opt;
  for (int i = 0; i < 5; ++i) {
    gibbs_sweep_exact(s, x, opt);
    EXPECT_EQ(s.alpha0, 2.0);
    EXPECT_EQ(s.gamma, 3.0);
  }
  opt.auto_hyper = true;
  gibbs_sweep_exact(s, x, opt);
  EXPECT_NE(s.alpha0, 2.0);
  EXPECT_NE(s.gamma, 3.0);
}

TEST(Prune, DropsEmptyTablesThenEmptyStates) {
  const std::vector<std::uint32_t> groups = {0, 0, 0};
  HdpState s = make_hdp_state(1, groups, single_symbol_prior(), 1.0, 1.0, 0);
  Rng rng(0);
  for (int i = 0; i < 3; ++i) add_state(s, HdpTheta{{1.0}, 0, 1}, rng);
  s.n[0] = {2, 0, 1};
  s.m[0] = {1, 1, 1};
  s.tables[0] = {{0, 2}, {1, 0}, {2, 1}};
  s.q = {0, 2, 0};
  s.t = {0, 2, 0};
  const auto id2 = s.state_id[2];
  prune(s);
  EXPECT_EQ(s.num_states(), 2u);
  EXPECT_EQ(s.tables[0].size(), 2u);
  EXPECT_EQ(s.q, (std::vector<std::int64_t>{0, 1, 0}));
  EXPECT_EQ(s.t, (std::vector<std::int64_t>{0, 1, 0}));
  EXPECT_EQ(s.state_id[1], id2);
  EXPECT_NEAR(s.beta[0] + s.beta[1] + s.beta[2], 1.0, 1e-12);
  EXPECT_NO_THROW(s.check_invariants());
}

TEST(Invariants, BreachThrowsWithDump) {
  const std::vector<std::uint32_t> groups = {0, 0};
  HdpState s = make_hdp_state(1, groups, single_symbol_prior(), 1.0, 1.0, 1);
  const std::vector<double> x(2, 0.0);
  gibbs_sweep_exact(s, x, SweepOptions{});
  s.n[0][0] += 1;
  try {
    s.check_invariants();
    FAIL() << "expected ConsistencyError";
  } catch (const ConsistencyError& e) {
    EXPECT_NE(std::string(e.what()).find("n[0][0]"), std::string::npos);
  }
}

TEST(GibbsSweep, SingleVertexForcedPath) {
  const std::vector<std::uint32_t> groups = {0};
  HdpState s = make_hdp_state(1, groups, single_symbol_prior(), 1.0, 1.0, 3);
  const std::vector<double> x = {0.0};
  gibbs_sweep_exact(s, x, SweepOptions{});
  EXPECT_EQ(s.num_states(), 1u);
  EXPECT_EQ(s.n[0][0], 1u);
  EXPECT_EQ(s.tables[0].size(), 1u);
  EXPECT_EQ(s.m[0][0], 1u);
}

TEST(GibbsSweep, InvariantsAndConservationExactAndFast) {
  const Dataset d = dt::random_dataset(14, 20, 12, 4);
  const auto x = d.vertex_features();
  Rng rng(3);
  const FrozenPosterior q = random_posterior(rng, x.size(), 3);
  const auto groups = select_groups(d, &q);
  EmissionPrior pr;
  pr.kind = FeatureKind::kDiscrete;
  pr.alphabet = 4;
  const auto offsets = d.vertex_offsets();
  for (bool fast : {false, true}) {
    HdpState s = make_hdp_state(3, groups, pr, 1.0, 1.0, 99);
    SweepOptions opt;
    opt.auto_hyper = true;
    for (int sweep = 0; sweep < 15; ++sweep) {
      if (fast) {
        gibbs_sweep_fast(s, x, offsets, opt);
      } else {
        gibbs_sweep_exact(s, x, opt);
      }
      EXPECT_NO_THROW(s.check_invariants());
      EXPECT_EQ(total_customers(s), x.size());
    }
  }
}

TEST(GibbsSweep, FastWithSingleVertexGraphsMatchesExactDistribution) {
  // Batches of one vertex: both samplers draw from the same conditional, so
  // the distribution of C after one sweep must agree.
  Dataset d = dt::gaussian_mixture_dataset(5, 12, {0.0, 8.0}, 1.0);
  Dataset split;
  split.feature_kind = FeatureKind::kContinuous;
  split.vertex_alphabet = 0;
  for (double v : d.graphs[0].x) {
    Graph g;
    g.num_vertices = 1;
    g.x = {v};
    split.graphs.push_back(g);
  }
  const auto x = split.vertex_features();
  const auto offsets = split.vertex_offsets();
  const std::vector<std::uint32_t> groups(x.size(), 0);
  EmissionPrior pr;
  pr.kind = FeatureKind::kContinuous;
  pr.alphabet = 0;
  pr.mu0 = 4.0;
  std::vector<double> c_exact(8, 0.0), c_fast(8, 0.0);
  const int runs = 2000;
  for (int r = 0; r < runs; ++r) {
    HdpState a = make_hdp_state(1, groups, pr, 1.0, 1.0, static_cast<std::uint64_t>(r));
    HdpState b = a;
    gibbs_sweep_exact(a, x, SweepOptions{});
    gibbs_sweep_fast(b, x, offsets, SweepOptions{});
    c_exact[std::min<std::size_t>(a.num_states(), 7)] += 1.0 / runs;
    c_fast[std::min<std::size_t>(b.num_states(), 7)] += 1.0 / runs;
  }
  double tv = 0;
  for (std::size_t c = 0; c < 8; ++c) tv += 0.5 * std::abs(c_exact[c] - c_fast[c]);
  EXPECT_LT(tv, 0.06);
}

TEST(TrainIcgmm, ZeroSweepsIsError) {
  const Dataset d = dt::random_dataset(1, 3, 5, 2);
  IcgmmConfig cfg;
  cfg.sweeps = 0;
  EXPECT_THROW(train_icgmm_layer(d, nullptr, 0, cfg), ConfigError);
}

TEST(TrainIcgmm, DeterministicGivenSeed) {
  const Dataset d = dt::random_dataset(2, 20, 10, 3);
  IcgmmConfig cfg;
  cfg.sweeps = 10;
  cfg.seed = 5;
  cfg.auto_hyper = true;
  const auto a = train_icgmm_layer(d, nullptr, 0, cfg);
  const auto b = train_icgmm_layer(d, nullptr, 0, cfg);
  EXPECT_EQ(a.c_trajectory, b.c_trajectory);
  EXPECT_EQ(a.alpha0_trajectory, b.alpha0_trajectory);
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.posterior, b.posterior);
  EXPECT_EQ(a.c_trajectory.size(), 10u);
}

TEST(TrainIcgmm, ZeroConcentrationKeepsOneState) {
  const Dataset d = dt::random_dataset(3, 10, 10, 3);
  IcgmmConfig cfg;
  cfg.sweeps = 5;
  cfg.alpha0 = 0.0;
  const auto r = train_icgmm_layer(d, nullptr, 0, cfg);
  for (auto c : r.c_trajectory) EXPECT_EQ(c, 1u);
}

TEST(TrainIcgmm, RecoversThreeGaussians) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset d = dt::gaussian_mixture_dataset(1000 + seed, 600, {-8.0, 0.0, 8.0}, 1.0);
    IcgmmConfig cfg;
    cfg.sweeps = 60;
    cfg.seed = seed;
    const auto r = train_icgmm_layer(d, nullptr, 0, cfg);
    if (r.state.num_states() >= 2 && r.state.num_states() <= 4) ++hits;
  }
  EXPECT_GE(hits, 4);
}

TEST(InferIcgmm, SingleStateAndSupport) {
  const std::vector<std::uint32_t> groups = {0, 0, 0};
  HdpState s = make_hdp_state(1, groups, single_symbol_prior(), 1.0, 1.0, 3);
  const std::vector<double> x(3, 0.0);
  gibbs_sweep_exact(s, x, SweepOptions{});
  ASSERT_EQ(s.num_states(), 1u);
  const FrozenPosterior p = infer_icgmm(s, x, groups, PosteriorMode::kContinuous, 0);
  for (double v : p.values) EXPECT_EQ(v, 1.0);

  const Dataset d = dt::random_dataset(4, 10, 10, 3);
  IcgmmConfig cfg;
  cfg.sweeps = 5;
  const auto r = train_icgmm_layer(d, nullptr, 0, cfg);
  const auto gs = select_groups(d, nullptr);
  const FrozenPosterior hot = infer_icgmm(r.state, d.vertex_features(), gs, PosteriorMode::kOneHot, 0);
  for (std::size_t u = 0; u < hot.rows(); ++u) {
    std::size_t c = 0;
    while (hot.row(u)[c] != 1.0) ++c;
    EXPECT_GT(r.state.n[gs[u]][c] + (gs[u] == 0 ? 0 : 1), 0u);
  }
}

TEST(InferIcgmm, TwoStatesTwoGroupsByHand) {
  EmissionPrior pr;
  pr.kind = FeatureKind::kDiscrete;
  pr.alphabet = 2;
  const std::vector<std::uint32_t> none;
  HdpState s = make_hdp_state(2, none, pr, 2.0, 1.0, 0);
  Rng rng(0);
  add_state(s, HdpTheta{{0.7, 0.3}, 0, 1}, rng);
  add_state(s, HdpTheta{{0.2, 0.8}, 0, 1}, rng);
  s.beta = {0.5, 0.3, 0.2};
  s.n = {{3, 1}, {0, 4}};
  const std::vector<double> x = {0, 1};
  const std::vector<std::uint32_t> groups = {0, 1};
  const FrozenPosterior p = infer_icgmm(s, x, groups, PosteriorMode::kContinuous, 1);
  // Vertex 0: group 0, x = 0 -> (2*0.5+3)*0.7, (2*0.3+1)*0.2.
  const double a0 = 4.0 * 0.7, a1 = 1.6 * 0.2;
  EXPECT_NEAR(p.row(0)[0], a0 / (a0 + a1), 1e-15);
  // Vertex 1: group 1, x = 1 -> (1)*0.3, (4.6)*0.8.
  const double b0 = 1.0 * 0.3, b1 = 4.6 * 0.8;
  EXPECT_NEAR(p.row(1)[1], b1 / (b0 + b1), 1e-15);
}

TEST(HdpIo, SaveLoadRoundTrip) {
  dt::TempDir dir;
  const Dataset d = dt::random_dataset(6, 10, 10, 3);
  IcgmmConfig cfg;
  cfg.sweeps = 3;
  const auto r = train_icgmm_layer(d, nullptr, 0, cfg);
  save_hdp_state(r.state, dir.file("h.bin"));
  EXPECT_EQ(load_hdp_state(dir.file("h.bin")), r.state);
}
