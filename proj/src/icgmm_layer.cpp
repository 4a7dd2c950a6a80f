#include "dbgn/icgmm_layer.hpp"

#include <cfloat>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "dbgn/binary_io.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/numeric.hpp"
#include "dbgn/parallel.hpp"

namespace dbgn {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint32_t kHdpVersion = 1;

void floor_beta(std::vector<double>& beta) {
  for (double& b : beta) b = std::max(b, DBL_MIN);
}

// Draws an index from log-weights over C existing states plus the
// innovation slot. When every weight vanishes: existing states by beta_c f,
// then by f alone, then a new state.
std::size_t choose_dish(std::span<double> logw, const HdpState& s, std::span<const double> logf, Rng& rng) {
  const std::size_t c = s.num_states();
  double m = kNegInf;
  for (double v : logw) m = std::max(m, v);
  if (m == kNegInf) {
    for (std::size_t i = 0; i < c; ++i) logw[i] = std::log(s.beta[i]) + logf[i];
    logw[c] = kNegInf;
    for (std::size_t i = 0; i <= c; ++i) m = std::max(m, logw[i]);
    if (m == kNegInf) {
      for (std::size_t i = 0; i < c; ++i) logw[i] = logf[i];
      for (std::size_t i = 0; i < c; ++i) m = std::max(m, logw[i]);
    }
    if (m == kNegInf) return c;
  }
  std::vector<double> w(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) w[i] = std::exp(logw[i] - m);
  const std::size_t pick = sample_categorical(rng, w);
  return pick < w.size() ? pick : c;
}

double gaussian_log_f(double mu, double tau, double x) {
  return 0.5 * std::log(tau) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * tau * (x - mu) * (x - mu);
}

void remove_customer(HdpState& s, std::size_t u) {
  if (s.q[u] < 0) return;
  const std::size_t j = s.group[u];
  --s.n[j][static_cast<std::size_t>(s.q[u])];
  --s.tables[j][static_cast<std::size_t>(s.t[u])].customers;
  s.q[u] = -1;
  s.t[u] = -1;
}

void seat_customer(HdpState& s, std::size_t u, std::size_t c, Rng& rng) {
  const std::size_t j = s.group[u];
  s.q[u] = static_cast<std::int64_t>(c);
  ++s.n[j][c];
  std::size_t t = sample_table(s, j, c, rng);
  if (t == s.tables[j].size()) {
    s.tables[j].push_back({static_cast<std::uint32_t>(c), 0});
    ++s.m[j][c];
  }
  ++s.tables[j][t].customers;
  s.t[u] = static_cast<std::int64_t>(t);
}

void end_of_sweep(HdpState& s, std::span<const double> features, Rng& rng, const SweepOptions& opt) {
  prune(s);
  sample_beta(s, rng);
  sample_emissions(s, features, rng);
  if (opt.auto_hyper) {
    sample_alpha0(s, rng);
    sample_gamma(s, rng);
  }
  s.rng_state = rng.state();
  if (opt.check_invariants) s.check_invariants();
}

}  // namespace

void EmissionPrior::validate() const {
  if (kind == FeatureKind::kDiscrete) {
    if (!(eta > 0.0)) throw ConfigError("Dirichlet prior needs eta > 0");
    if (alphabet == 0) throw ConfigError("Dirichlet prior needs K >= 1");
  } else if (!(lambda0 > 0.0) || !(a0 > 0.0) || !(b0 > 0.0)) {
    throw ConfigError("Normal-Gamma prior needs lambda0, a0, b0 > 0");
  }
  if (!(alpha_a > 0.0) || !(alpha_b > 0.0) || !(gamma_a > 0.0) || !(gamma_b > 0.0)) {
    throw ConfigError("concentration hyper-priors need positive shape and rate");
  }
}

double theta_log_f(const EmissionPrior& prior, const HdpTheta& th, double x) {
  if (prior.kind == FeatureKind::kDiscrete) {
    const auto k = static_cast<std::size_t>(x);
    if (k >= th.probs.size()) return kNegInf;
    return std::log(th.probs[k]);
  }
  return gaussian_log_f(th.mu, th.tau, x);
}

double HdpState::log_f(double x, std::size_t c) const { return theta_log_f(prior, theta[c], x); }

HdpTheta draw_prior_theta(const EmissionPrior& prior, Rng& rng) {
  HdpTheta th;
  if (prior.kind == FeatureKind::kDiscrete) {
    const std::vector<double> eta(prior.alphabet, prior.eta);
    th.probs = sample_dirichlet(rng, eta);
  } else {
    th.tau = std::max(sample_gamma(rng, prior.a0, prior.b0), DBL_MIN);
    th.mu = sample_normal(rng, prior.mu0, 1.0 / std::sqrt(prior.lambda0 * th.tau));
  }
  return th;
}

HdpState make_hdp_state(std::size_t num_groups, std::span<const std::uint32_t> groups, const EmissionPrior& prior,
                        double alpha0, double gamma, std::uint64_t seed) {
  if (num_groups == 0) throw ConfigError("HDP layer needs at least one group");
  if (!(alpha0 >= 0.0) || !(gamma > 0.0)) throw ConfigError("need alpha0 >= 0 and gamma > 0");
  prior.validate();
  HdpState s;
  s.num_groups = num_groups;
  s.beta = {1.0};
  s.n.assign(num_groups, {});
  s.m.assign(num_groups, {});
  s.tables.assign(num_groups, {});
  s.alpha0 = alpha0;
  s.gamma = gamma;
  s.prior = prior;
  s.group.assign(groups.begin(), groups.end());
  for (auto j : s.group) {
    if (j >= num_groups) throw ConfigError("group id out of range");
  }
  s.q.assign(groups.size(), -1);
  s.t.assign(groups.size(), -1);
  s.rng_state = seed;
  return s;
}

std::vector<std::uint32_t> select_groups(const Dataset& d, const FrozenPosterior* frozen) {
  std::vector<std::uint32_t> out(d.total_vertices(), 0);
  if (frozen == nullptr) return out;
  if (frozen->rows() != d.total_vertices()) throw ConfigError("frozen posterior row count differs from dataset");
  const std::size_t w = frozen->width;
  const auto off = d.vertex_offsets();
  std::vector<double> scratch;
  std::vector<double> mean(w);
  for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
    const Graph& g = d.graphs[gi];
    const NeighborIndex idx = build_neighbor_index(g, d.edge_alphabet);
    for (VertexId u = 0; u < g.num_vertices; ++u) {
      std::vector<VertexId> nbrs;
      for (std::size_t a = 0; a < d.edge_alphabet; ++a) {
        const auto nb = idx.in_neighbors(u, static_cast<EdgeLabel>(a));
        nbrs.insert(nbrs.end(), nb.begin(), nb.end());
      }
      if (nbrs.empty()) continue;
      for (std::size_t j = 0; j < w; ++j) {
        scratch.clear();
        for (VertexId v : nbrs) scratch.push_back(frozen->values[(off[gi] + v) * w + j]);
        mean[j] = canonical_sum(scratch) / static_cast<double>(nbrs.size());
      }
      out[off[gi] + u] = static_cast<std::uint32_t>(argmax_lowest(mean));
    }
  }
  return out;
}

DishDraw sample_dish(const HdpState& s, std::size_t j, double x, Rng& rng) {
  const std::size_t c = s.num_states();
  std::vector<double> logw(c + 1), logf(c + 1);
  for (std::size_t i = 0; i < c; ++i) {
    const double base = s.alpha0 * s.beta[i] + static_cast<double>(s.n[j][i]);
    logf[i] = s.log_f(x, i);
    logw[i] = base > 0.0 ? std::log(base) + logf[i] : kNegInf;
  }
  DishDraw out;
  out.theta_new = draw_prior_theta(s.prior, rng);
  const double inn = s.alpha0 * s.beta[c];
  logf[c] = theta_log_f(s.prior, out.theta_new, x);
  logw[c] = inn > 0.0 ? std::log(inn) + logf[c] : kNegInf;
  out.index = choose_dish(logw, s, logf, rng);
  return out;
}

void add_state(HdpState& s, HdpTheta th, Rng& rng) {
  const double b = sample_beta(rng, 1.0, s.gamma);
  const double rest = s.beta.back();
  s.beta.back() = b * rest;
  s.beta.push_back((1.0 - b) * rest);
  floor_beta(s.beta);
  for (auto& row : s.n) row.push_back(0);
  for (auto& row : s.m) row.push_back(0);
  s.theta.push_back(std::move(th));
  s.state_id.push_back(s.next_state_id++);
}

std::size_t sample_table(const HdpState& s, std::size_t j, std::size_t c, Rng& rng) {
  const auto& tabs = s.tables[j];
  std::vector<double> w(tabs.size() + 1, 0.0);
  for (std::size_t t = 0; t < tabs.size(); ++t) {
    if (tabs[t].dish == c) w[t] = static_cast<double>(tabs[t].customers);
  }
  w.back() = s.alpha0 * s.beta[c];
  const std::size_t pick = sample_categorical(rng, w);
  return pick < w.size() ? pick : tabs.size();
}

void sample_beta(HdpState& s, Rng& rng) {
  const std::size_t c = s.num_states();
  std::vector<double> alpha(c + 1, 0.0);
  for (std::size_t j = 0; j < s.num_groups; ++j) {
    for (std::size_t i = 0; i < c; ++i) alpha[i] += static_cast<double>(s.m[j][i]);
  }
  alpha[c] = s.gamma;
  s.beta = sample_dirichlet(rng, alpha);
  floor_beta(s.beta);
}

void sample_emissions(HdpState& s, std::span<const double> features, Rng& rng) {
  const std::size_t c = s.num_states();
  const EmissionPrior& pr = s.prior;
  if (pr.kind == FeatureKind::kDiscrete) {
    std::vector<std::vector<double>> counts(c, std::vector<double>(pr.alphabet, pr.eta));
    for (std::size_t u = 0; u < s.q.size(); ++u) {
      if (s.q[u] >= 0) counts[static_cast<std::size_t>(s.q[u])][static_cast<std::size_t>(features[u])] += 1.0;
    }
    for (std::size_t i = 0; i < c; ++i) s.theta[i].probs = sample_dirichlet(rng, counts[i]);
    return;
  }
  std::vector<double> cnt(c, 0.0), sum(c, 0.0), ss(c, 0.0);
  for (std::size_t u = 0; u < s.q.size(); ++u) {
    if (s.q[u] < 0) continue;
    cnt[static_cast<std::size_t>(s.q[u])] += 1.0;
    sum[static_cast<std::size_t>(s.q[u])] += features[u];
  }
  std::vector<double> mean(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) mean[i] = cnt[i] > 0.0 ? sum[i] / cnt[i] : 0.0;
  for (std::size_t u = 0; u < s.q.size(); ++u) {
    if (s.q[u] < 0) continue;
    const auto i = static_cast<std::size_t>(s.q[u]);
    ss[i] += (features[u] - mean[i]) * (features[u] - mean[i]);
  }
  for (std::size_t i = 0; i < c; ++i) {
    const double nc = cnt[i];
    if (nc == 0.0) {
      s.theta[i] = draw_prior_theta(pr, rng);
      continue;
    }
    const double var = ss[i] / nc;
    const double dev = mean[i] - pr.mu0;
    const double shape = pr.a0 + nc / 2.0;
    const double rate = pr.b0 + 0.5 * (nc * var + pr.lambda0 * nc * dev * dev / (pr.lambda0 + nc));
    const double tau = std::max(sample_gamma(rng, shape, rate), DBL_MIN);
    const double mu_n = (pr.lambda0 * pr.mu0 + nc * mean[i]) / (pr.lambda0 + nc);
    s.theta[i].tau = tau;
    s.theta[i].mu = sample_normal(rng, mu_n, 1.0 / std::sqrt((pr.lambda0 + nc) * tau));
  }
}

void sample_alpha0(HdpState& s, Rng& rng) {
  double sum_s = 0.0, sum_log_w = 0.0, tables = 0.0;
  for (std::size_t j = 0; j < s.num_groups; ++j) {
    for (auto mc : s.m[j]) tables += static_cast<double>(mc);
    double nj = 0.0;
    for (auto v : s.n[j]) nj += static_cast<double>(v);
    if (nj == 0.0) continue;
    const double w = sample_beta(rng, s.alpha0 + 1.0, nj);
    sum_log_w += std::log(std::max(w, DBL_MIN));
    if (rng.uniform() < nj / (nj + s.alpha0)) sum_s += 1.0;
  }
  s.alpha0 = sample_gamma(rng, s.prior.alpha_a + tables - sum_s, s.prior.alpha_b - sum_log_w);
}

void sample_gamma(HdpState& s, Rng& rng) {
  double tables = 0.0;
  for (std::size_t j = 0; j < s.num_groups; ++j) {
    for (auto mc : s.m[j]) tables += static_cast<double>(mc);
  }
  const double r = sample_beta(rng, s.gamma + 1.0, tables);
  const double p = rng.uniform() < tables / (tables + s.gamma) ? 1.0 : 0.0;
  s.gamma = std::max(sample_gamma(rng, s.prior.gamma_a + static_cast<double>(s.num_states()) - p,
                                  s.prior.gamma_b - std::log(std::max(r, DBL_MIN))),
                     DBL_MIN);
}

void prune(HdpState& s) {
  // Empty tables first.
  std::vector<std::vector<std::int64_t>> table_map(s.num_groups);
  for (std::size_t j = 0; j < s.num_groups; ++j) {
    std::vector<HdpTable> kept;
    table_map[j].assign(s.tables[j].size(), -1);
    for (std::size_t t = 0; t < s.tables[j].size(); ++t) {
      const HdpTable& tab = s.tables[j][t];
      if (tab.customers == 0) {
        --s.m[j][tab.dish];
        continue;
      }
      table_map[j][t] = static_cast<std::int64_t>(kept.size());
      kept.push_back(tab);
    }
    s.tables[j] = std::move(kept);
  }
  for (std::size_t u = 0; u < s.q.size(); ++u) {
    if (s.t[u] >= 0) s.t[u] = table_map[s.group[u]][static_cast<std::size_t>(s.t[u])];
  }

  // Then dishes nobody eats.
  const std::size_t c = s.num_states();
  std::vector<std::int64_t> dish_map(c, -1);
  std::size_t kept = 0;
  double freed = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    std::uint64_t total = 0;
    for (std::size_t j = 0; j < s.num_groups; ++j) total += s.n[j][i];
    if (total == 0) {
      freed += s.beta[i];
      continue;
    }
    dish_map[i] = static_cast<std::int64_t>(kept++);
  }
  if (kept == c) return;
  auto compact = [&](auto& vec) {
    std::remove_reference_t<decltype(vec)> out;
    for (std::size_t i = 0; i < c; ++i) {
      if (dish_map[i] >= 0) out.push_back(vec[i]);
    }
    vec = std::move(out);
  };
  for (std::size_t j = 0; j < s.num_groups; ++j) {
    compact(s.n[j]);
    compact(s.m[j]);
    for (auto& tab : s.tables[j]) tab.dish = static_cast<std::uint32_t>(dish_map[tab.dish]);
  }
  compact(s.theta);
  compact(s.state_id);
  const double rest = s.beta.back() + freed;
  s.beta.pop_back();
  compact(s.beta);
  s.beta.push_back(rest);
  for (auto& q : s.q) {
    if (q >= 0) q = dish_map[static_cast<std::size_t>(q)];
  }
}

void initialize_assignments(HdpState& s, std::span<const double> features, std::size_t k, Rng& rng) {
  if (k == 0) return;
  for (std::size_t i = 0; i < k; ++i) add_state(s, draw_prior_theta(s.prior, rng), rng);
  for (std::size_t u = 0; u < s.q.size(); ++u) {
    remove_customer(s, u);
    const auto c = std::min(k - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(k)));
    seat_customer(s, u, s.num_states() - k + c, rng);
  }
  prune(s);
  sample_beta(s, rng);
  sample_emissions(s, features, rng);
}

void HdpState::check_invariants() const {
  auto fail = [&](const std::string& what) { throw ConsistencyError("HDP invariant violated: " + what + "\n" + dump()); };
  const std::size_t c = num_states();
  if (beta.size() != c + 1) fail("beta has wrong length");
  if (state_id.size() != c) fail("state id list has wrong length");
  if (n.size() != num_groups || m.size() != num_groups || tables.size() != num_groups) fail("group arrays");
  for (std::size_t j = 0; j < num_groups; ++j) {
    if (n[j].size() != c || m[j].size() != c) fail("count rows have wrong length in group " + std::to_string(j));
  }
  std::vector<std::vector<std::uint64_t>> n_rec(num_groups, std::vector<std::uint64_t>(c, 0));
  std::vector<std::vector<std::uint64_t>> occ(num_groups);
  for (std::size_t j = 0; j < num_groups; ++j) occ[j].assign(tables[j].size(), 0);
  std::uint64_t assigned = 0;
  for (std::size_t u = 0; u < q.size(); ++u) {
    if (q[u] < 0) {
      if (t[u] >= 0) fail("vertex " + std::to_string(u) + " has a table but no dish");
      continue;
    }
    const std::size_t j = group[u];
    if (static_cast<std::size_t>(q[u]) >= c) fail("vertex " + std::to_string(u) + " eats an unknown dish");
    if (t[u] < 0 || static_cast<std::size_t>(t[u]) >= tables[j].size()) {
      fail("vertex " + std::to_string(u) + " sits at an unknown table");
    }
    if (tables[j][static_cast<std::size_t>(t[u])].dish != static_cast<std::uint64_t>(q[u])) {
      fail("vertex " + std::to_string(u) + " sits at a table serving another dish");
    }
    ++n_rec[j][static_cast<std::size_t>(q[u])];
    ++occ[j][static_cast<std::size_t>(t[u])];
    ++assigned;
  }
  std::uint64_t total = 0;
  for (std::size_t j = 0; j < num_groups; ++j) {
    std::uint64_t nj = 0, tj = 0;
    std::vector<std::uint64_t> m_rec(c, 0);
    for (std::size_t i = 0; i < c; ++i) {
      if (n[j][i] != n_rec[j][i]) fail("n[" + std::to_string(j) + "][" + std::to_string(i) + "] disagrees with q");
      nj += n[j][i];
    }
    for (std::size_t tt = 0; tt < tables[j].size(); ++tt) {
      if (tables[j][tt].customers != occ[j][tt]) fail("table occupancy disagrees with t in group " + std::to_string(j));
      if (tables[j][tt].dish >= c) fail("table serves an unknown dish");
      tj += tables[j][tt].customers;
      if (tables[j][tt].customers > 0) ++m_rec[tables[j][tt].dish];
    }
    if (nj != tj) fail("customers at tables differ from dish counts in group " + std::to_string(j));
    for (std::size_t i = 0; i < c; ++i) {
      if (m[j][i] != m_rec[i]) fail("m[" + std::to_string(j) + "][" + std::to_string(i) + "] disagrees with tables");
    }
    total += nj;
  }
  if (total != assigned) fail("total customers differ from assigned vertices");
  for (std::size_t i = 0; i < c; ++i) {
    std::uint64_t ni = 0;
    for (std::size_t j = 0; j < num_groups; ++j) ni += n[j][i];
    if (ni == 0) fail("state " + std::to_string(i) + " kept without customers");
  }
  double bs = 0.0;
  for (double b : beta) {
    if (!(b > 0.0)) fail("non-positive beta entry");
    bs += b;
  }
  if (std::abs(bs - 1.0) > 1e-9) fail("beta does not sum to 1");
  for (std::size_t i = 0; i < c; ++i) {
    if (prior.kind == FeatureKind::kDiscrete) {
      double ps = 0.0;
      for (double p : theta[i].probs) ps += p;
      if (theta[i].probs.size() != prior.alphabet || std::abs(ps - 1.0) > 1e-9) fail("emission off the simplex");
    } else if (!(theta[i].tau > 0.0) || !std::isfinite(theta[i].mu)) {
      fail("invalid Gaussian emission");
    }
  }
}

std::string HdpState::dump() const {
  std::ostringstream os;
  os << "C=" << num_states() << " groups=" << num_groups << " alpha0=" << alpha0 << " gamma=" << gamma << "\nbeta:";
  for (double b : beta) os << ' ' << b;
  for (std::size_t j = 0; j < num_groups; ++j) {
    os << "\ngroup " << j << " n:";
    for (auto v : n[j]) os << ' ' << v;
    os << " m:";
    for (auto v : m[j]) os << ' ' << v;
    os << " tables:";
    for (const auto& tab : tables[j]) os << " (" << tab.dish << ',' << tab.customers << ')';
  }
  return os.str();
}

void gibbs_sweep_exact(HdpState& s, std::span<const double> features, const SweepOptions& opt) {
  if (features.size() != s.q.size()) throw ConfigError("feature count differs from sampler size");
  Rng rng(s.rng_state);
  for (std::size_t u = 0; u < s.q.size(); ++u) {
    remove_customer(s, u);
    DishDraw draw = sample_dish(s, s.group[u], features[u], rng);
    if (draw.index == s.num_states()) add_state(s, std::move(draw.theta_new), rng);
    seat_customer(s, u, draw.index, rng);
  }
  end_of_sweep(s, features, rng, opt);
}

void gibbs_sweep_fast(HdpState& s, std::span<const double> features, std::span<const std::size_t> graph_offsets,
                      const SweepOptions& opt) {
  if (features.size() != s.q.size()) throw ConfigError("feature count differs from sampler size");
  if (graph_offsets.empty() || graph_offsets.back() != s.q.size()) throw ConfigError("graph offsets do not cover the data");
  Rng rng(s.rng_state);
  const bool discrete = s.prior.kind == FeatureKind::kDiscrete;
  std::vector<std::size_t> choice;
  std::vector<std::vector<double>> log_base(s.num_groups);
  std::vector<char> need(s.num_groups);

  for (std::size_t gi = 0; gi + 1 < graph_offsets.size(); ++gi) {
    const std::size_t begin = graph_offsets[gi], end = graph_offsets[gi + 1];
    if (begin == end) continue;
    const std::uint64_t batch_seed = rng();
    for (std::size_t u = begin; u < end; ++u) remove_customer(s, u);

    const std::size_t c = s.num_states();
    Rng theta_rng(derive_seed(batch_seed, {0}));
    const HdpTheta theta_new = draw_prior_theta(s.prior, theta_rng);

    // Snapshot of log(alpha0 beta_c + n_jc) for the groups in this batch.
    std::fill(need.begin(), need.end(), 0);
    for (std::size_t u = begin; u < end; ++u) need[s.group[u]] = 1;
    for (std::size_t j = 0; j < s.num_groups; ++j) {
      if (!need[j]) continue;
      log_base[j].resize(c + 1);
      for (std::size_t i = 0; i < c; ++i) {
        const double b = s.alpha0 * s.beta[i] + static_cast<double>(s.n[j][i]);
        log_base[j][i] = b > 0.0 ? std::log(b) : kNegInf;
      }
      const double inn = s.alpha0 * s.beta[c];
      log_base[j][c] = inn > 0.0 ? std::log(inn) : kNegInf;
    }
    std::vector<double> cat_log;  // K x (C + 1)
    std::vector<double> norm_log;  // C + 1 Gaussian log-normalizers
    if (!discrete) {
      const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
      norm_log.resize(c + 1);
      for (std::size_t i = 0; i < c; ++i) norm_log[i] = 0.5 * std::log(s.theta[i].tau) - half_log_2pi;
      norm_log[c] = 0.5 * std::log(theta_new.tau) - half_log_2pi;
    }
    if (discrete) {
      const std::size_t k = s.prior.alphabet;
      cat_log.resize(k * (c + 1));
      for (std::size_t x = 0; x < k; ++x) {
        for (std::size_t i = 0; i < c; ++i) cat_log[x * (c + 1) + i] = std::log(s.theta[i].probs[x]);
        cat_log[x * (c + 1) + c] = std::log(theta_new.probs[x]);
      }
    }

    choice.assign(end - begin, 0);
    auto draw_range = [&](std::size_t lo, std::size_t hi) {
      std::vector<double> logw(c + 1), logf(c + 1);
      for (std::size_t u = lo; u < hi; ++u) {
        const double x = features[u];
        if (discrete) {
          const auto xi = static_cast<std::size_t>(x);
          std::copy_n(cat_log.begin() + static_cast<std::ptrdiff_t>(xi * (c + 1)), c + 1, logf.begin());
        } else {
          for (std::size_t i = 0; i < c; ++i) {
            const double z = x - s.theta[i].mu;
            logf[i] = norm_log[i] - 0.5 * s.theta[i].tau * z * z;
          }
          const double z = x - theta_new.mu;
          logf[c] = norm_log[c] - 0.5 * theta_new.tau * z * z;
        }
        const auto& lb = log_base[s.group[u]];
        for (std::size_t i = 0; i <= c; ++i) logw[i] = lb[i] + logf[i];
        Rng vr(derive_seed(batch_seed, {1, u - begin}));
        choice[u - begin] = choose_dish(logw, s, logf, vr);
      }
    };
    const std::size_t rows = end - begin;
    if (opt.workers > 1 && rows >= 256) {
      const std::size_t chunk = 64;
      const std::size_t tasks = (rows + chunk - 1) / chunk;
      parallel_tasks(tasks, opt.workers, [&](std::size_t tsk) {
        draw_range(begin + tsk * chunk, std::min(end, begin + (tsk + 1) * chunk));
      });
    } else {
      draw_range(begin, end);
    }

    bool any_new = false;
    for (std::size_t ch : choice) any_new |= ch == c;
    if (any_new) add_state(s, theta_new, rng);
    for (std::size_t u = begin; u < end; ++u) seat_customer(s, u, choice[u - begin], rng);
  }
  end_of_sweep(s, features, rng, opt);
}

FrozenPosterior infer_icgmm(const HdpState& s, std::span<const double> features, std::span<const std::uint32_t> groups,
                            PosteriorMode mode, int layer) {
  if (groups.size() != features.size()) throw ConfigError("group and feature counts differ");
  const std::size_t c = s.num_states();
  if (c == 0) throw ConfigError("iCGMM state has no states; train it first");
  FrozenPosterior out;
  out.layer = layer;
  out.width = c;
  out.values.assign(features.size() * c, 0.0);
  std::vector<double> lw(c), lf(c);
  for (std::size_t u = 0; u < features.size(); ++u) {
    const std::size_t j = groups[u];
    if (j >= s.num_groups) throw ConfigError("group id out of range during inference");
    double m = kNegInf, mf = kNegInf;
    for (std::size_t i = 0; i < c; ++i) {
      lf[i] = s.log_f(features[u], i);
      const double b = s.alpha0 * s.beta[i] + static_cast<double>(s.n[j][i]);
      lw[i] = b > 0.0 ? std::log(b) + lf[i] : kNegInf;
      m = std::max(m, lw[i]);
      mf = std::max(mf, lf[i]);
    }
    if (m == kNegInf) {
      lw = lf;
      m = mf;
    }
    auto row = out.row(u);
    if (m == kNegInf) {
      for (auto& v : row) v = 1.0 / static_cast<double>(c);
      continue;
    }
    double z = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      row[i] = std::exp(lw[i] - m);
      z += row[i];
    }
    for (auto& v : row) v /= z;
  }
  return mode == PosteriorMode::kOneHot ? out.one_hot() : out;
}

IcgmmLayerResult train_icgmm_layer(const Dataset& d, const FrozenPosterior* frozen_prev, int layer,
                                   const IcgmmConfig& cfg) {
  if (cfg.sweeps <= 0) throw ConfigError("iCGMM needs at least one Gibbs sweep");
  const std::vector<double> x = d.vertex_features();
  if (x.empty()) throw ConfigError("iCGMM on an empty dataset");
  const std::vector<std::uint32_t> groups = select_groups(d, frozen_prev);
  const std::size_t num_groups = frozen_prev ? frozen_prev->width : 1;

  EmissionPrior prior = cfg.prior;
  prior.kind = d.feature_kind;
  prior.alphabet = d.feature_kind == FeatureKind::kDiscrete ? d.vertex_alphabet : 0;
  if (prior.kind == FeatureKind::kContinuous && cfg.mu0_from_data) {
    double sum = 0.0;
    for (double v : x) sum += v;
    prior.mu0 = sum / static_cast<double>(x.size());
  }
  const std::uint64_t seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(layer)});

  IcgmmLayerResult res;
  res.state = make_hdp_state(num_groups, groups, prior, cfg.alpha0, cfg.gamma, seed);
  if (cfg.initial_states > 0) {
    Rng init_rng(derive_seed(seed, {2}));
    initialize_assignments(res.state, x, cfg.initial_states, init_rng);
  }
  const std::vector<std::size_t> offsets = d.vertex_offsets();
  SweepOptions opt;
  opt.auto_hyper = cfg.auto_hyper;
  opt.check_invariants = cfg.check_invariants;
  opt.workers = cfg.workers;

  std::map<std::uint64_t, std::vector<double>> averaged;
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.fast) {
      gibbs_sweep_fast(res.state, x, offsets, opt);
    } else {
      gibbs_sweep_exact(res.state, x, opt);
    }
    res.sweep_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    res.c_trajectory.push_back(res.state.num_states());
    res.alpha0_trajectory.push_back(res.state.alpha0);
    res.gamma_trajectory.push_back(res.state.gamma);
    if (cfg.burn_in >= 0 && sweep >= cfg.burn_in && (sweep - cfg.burn_in) % std::max(1, cfg.thin) == 0) {
      const FrozenPosterior p = infer_icgmm(res.state, x, groups, PosteriorMode::kContinuous, layer);
      for (std::size_t i = 0; i < p.width; ++i) {
        auto& col = averaged[res.state.state_id[i]];
        col.resize(x.size(), 0.0);
        for (std::size_t u = 0; u < x.size(); ++u) col[u] += p.values[u * p.width + i];
      }
    }
  }

  res.posterior = infer_icgmm(res.state, x, groups, PosteriorMode::kContinuous, layer);
  if (!averaged.empty()) {
    const std::size_t c = res.posterior.width;
    FrozenPosterior avg = res.posterior;
    for (std::size_t u = 0; u < x.size(); ++u) {
      double z = 0.0;
      for (std::size_t i = 0; i < c; ++i) {
        const auto it = averaged.find(res.state.state_id[i]);
        avg.values[u * c + i] = it == averaged.end() ? 0.0 : it->second[u];
        z += avg.values[u * c + i];
      }
      if (z > 0.0) {
        for (std::size_t i = 0; i < c; ++i) avg.values[u * c + i] /= z;
      } else {
        for (std::size_t i = 0; i < c; ++i) avg.values[u * c + i] = res.posterior.values[u * c + i];
      }
    }
    res.posterior = std::move(avg);
  }
  if (cfg.mode == PosteriorMode::kOneHot) res.posterior = res.posterior.one_hot();
  return res;
}

void save_hdp_state(const HdpState& s, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("DBGNHDP1");
  w.u32(kHdpVersion);
  const EmissionPrior& p = s.prior;
  w.u32(p.kind == FeatureKind::kDiscrete ? 0 : 1);
  w.u64(p.alphabet);
  for (double v : {p.eta, p.mu0, p.lambda0, p.a0, p.b0, p.alpha_a, p.alpha_b, p.gamma_a, p.gamma_b}) w.f64(v);
  w.u64(s.num_groups);
  w.u64(s.num_states());
  w.f64(s.alpha0);
  w.f64(s.gamma);
  w.u64(s.rng_state);
  w.u64(s.next_state_id);
  w.f64s(s.beta);
  for (std::size_t i = 0; i < s.num_states(); ++i) {
    w.u64(s.state_id[i]);
    if (p.kind == FeatureKind::kDiscrete) {
      w.f64s(s.theta[i].probs);
    } else {
      w.f64(s.theta[i].mu);
      w.f64(s.theta[i].tau);
    }
  }
  for (std::size_t j = 0; j < s.num_groups; ++j) {
    for (auto v : s.n[j]) w.u64(v);
    for (auto v : s.m[j]) w.u64(v);
    w.u64(s.tables[j].size());
    for (const auto& tab : s.tables[j]) {
      w.u32(tab.dish);
      w.u64(tab.customers);
    }
  }
  w.u64(s.q.size());
  for (std::size_t u = 0; u < s.q.size(); ++u) {
    w.u64(static_cast<std::uint64_t>(s.q[u]));
    w.u64(static_cast<std::uint64_t>(s.t[u]));
    w.u32(s.group[u]);
  }
  w.close();
}

HdpState load_hdp_state(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("DBGNHDP1");
  r.expect_version(kHdpVersion);
  HdpState s;
  EmissionPrior& p = s.prior;
  p.kind = r.u32() == 0 ? FeatureKind::kDiscrete : FeatureKind::kContinuous;
  p.alphabet = r.u64();
  for (double* v : {&p.eta, &p.mu0, &p.lambda0, &p.a0, &p.b0, &p.alpha_a, &p.alpha_b, &p.gamma_a, &p.gamma_b}) {
    *v = r.f64();
  }
  s.num_groups = r.u64();
  const auto c = r.u64();
  if (s.num_groups > (1u << 24) || c > (1u << 24) || p.alphabet > (1u << 24)) {
    throw IoError("implausible sampler dimensions in " + path);
  }
  s.alpha0 = r.f64();
  s.gamma = r.f64();
  s.rng_state = r.u64();
  s.next_state_id = r.u64();
  s.beta = r.f64s(c + 1);
  s.theta.resize(c);
  s.state_id.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    s.state_id[i] = r.u64();
    if (p.kind == FeatureKind::kDiscrete) {
      s.theta[i].probs = r.f64s(p.alphabet);
    } else {
      s.theta[i].mu = r.f64();
      s.theta[i].tau = r.f64();
    }
  }
  s.n.assign(s.num_groups, std::vector<std::uint64_t>(c));
  s.m.assign(s.num_groups, std::vector<std::uint64_t>(c));
  s.tables.assign(s.num_groups, {});
  for (std::size_t j = 0; j < s.num_groups; ++j) {
    for (auto& v : s.n[j]) v = r.u64();
    for (auto& v : s.m[j]) v = r.u64();
    const auto nt = r.u64();
    if (nt > (1ULL << 32)) throw IoError("implausible table count in " + path);
    s.tables[j].resize(nt);
    for (auto& tab : s.tables[j]) {
      tab.dish = r.u32();
      tab.customers = r.u64();
    }
  }
  const auto nv = r.u64();
  if (nv > (1ULL << 34)) throw IoError("implausible vertex count in " + path);
  s.q.resize(nv);
  s.t.resize(nv);
  s.group.resize(nv);
  for (std::size_t u = 0; u < nv; ++u) {
    s.q[u] = static_cast<std::int64_t>(r.u64());
    s.t[u] = static_cast<std::int64_t>(r.u64());
    s.group[u] = r.u32();
  }
  return s;
}

}  // namespace dbgn
