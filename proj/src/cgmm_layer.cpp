#include "dbgn/cgmm_layer.hpp"

#include <cfloat>
#include <cmath>
#include <limits>
#include <sstream>

#include "dbgn/binary_io.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/parallel.hpp"
#include "json.hpp"

namespace dbgn {
namespace {

constexpr std::uint32_t kLayerVersion = 1;

bool on_simplex(std::span<const double> v, double tol = 1e-9) {
  double s = 0.0;
  for (double x : v) {
    if (!(x >= 0.0)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

// Offsets of the (l, a) blocks inside one row of the full tensor.
struct BlockLayout {
  std::vector<std::size_t> offset;
  std::size_t total = 0;

  explicit BlockLayout(const CgmmLayerParams& p) {
    const std::size_t na = p.num_labels;
    offset.resize(p.layers.size() * na);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (std::size_t a = 0; a < na; ++a) {
        offset[l * na + a] = total;
        total += p.num_states * p.widths[l];
      }
    }
  }
};

// Per-thread scratch for one row.
struct RowWork {
  std::vector<double> em;       // exp(log emission - max)
  std::vector<double> joint;    // normalised full posterior (context rows)
  std::vector<double> zi;       // marginal over states
  std::vector<char> present;    // L x A
  std::vector<double> weight;   // L x A, renormalised SP weights
  std::vector<char> active;     // L
  std::vector<double> layer_norm;  // L, sum of present SP-edge mass
  double active_norm = 0.0;     // sum of SP-layer mass over active layers
  double log_norm = 0.0;
  bool context = false;
  bool clamped = false;

  RowWork(const CgmmLayerParams& p, const BlockLayout& layout)
      : em(p.num_states),
        joint(layout.total),
        zi(p.num_states),
        present(p.layers.size() * p.num_labels),
        weight(p.layers.size() * p.num_labels),
        active(p.layers.size()),
        layer_norm(p.layers.size()) {}
};

// Fills present/weight/active for row u. Returns false when no layer has
// any usable neighbour, in which case the uniform prior applies.
bool context_weights(const CgmmLayerParams& p, const LayerStatistics& stats, std::size_t u, RowWork& w) {
  const std::size_t na = p.num_labels;
  w.active_norm = 0.0;
  bool any = false;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    double norm = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      const bool here = stats.neighbor_count(l, u, a) > 0.0;
      w.present[l * na + a] = here;
      if (here) norm += p.sp_edge[l * na + a];
    }
    w.layer_norm[l] = norm;
    w.active[l] = norm > 0.0;
    if (w.active[l]) {
      w.active_norm += p.sp_layer[l];
      any = true;
    }
  }
  if (!any || !(w.active_norm > 0.0)) return false;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (std::size_t a = 0; a < na; ++a) {
      const std::size_t k = l * na + a;
      w.weight[k] = (w.active[l] && w.present[k])
                        ? (p.sp_layer[l] / w.active_norm) * (p.sp_edge[k] / w.layer_norm[l])
                        : 0.0;
    }
  }
  return true;
}

void check_stats(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats) {
  if (p.is_mixture()) return;
  if (stats == nullptr) throw ConfigError("layer with a context subset needs statistics");
  if (stats->num_layers() != p.layers.size() || stats->num_labels != p.num_labels) {
    throw ConfigError("statistics do not match the layer's subset or label count");
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (stats->widths[l] != p.widths[l]) throw ConfigError("statistics width mismatch");
  }
  if (stats->num_rows != features.size()) throw ConfigError("statistics row count differs from feature count");
}

// Posterior of row u. Fills zi, and joint when the row has context.
void compute_row(const CgmmLayerParams& p, const BlockLayout& layout, std::span<const double> features,
                 const LayerStatistics* stats, std::size_t u, RowWork& w) {
  const std::size_t c = p.num_states;
  const double x = features[u];
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c; ++i) {
    const double e = p.emission.log_prob(x, i);
    if (std::isnan(e)) {
      throw NumericalError("NaN emission log-likelihood at row " + std::to_string(u) + ", state " +
                           std::to_string(i));
    }
    w.em[i] = e;
    m = std::max(m, e);
  }
  w.clamped = false;
  if (m == -std::numeric_limits<double>::infinity()) {
    // Every state gives zero density: treat emissions as flat and floor the likelihood.
    for (auto& e : w.em) e = 1.0;
    m = std::log(DBL_MIN);
    w.clamped = true;
  } else {
    for (auto& e : w.em) e = std::exp(e - m);
  }

  double z = 0.0;
  w.context = !p.is_mixture() && context_weights(p, *stats, u, w);
  if (p.is_mixture()) {
    for (std::size_t i = 0; i < c; ++i) {
      w.zi[i] = w.em[i] * p.prior[i];
      z += w.zi[i];
    }
  } else if (!w.context) {
    for (std::size_t i = 0; i < c; ++i) {
      w.zi[i] = w.em[i] / static_cast<double>(c);
      z += w.zi[i];
    }
  } else {
    std::fill(w.joint.begin(), w.joint.end(), 0.0);
    const std::size_t na = p.num_labels;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const std::size_t wl = p.widths[l];
      for (std::size_t a = 0; a < na; ++a) {
        const std::size_t k = l * na + a;
        if (w.weight[k] == 0.0) continue;
        const auto macro = stats->macro_state(l, u, a);
        const double* t = p.transition[k].data();
        double* out = w.joint.data() + layout.offset[k];
        for (std::size_t i = 0; i < c; ++i) {
          const double f = w.em[i] * w.weight[k];
          for (std::size_t j = 0; j < wl; ++j) {
            const double v = f * t[i * wl + j] * macro[j];
            out[i * wl + j] = v;
            z += v;
          }
        }
      }
    }
  }

  if (std::isnan(z)) throw NumericalError("NaN normaliser at row " + std::to_string(u));
  if (!(z > 0.0) || !std::isfinite(z)) {
    // Context rules out every state the emission allows: fall back to the emission alone.
    double s = 0.0;
    for (std::size_t i = 0; i < c; ++i) s += w.em[i];
    for (std::size_t i = 0; i < c; ++i) w.zi[i] = w.em[i] / s;
    w.context = false;
    w.clamped = true;
    w.log_norm = m + std::log(DBL_MIN);
    return;
  }
  w.log_norm = m + std::log(z);
  if (w.context) {
    for (auto& v : w.joint) v /= z;
    std::fill(w.zi.begin(), w.zi.end(), 0.0);
    const std::size_t na = p.num_labels;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const std::size_t wl = p.widths[l];
      for (std::size_t a = 0; a < na; ++a) {
        const std::size_t k = l * na + a;
        if (w.weight[k] == 0.0) continue;
        const double* blk = w.joint.data() + layout.offset[k];
        for (std::size_t i = 0; i < c; ++i) {
          for (std::size_t j = 0; j < wl; ++j) w.zi[i] += blk[i * wl + j];
        }
      }
    }
  } else {
    for (auto& v : w.zi) v /= z;
  }
}

}  // namespace

LayerShape layer_shape(std::size_t num_states, const LayerStatistics* stats, FeatureKind kind, std::size_t alphabet) {
  LayerShape s;
  s.num_states = num_states;
  s.kind = kind;
  s.alphabet = alphabet;
  if (stats != nullptr) {
    s.layers = stats->layers;
    s.widths = stats->widths;
    s.num_labels = stats->num_labels;
  }
  return s;
}

void CgmmLayerParams::validate() const {
  if (num_states == 0) throw ConfigError("layer with zero states");
  if (layers.empty()) {
    if (prior.size() != num_states || !on_simplex(prior)) throw ConfigError("prior is not a distribution");
  } else {
    if (sp_layer.size() != layers.size() || !on_simplex(sp_layer)) {
      throw ConfigError("layer switching parent is not a distribution");
    }
    if (sp_edge.size() != layers.size() * num_labels) throw ConfigError("edge switching parent has wrong shape");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (!on_simplex({sp_edge.data() + l * num_labels, num_labels})) {
        throw ConfigError("edge switching parent is not a distribution");
      }
      for (std::size_t a = 0; a < num_labels; ++a) {
        const auto& t = transition[l * num_labels + a];
        const std::size_t w = widths[l];
        if (t.size() != num_states * w) throw ConfigError("transition has wrong shape");
        for (std::size_t j = 0; j < w; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < num_states; ++i) {
            if (!(t[i * w + j] >= 0.0)) throw ConfigError("negative transition probability");
            s += t[i * w + j];
          }
          if (std::abs(s - 1.0) > 1e-9) throw ConfigError("transition column does not sum to 1");
        }
      }
    }
  }
  emission.validate();
}

CgmmLayerParams init_layer(const LayerShape& shape, std::span<const double> features, std::uint64_t seed,
                           GaussianInit ginit) {
  if (shape.num_states == 0) throw ConfigError("C must be at least 1");
  if (shape.layers.size() != shape.widths.size()) throw ConfigError("layer subset and widths differ in length");
  if (shape.num_labels == 0) throw ConfigError("layer needs at least one edge label");
  Rng rng(seed);
  CgmmLayerParams p;
  p.num_states = shape.num_states;
  p.layers = shape.layers;
  p.widths = shape.widths;
  p.num_labels = shape.num_labels;
  p.emission = init_emission(shape.kind, shape.num_states, shape.alphabet, features, ginit, rng);

  const std::size_t c = shape.num_states;
  const std::vector<double> ones(c, 1.0);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::size_t w = p.widths[l];
    for (std::size_t a = 0; a < p.num_labels; ++a) {
      std::vector<double> t(c * w);
      for (std::size_t j = 0; j < w; ++j) {
        const auto col = sample_dirichlet(rng, ones);
        for (std::size_t i = 0; i < c; ++i) t[i * w + j] = col[i];
      }
      p.transition.push_back(std::move(t));
    }
  }
  if (p.is_mixture()) {
    p.prior.assign(c, 1.0 / static_cast<double>(c));
  } else {
    p.sp_layer.assign(p.layers.size(), 1.0 / static_cast<double>(p.layers.size()));
    p.sp_edge.assign(p.layers.size() * p.num_labels, 1.0 / static_cast<double>(p.num_labels));
  }
  return p;
}

std::vector<double> aggregate_prior(const CgmmLayerParams& p, const LayerStatistics& stats, std::size_t u) {
  const std::size_t c = p.num_states;
  if (p.is_mixture()) return p.prior;
  BlockLayout layout(p);
  RowWork w(p, layout);
  std::vector<double> out(c, 0.0);
  if (!context_weights(p, stats, u, w)) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(c));
    return out;
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::size_t wl = p.widths[l];
    for (std::size_t a = 0; a < p.num_labels; ++a) {
      const std::size_t k = l * p.num_labels + a;
      if (w.weight[k] == 0.0) continue;
      const auto macro = stats.macro_state(l, u, a);
      for (std::size_t i = 0; i < c; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < wl; ++j) s += p.transition[k][i * wl + j] * macro[j];
        out[i] += w.weight[k] * s;
      }
    }
  }
  return out;
}

double PosteriorTensor::at(std::size_t r, std::size_t l, std::size_t a, std::size_t i, std::size_t j) const {
  std::size_t off = r * block;
  for (std::size_t ll = 0; ll < l; ++ll) off += num_labels * num_states * widths[ll];
  off += a * num_states * widths[l];
  return full[off + i * widths[l] + j];
}

PosteriorTensor e_step(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats,
                       std::size_t begin, std::size_t end) {
  check_stats(p, features, stats);
  if (end > features.size() || begin > end) throw ConfigError("e_step row range out of bounds");
  const BlockLayout layout(p);
  RowWork w(p, layout);
  const std::size_t c = p.num_states;
  const std::size_t nl = p.layers.size();
  const std::size_t na = p.num_labels;

  PosteriorTensor t;
  t.begin = begin;
  t.rows = end - begin;
  t.num_states = c;
  t.num_labels = na;
  t.widths = p.widths;
  t.block = layout.total;
  t.full.assign(t.rows * t.block, 0.0);
  t.z_i.assign(t.rows * c, 0.0);
  t.z_il.assign(t.rows * nl * c, 0.0);
  t.z_ila.assign(t.rows * nl * na * c, 0.0);
  t.has_context.assign(t.rows, 0);

  for (std::size_t r = 0; r < t.rows; ++r) {
    const std::size_t u = begin + r;
    compute_row(p, layout, features, stats, u, w);
    t.log_likelihood += w.log_norm;
    if (w.clamped) ++t.clamped;
    std::copy(w.zi.begin(), w.zi.end(), t.z_i.begin() + static_cast<std::ptrdiff_t>(r * c));
    if (!w.context) continue;
    t.has_context[r] = 1;
    std::copy(w.joint.begin(), w.joint.end(), t.full.begin() + static_cast<std::ptrdiff_t>(r * t.block));
    for (std::size_t l = 0; l < nl; ++l) {
      const std::size_t wl = p.widths[l];
      for (std::size_t a = 0; a < na; ++a) {
        const double* blk = w.joint.data() + layout.offset[l * na + a];
        for (std::size_t i = 0; i < c; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < wl; ++j) s += blk[i * wl + j];
          t.z_ila[((r * nl + l) * na + a) * c + i] = s;
          t.z_il[(r * nl + l) * c + i] += s;
        }
      }
    }
  }
  return t;
}

CgmmAccumulator CgmmAccumulator::zeros(const CgmmLayerParams& p, double shift) {
  CgmmAccumulator acc;
  const std::size_t c = p.num_states;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (std::size_t a = 0; a < p.num_labels; ++a) acc.transition.emplace_back(c * p.widths[l], 0.0);
  }
  acc.sp_layer_num.assign(p.layers.size(), 0.0);
  acc.sp_layer_den.assign(p.layers.size(), 0.0);
  acc.sp_edge_num.assign(p.layers.size() * p.num_labels, 0.0);
  acc.sp_edge_den.assign(p.layers.size() * p.num_labels, 0.0);
  acc.sp_layer_partial.assign(1, 0);
  acc.sp_edge_partial.assign(p.layers.size(), 0);
  acc.state_mass.assign(c, 0.0);
  if (p.emission.kind == FeatureKind::kDiscrete) {
    acc.cat_counts.assign(p.emission.alphabet * c, 0.0);
  } else {
    acc.g_s1.assign(c, 0.0);
    acc.g_s2.assign(c, 0.0);
  }
  acc.shift = shift;
  return acc;
}

void CgmmAccumulator::add(const CgmmAccumulator& o) {
  auto add_vec = [](std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  for (std::size_t k = 0; k < transition.size(); ++k) add_vec(transition[k], o.transition[k]);
  add_vec(sp_layer_num, o.sp_layer_num);
  add_vec(sp_layer_den, o.sp_layer_den);
  add_vec(sp_edge_num, o.sp_edge_num);
  add_vec(sp_edge_den, o.sp_edge_den);
  for (std::size_t k = 0; k < sp_layer_partial.size(); ++k) sp_layer_partial[k] |= o.sp_layer_partial[k];
  for (std::size_t k = 0; k < sp_edge_partial.size(); ++k) sp_edge_partial[k] |= o.sp_edge_partial[k];
  add_vec(state_mass, o.state_mass);
  add_vec(cat_counts, o.cat_counts);
  add_vec(g_s1, o.g_s1);
  add_vec(g_s2, o.g_s2);
  log_likelihood += o.log_likelihood;
  rows += o.rows;
  clamped += o.clamped;
}

void accumulate(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats,
                std::size_t begin, std::size_t end, CgmmAccumulator& acc) {
  check_stats(p, features, stats);
  const BlockLayout layout(p);
  RowWork w(p, layout);
  const std::size_t c = p.num_states;
  const std::size_t nl = p.layers.size();
  const std::size_t na = p.num_labels;
  const bool discrete = p.emission.kind == FeatureKind::kDiscrete;

  for (std::size_t u = begin; u < end; ++u) {
    compute_row(p, layout, features, stats, u, w);
    acc.log_likelihood += w.log_norm;
    ++acc.rows;
    if (w.clamped) ++acc.clamped;
    const double x = features[u];
    for (std::size_t i = 0; i < c; ++i) {
      const double z = w.zi[i];
      acc.state_mass[i] += z;
      if (discrete) {
        acc.cat_counts[static_cast<std::size_t>(x) * c + i] += z;
      } else {
        const double d = x - acc.shift;
        acc.g_s1[i] += z * d;
        acc.g_s2[i] += z * d * d;
      }
    }
    if (!w.context) continue;

    std::size_t active_layers = 0;
    for (std::size_t l = 0; l < nl; ++l) {
      if (!w.active[l]) continue;
      ++active_layers;
      const std::size_t wl = p.widths[l];
      double layer_mass = 0.0;
      std::size_t present = 0;
      for (std::size_t a = 0; a < na; ++a) {
        const std::size_t k = l * na + a;
        if (w.present[k]) ++present;
        if (w.weight[k] == 0.0) continue;
        const double* blk = w.joint.data() + layout.offset[k];
        auto& tacc = acc.transition[k];
        double label_mass = 0.0;
        for (std::size_t ij = 0; ij < c * wl; ++ij) {
          tacc[ij] += blk[ij];
          label_mass += blk[ij];
        }
        acc.sp_edge_num[k] += label_mass;
        layer_mass += label_mass;
      }
      acc.sp_layer_num[l] += layer_mass;
      acc.sp_layer_den[l] += 1.0 / w.active_norm;
      for (std::size_t a = 0; a < na; ++a) {
        const std::size_t k = l * na + a;
        if (w.present[k]) acc.sp_edge_den[k] += layer_mass / w.layer_norm[l];
      }
      if (present < na) acc.sp_edge_partial[l] = 1;
    }
    if (active_layers < nl) acc.sp_layer_partial[0] = 1;
  }
}

namespace {

// Switching-parent update. With every option present for every row this is
// the closed-form ratio; otherwise the minorise-maximise step num/den.
void update_sp(std::span<double> out, std::span<const double> num, std::span<const double> den, bool partial) {
  double total = 0.0;
  for (double v : num) total += v;
  if (!(total > 0.0)) return;
  if (!partial) {
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = num[a] / total;
    return;
  }
  std::vector<double> next(out.begin(), out.end());
  double s = 0.0;
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (den[a] > 0.0) next[a] = num[a] / den[a];
    s += next[a];
  }
  if (!(s > 0.0)) return;
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = next[a] / s;
}

}  // namespace

CgmmLayerParams m_step(const CgmmLayerParams& prev, const CgmmAccumulator& acc, MStepReport* report) {
  CgmmLayerParams p = prev;
  const std::size_t c = p.num_states;
  const std::size_t na = p.num_labels;
  constexpr double kTiny = 1e-300;

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::size_t wl = p.widths[l];
    for (std::size_t a = 0; a < na; ++a) {
      const std::size_t k = l * na + a;
      const auto& tacc = acc.transition[k];
      for (std::size_t j = 0; j < wl; ++j) {
        double den = 0.0;
        for (std::size_t i = 0; i < c; ++i) den += tacc[i * wl + j];
        if (!(den > kTiny)) continue;
        for (std::size_t i = 0; i < c; ++i) p.transition[k][i * wl + j] = tacc[i * wl + j] / den;
      }
    }
  }
  if (!p.is_mixture()) {
    update_sp(p.sp_layer, acc.sp_layer_num, acc.sp_layer_den, acc.sp_layer_partial[0] != 0);
    if (p.learn_sp_edge) {
      for (std::size_t l = 0; l < p.layers.size(); ++l) {
        update_sp({p.sp_edge.data() + l * na, na}, {acc.sp_edge_num.data() + l * na, na},
                  {acc.sp_edge_den.data() + l * na, na}, acc.sp_edge_partial[l] != 0);
      }
    }
  } else {
    double total = 0.0;
    for (double v : acc.state_mass) total += v;
    if (total > 0.0) {
      for (std::size_t i = 0; i < c; ++i) p.prior[i] = acc.state_mass[i] / total;
    }
  }

  EmissionModel& e = p.emission;
  for (std::size_t i = 0; i < c; ++i) {
    const double n = acc.state_mass[i];
    if (!(n > kTiny)) {
      if (report) report->degenerate_states.push_back(i);
      continue;
    }
    if (e.kind == FeatureKind::kDiscrete) {
      for (std::size_t k = 0; k < e.alphabet; ++k) e.probs[k * c + i] = acc.cat_counts[k * c + i] / n;
    } else {
      const double m1 = acc.g_s1[i] / n;
      const double var = std::max(0.0, acc.g_s2[i] / n - m1 * m1);
      e.mean[i] = acc.shift + m1;
      e.sd[i] = std::max(std::sqrt(var), e.sd_floor);
    }
  }
  return p;
}

CgmmAccumulator accumulate_all(const CgmmLayerParams& p, std::span<const double> features,
                               const LayerStatistics* stats, std::size_t batch_size, std::size_t workers) {
  check_stats(p, features, stats);
  double shift = 0.0;
  if (p.emission.kind == FeatureKind::kContinuous && !features.empty()) {
    for (double x : features) shift += x;
    shift /= static_cast<double>(features.size());
  }
  const auto batches = make_batches(features.size(), batch_size);
  std::vector<CgmmAccumulator> parts(batches.size(), CgmmAccumulator::zeros(p, shift));
  parallel_tasks(batches.size(), workers,
                 [&](std::size_t b) { accumulate(p, features, stats, batches[b].first, batches[b].second, parts[b]); });
  CgmmAccumulator total = CgmmAccumulator::zeros(p, shift);
  for (const auto& part : parts) total.add(part);
  return total;
}

CgmmLayerParams train_layer(CgmmLayerParams params, std::span<const double> features, const LayerStatistics* stats,
                            const LayerTrainConfig& cfg, LayerTrainReport* report) {
  if (features.empty()) throw ConfigError("cannot train a layer on an empty dataset");
  double prev = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const CgmmAccumulator acc = accumulate_all(params, features, stats, cfg.batch_size, cfg.workers);
    const double ll = acc.log_likelihood;
    if (!std::isfinite(ll)) {
      throw NumericalError("non-finite log-likelihood at epoch " + std::to_string(epoch));
    }
    MStepReport ms;
    params = m_step(params, acc, &ms);
    if (report) {
      report->log_likelihood.push_back(ll);
      report->clamped += acc.clamped;
      report->degenerate_states = ms.degenerate_states;
      report->epochs_run = epoch + 1;
    }
    const double delta = epoch == 0 ? std::abs(ll) : ll - prev;
    prev = ll;
    if (delta < cfg.threshold) break;
  }
  return params;
}

CgmmLayerParams train_layer(const LayerShape& shape, std::span<const double> features, const LayerStatistics* stats,
                            const LayerTrainConfig& cfg, LayerTrainReport* report) {
  LayerShape s = shape;
  s.num_states = cfg.num_states;
  return train_layer(init_layer(s, features, cfg.seed, cfg.ginit), features, stats, cfg, report);
}

double layer_log_likelihood(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats,
                            std::size_t workers) {
  return accumulate_all(p, features, stats, 0, workers).log_likelihood;
}

FrozenPosterior infer_layer(const CgmmLayerParams& p, std::span<const double> features, const LayerStatistics* stats,
                            PosteriorMode mode, int layer_index, std::size_t workers) {
  check_stats(p, features, stats);
  const std::size_t c = p.num_states;
  FrozenPosterior out;
  out.layer = layer_index;
  out.width = c;
  out.mode = PosteriorMode::kContinuous;
  out.values.assign(features.size() * c, 0.0);
  const auto batches = make_batches(features.size(), 0);
  const BlockLayout layout(p);
  parallel_tasks(batches.size(), workers, [&](std::size_t b) {
    RowWork w(p, layout);
    for (std::size_t u = batches[b].first; u < batches[b].second; ++u) {
      compute_row(p, layout, features, stats, u, w);
      std::copy(w.zi.begin(), w.zi.end(), out.values.begin() + static_cast<std::ptrdiff_t>(u * c));
    }
  });
  return mode == PosteriorMode::kOneHot ? out.one_hot() : out;
}

void save_layer(const CgmmLayerParams& p, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("DBGNLAYR");
  w.u32(kLayerVersion);
  w.u32(static_cast<std::uint32_t>(p.component));
  w.u64(p.num_states);
  w.u64(p.layers.size());
  w.u64(p.num_labels);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    w.u64(static_cast<std::uint64_t>(p.layers[l]));
    w.u64(p.widths[l]);
  }
  w.u32(p.learn_sp_edge ? 1 : 0);
  w.u32(p.emission.kind == FeatureKind::kDiscrete ? 0 : 1);
  w.u64(p.emission.alphabet);
  w.f64(p.emission.sd_floor);
  for (const auto& t : p.transition) w.f64s(t);
  w.f64s(p.sp_layer);
  w.f64s(p.sp_edge);
  w.u64(p.prior.size());
  w.f64s(p.prior);
  if (p.emission.kind == FeatureKind::kDiscrete) {
    w.f64s(p.emission.probs);
  } else {
    w.f64s(p.emission.mean);
    w.f64s(p.emission.sd);
  }
  w.close();
}

CgmmLayerParams load_layer(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("DBGNLAYR");
  r.expect_version(kLayerVersion);
  CgmmLayerParams p;
  p.component = static_cast<LayerComponent>(r.u32());
  p.num_states = r.u64();
  const auto nl = r.u64();
  p.num_labels = r.u64();
  if (nl > 4096 || p.num_states > (1u << 20) || p.num_labels > (1u << 20)) {
    throw IoError("implausible layer dimensions in " + path);
  }
  for (std::uint64_t l = 0; l < nl; ++l) {
    p.layers.push_back(static_cast<int>(r.u64()));
    p.widths.push_back(r.u64());
  }
  p.learn_sp_edge = r.u32() == 1;
  p.emission.kind = r.u32() == 0 ? FeatureKind::kDiscrete : FeatureKind::kContinuous;
  p.emission.num_states = p.num_states;
  p.emission.alphabet = r.u64();
  p.emission.sd_floor = r.f64();
  for (std::size_t l = 0; l < nl; ++l) {
    for (std::size_t a = 0; a < p.num_labels; ++a) p.transition.push_back(r.f64s(p.num_states * p.widths[l]));
  }
  p.sp_layer = r.f64s(nl);
  p.sp_edge = r.f64s(nl * p.num_labels);
  p.prior = r.f64s(r.u64());
  if (p.emission.kind == FeatureKind::kDiscrete) {
    p.emission.probs = r.f64s(p.emission.alphabet * p.num_states);
  } else {
    p.emission.mean = r.f64s(p.num_states);
    p.emission.sd = r.f64s(p.num_states);
  }
  return p;
}

std::string layer_to_json(const CgmmLayerParams& p) {
  nlohmann::json j;
  static const char* kComponents[] = {"cgmm", "ecgmm-vertex", "ecgmm-edge"};
  j["component"] = kComponents[static_cast<int>(p.component)];
  j["num_states"] = p.num_states;
  j["layers"] = p.layers;
  j["widths"] = p.widths;
  j["num_labels"] = p.num_labels;
  j["learn_sp_edge"] = p.learn_sp_edge;
  j["transition"] = p.transition;
  j["sp_layer"] = p.sp_layer;
  j["sp_edge"] = p.sp_edge;
  j["prior"] = p.prior;
  nlohmann::json e;
  if (p.emission.kind == FeatureKind::kDiscrete) {
    e["kind"] = "categorical";
    e["alphabet"] = p.emission.alphabet;
    e["probs"] = p.emission.probs;
  } else {
    e["kind"] = "gaussian";
    e["mean"] = p.emission.mean;
    e["sd"] = p.emission.sd;
    e["sd_floor"] = p.emission.sd_floor;
  }
  j["emission"] = e;
  return j.dump(2);
}

}  // namespace dbgn
