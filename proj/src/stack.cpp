#include "dbgn/stack.hpp"

#include <filesystem>
#include <fstream>

#include "dbgn/errors.hpp"
#include "json.hpp"

namespace dbgn {
namespace fs = std::filesystem;

namespace {

std::string layer_file(const std::string& dir, int layer, const std::string& ext) {
  return (fs::path(dir) / ("layer_" + std::to_string(layer) + "." + ext)).string();
}

// Writes through a temporary name so an interrupted run never leaves a
// half-written file under the final name.
template <typename Fn>
void atomic_write(const std::string& path, Fn&& write) {
  const std::string tmp = path + ".tmp";
  write(tmp);
  fs::rename(tmp, path);
}

nlohmann::json diag_to_json(const LayerDiagnostics& d) {
  return {{"log_likelihood", d.log_likelihood},
          {"edge_log_likelihood", d.edge_log_likelihood},
          {"c_trajectory", d.c_trajectory},
          {"alpha0_trajectory", d.alpha0_trajectory},
          {"gamma_trajectory", d.gamma_trajectory},
          {"sweep_seconds", d.sweep_seconds}};
}

LayerDiagnostics diag_from_json(const nlohmann::json& j) {
  LayerDiagnostics d;
  d.log_likelihood = j.at("log_likelihood").get<std::vector<double>>();
  d.edge_log_likelihood = j.at("edge_log_likelihood").get<std::vector<double>>();
  d.c_trajectory = j.at("c_trajectory").get<std::vector<std::size_t>>();
  d.alpha0_trajectory = j.at("alpha0_trajectory").get<std::vector<double>>();
  d.gamma_trajectory = j.at("gamma_trajectory").get<std::vector<double>>();
  d.sweep_seconds = j.at("sweep_seconds").get<std::vector<double>>();
  return d;
}

bool is_icgmm(ModelKind m) { return m == ModelKind::kIcgmm || m == ModelKind::kIcgmmFast; }

LayerTrainConfig cgmm_config(const StackConfig& cfg, int layer) {
  LayerTrainConfig c;
  c.num_states = cfg.states;
  c.epochs = cfg.epochs;
  c.threshold = cfg.threshold;
  c.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(layer)});
  c.batch_size = cfg.batch_size;
  c.workers = cfg.workers;
  c.ginit = cfg.ginit;
  return c;
}

EcgmmConfig ecgmm_config(const StackConfig& cfg) {
  EcgmmConfig c;
  c.vertex_states = cfg.states;
  c.edge_states = cfg.edge_states;
  c.epochs = cfg.epochs;
  c.threshold = cfg.threshold;
  c.seed = cfg.seed;
  c.batch_size = cfg.batch_size;
  c.workers = cfg.workers;
  c.ginit = cfg.ginit;
  c.dummy_arc_feature = cfg.dummy_arc_feature;
  return c;
}

IcgmmConfig icgmm_config(const StackConfig& cfg) {
  IcgmmConfig c = cfg.icgmm;
  c.fast = cfg.model == ModelKind::kIcgmmFast;
  c.seed = cfg.seed;
  c.workers = cfg.workers;
  c.mode = cfg.mode;
  return c;
}

FrozenPosterior in_mode(FrozenPosterior p, PosteriorMode mode) {
  return mode == PosteriorMode::kOneHot ? p.one_hot() : p;
}

}  // namespace

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::kCgmm: return "cgmm";
    case ModelKind::kEcgmm: return "ecgmm";
    case ModelKind::kIcgmm: return "icgmm";
    case ModelKind::kIcgmmFast: return "icgmm-fast";
  }
  return "?";
}

ModelKind model_from_string(const std::string& s) {
  if (s == "cgmm") return ModelKind::kCgmm;
  if (s == "ecgmm") return ModelKind::kEcgmm;
  if (s == "icgmm") return ModelKind::kIcgmm;
  if (s == "icgmm-fast") return ModelKind::kIcgmmFast;
  throw ConfigError("unknown model '" + s + "' (expected cgmm, ecgmm, icgmm, icgmm-fast)");
}

std::vector<int> layer_subset(int layer, bool full_history) {
  if (layer <= 0) return {};
  if (!full_history) return {layer - 1};
  std::vector<int> out;
  for (int k = 0; k < layer; ++k) out.push_back(k);
  return out;
}

std::vector<std::size_t> TrainedStack::layer_widths() const {
  std::vector<std::size_t> out;
  for (const auto& p : train.vertex) out.push_back(p.width);
  return out;
}

TrainedStack TrainedStack::truncated(int layers) const {
  if (layers < 0 || layers > num_layers()) throw ConfigError("cannot truncate stack to " + std::to_string(layers) + " layers");
  TrainedStack out;
  out.config = config;
  out.config.layers = layers;
  auto take = [layers](const auto& v) {
    using V = std::decay_t<decltype(v)>;
    return v.size() >= static_cast<std::size_t>(layers) ? V(v.begin(), v.begin() + layers) : v;
  };
  out.cgmm = take(cgmm);
  out.ecgmm = take(ecgmm);
  out.icgmm = take(icgmm);
  out.train.vertex = take(train.vertex);
  out.train.edge = take(train.edge);
  out.diagnostics = take(diagnostics);
  return out;
}

TrainedStack train_stack(const Dataset& d, const StackConfig& cfg, const std::string& checkpoint_dir) {
  if (cfg.layers < 0) throw ConfigError("negative layer count");
  if (cfg.states == 0 && !is_icgmm(cfg.model)) throw ConfigError("C must be at least 1");
  if (d.graphs.empty()) throw ConfigError("cannot train on an empty dataset");
  const bool resume = !checkpoint_dir.empty();
  if (resume) fs::create_directories(checkpoint_dir);

  TrainedStack s;
  s.config = cfg;
  const std::vector<double> x = d.vertex_features();

  for (int layer = 0; layer < cfg.layers; ++layer) {
    const bool have = resume && fs::exists(layer_file(checkpoint_dir, layer, "vpost"));
    LayerDiagnostics diag;
    if (have) {
      switch (cfg.model) {
        case ModelKind::kCgmm:
          s.cgmm.push_back(load_layer(layer_file(checkpoint_dir, layer, "params")));
          break;
        case ModelKind::kEcgmm:
          s.ecgmm.push_back({load_layer(layer_file(checkpoint_dir, layer, "vparams")),
                             load_layer(layer_file(checkpoint_dir, layer, "eparams"))});
          s.train.edge.push_back(load_posterior(layer_file(checkpoint_dir, layer, "epost")));
          break;
        default:
          s.icgmm.push_back(load_hdp_state(layer_file(checkpoint_dir, layer, "hdp")));
          break;
      }
      std::ifstream in(layer_file(checkpoint_dir, layer, "diag.json"));
      if (in) diag = diag_from_json(nlohmann::json::parse(in));
      s.train.vertex.push_back(load_posterior(layer_file(checkpoint_dir, layer, "vpost")));
      s.diagnostics.push_back(std::move(diag));
      continue;
    }

    FrozenPosterior vpost;
    if (cfg.model == ModelKind::kCgmm) {
      const std::vector<int> subset = layer_subset(layer, cfg.full_history);
      std::optional<LayerStatistics> stats;
      if (!subset.empty()) stats = compute_statistics(d, s.train.vertex, subset);
      const LayerStatistics* st = stats ? &*stats : nullptr;
      const LayerTrainConfig lc = cgmm_config(cfg, layer);
      LayerTrainReport rep;
      CgmmLayerParams p = train_layer(layer_shape(cfg.states, st, d.feature_kind, d.vertex_alphabet), x, st, lc, &rep);
      diag.log_likelihood = rep.log_likelihood;
      vpost = infer_layer(p, x, st, cfg.mode, layer, cfg.workers);
      if (resume) atomic_write(layer_file(checkpoint_dir, layer, "params"), [&](const std::string& f) { save_layer(p, f); });
      s.cgmm.push_back(std::move(p));
    } else if (cfg.model == ModelKind::kEcgmm) {
      EcgmmLayerReport rep;
      EcgmmLayerParams p = train_ecgmm_layer(d, s.train.vertex, s.train.edge, layer, ecgmm_config(cfg), &rep);
      diag.log_likelihood = rep.vertex.log_likelihood;
      diag.edge_log_likelihood = rep.edge.log_likelihood;
      const FrozenPosterior* pv = layer > 0 ? &s.train.vertex[layer - 1] : nullptr;
      const FrozenPosterior* pe = layer > 0 ? &s.train.edge[layer - 1] : nullptr;
      FrozenPosterior epost = infer_edge_posteriors(d, p, pv, cfg.mode, layer, cfg.dummy_arc_feature, cfg.workers);
      vpost = infer_ecgmm_vertices(d, p, pv, pe, cfg.mode, layer, cfg.workers);
      if (resume) {
        atomic_write(layer_file(checkpoint_dir, layer, "vparams"), [&](const std::string& f) { save_layer(p.vertex, f); });
        atomic_write(layer_file(checkpoint_dir, layer, "eparams"), [&](const std::string& f) { save_layer(p.edge, f); });
        atomic_write(layer_file(checkpoint_dir, layer, "epost"), [&](const std::string& f) { save_posterior(epost, f); });
      }
      s.ecgmm.push_back(std::move(p));
      s.train.edge.push_back(std::move(epost));
    } else {
      const FrozenPosterior* prev = layer > 0 ? &s.train.vertex[layer - 1] : nullptr;
      IcgmmLayerResult res = train_icgmm_layer(d, prev, layer, icgmm_config(cfg));
      diag.c_trajectory = res.c_trajectory;
      diag.alpha0_trajectory = res.alpha0_trajectory;
      diag.gamma_trajectory = res.gamma_trajectory;
      diag.sweep_seconds = res.sweep_seconds;
      vpost = std::move(res.posterior);
      if (resume) atomic_write(layer_file(checkpoint_dir, layer, "hdp"), [&](const std::string& f) { save_hdp_state(res.state, f); });
      s.icgmm.push_back(std::move(res.state));
    }
    if (resume) {
      atomic_write(layer_file(checkpoint_dir, layer, "diag.json"), [&](const std::string& f) {
        std::ofstream out(f);
        out << diag_to_json(diag).dump();
        if (!out) throw IoError("cannot write " + f);
      });
      atomic_write(layer_file(checkpoint_dir, layer, "vpost"), [&](const std::string& f) { save_posterior(vpost, f); });
    }
    s.train.vertex.push_back(std::move(vpost));
    s.diagnostics.push_back(std::move(diag));
  }
  return s;
}

StackPosteriors infer_stack(const TrainedStack& s, const Dataset& d, int layers) {
  if (layers < 0) layers = s.num_layers();
  if (layers > s.num_layers()) throw ConfigError("stack has fewer layers than requested");
  const StackConfig& cfg = s.config;
  const std::vector<double> x = d.vertex_features();
  StackPosteriors out;
  for (int layer = 0; layer < layers; ++layer) {
    if (cfg.model == ModelKind::kCgmm) {
      const CgmmLayerParams& p = s.cgmm[layer];
      std::optional<LayerStatistics> stats;
      if (!p.layers.empty()) stats = compute_statistics(d, out.vertex, p.layers);
      out.vertex.push_back(infer_layer(p, x, stats ? &*stats : nullptr, cfg.mode, layer, cfg.workers));
    } else if (cfg.model == ModelKind::kEcgmm) {
      const EcgmmLayerParams& p = s.ecgmm[layer];
      const FrozenPosterior* pv = layer > 0 ? &out.vertex[layer - 1] : nullptr;
      const FrozenPosterior* pe = layer > 0 ? &out.edge[layer - 1] : nullptr;
      FrozenPosterior epost = infer_edge_posteriors(d, p, pv, cfg.mode, layer, cfg.dummy_arc_feature, cfg.workers);
      FrozenPosterior vpost = infer_ecgmm_vertices(d, p, pv, pe, cfg.mode, layer, cfg.workers);
      out.edge.push_back(std::move(epost));
      out.vertex.push_back(std::move(vpost));
    } else {
      const FrozenPosterior* prev = layer > 0 ? &out.vertex[layer - 1] : nullptr;
      const auto groups = select_groups(d, prev);
      out.vertex.push_back(in_mode(infer_icgmm(s.icgmm[layer], x, groups, PosteriorMode::kContinuous, layer), cfg.mode));
    }
  }
  return out;
}

}  // namespace dbgn
