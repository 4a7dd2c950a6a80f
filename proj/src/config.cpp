#include "dbgn/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dbgn/errors.hpp"

namespace dbgn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void set_entry(ConfigEntries& entries, const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries.emplace_back(key, value);
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < 0) throw ConfigError("'" + key + "' must be non-negative");
  return static_cast<std::size_t>(x);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

ConfigEntries parse_config(const std::string& text, const std::string& origin) {
  ConfigEntries out;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    set_entry(out, key, trim(line.substr(eq + 1)));
  }
  return out;
}

ConfigEntries read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void apply_overrides(ConfigEntries& entries, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    set_entry(entries, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

ConfigMap to_map(const ConfigEntries& entries) { return ConfigMap(entries.begin(), entries.end()); }

const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys = {
      "model",      "layers",        "states",       "edge_states",   "full_history",      "posterior",
      "epochs",     "threshold",     "batch_size",   "gaussian_init", "dummy_arc_feature", "bottom",
      "sweeps",     "alpha0",        "gamma",        "auto_hyper",    "initial_states",    "burn_in",
      "thin",       "eta",           "mu0",          "lambda0",       "a0",                "b0",
      "embedding",  "aggregation",   "out_neighbors", "classifier",   "hidden",            "lr",
      "l2",         "clf_batch_size", "max_epochs",  "patience",      "metric",            "clf_standardize"};
  return keys;
}

const std::vector<std::string>& experiment_keys() {
  static const std::vector<std::string> keys = {"dataset", "format",  "name", "folds",     "final_runs",
                                                "seed",    "workers", "holdout", "output", "checkpoint", "degree_feature"};
  return keys;
}

RunSpec spec_from_config(const ConfigMap& m) {
  RunSpec s;
  StackConfig& st = s.stack;
  ClassifierConfig& c = s.classifier;
  for (const auto& [k, v] : m) {
    if (v.find(',') != std::string::npos) throw ConfigError("'" + k + "' has several values; expand the grid first");
    if (k == "model") {
      if (v == "bof") {
        s.baseline = true;
      } else {
        s.baseline = false;
        st.model = model_from_string(v);
      }
    } else if (k == "layers") {
      st.layers = static_cast<int>(to_int(k, v));
    } else if (k == "states") {
      st.states = to_size(k, v);
    } else if (k == "edge_states") {
      st.edge_states = to_size(k, v);
    } else if (k == "full_history") {
      st.full_history = parse_bool(k, v);
    } else if (k == "posterior") {
      if (v == "continuous") st.mode = PosteriorMode::kContinuous;
      else if (v == "one-hot") st.mode = PosteriorMode::kOneHot;
      else throw ConfigError("'posterior' expects continuous or one-hot");
    } else if (k == "epochs") {
      st.epochs = static_cast<int>(to_int(k, v));
    } else if (k == "threshold") {
      st.threshold = to_double(k, v);
    } else if (k == "batch_size") {
      st.batch_size = to_size(k, v);
    } else if (k == "gaussian_init") {
      if (v == "kmeans") st.ginit = GaussianInit::kKMeans;
      else if (v == "quantiles") st.ginit = GaussianInit::kQuantiles;
      else throw ConfigError("'gaussian_init' expects kmeans or quantiles");
    } else if (k == "dummy_arc_feature") {
      st.dummy_arc_feature = parse_bool(k, v);
    } else if (k == "bottom") {
      s.bottom = parse_bool(k, v);
    } else if (k == "sweeps") {
      st.icgmm.sweeps = static_cast<int>(to_int(k, v));
    } else if (k == "alpha0") {
      st.icgmm.alpha0 = to_double(k, v);
    } else if (k == "gamma") {
      st.icgmm.gamma = to_double(k, v);
    } else if (k == "auto_hyper") {
      st.icgmm.auto_hyper = parse_bool(k, v);
    } else if (k == "initial_states") {
      st.icgmm.initial_states = to_size(k, v);
    } else if (k == "burn_in") {
      st.icgmm.burn_in = static_cast<int>(to_int(k, v));
    } else if (k == "thin") {
      st.icgmm.thin = static_cast<int>(to_int(k, v));
    } else if (k == "eta") {
      st.icgmm.prior.eta = to_double(k, v);
    } else if (k == "mu0") {
      st.icgmm.prior.mu0 = to_double(k, v);
      st.icgmm.mu0_from_data = false;
    } else if (k == "lambda0") {
      st.icgmm.prior.lambda0 = to_double(k, v);
    } else if (k == "a0") {
      st.icgmm.prior.a0 = to_double(k, v);
    } else if (k == "b0") {
      st.icgmm.prior.b0 = to_double(k, v);
    } else if (k == "embedding") {
      s.embed.kind = embedding_kind_from_string(v);
    } else if (k == "aggregation") {
      s.embed.aggregation = aggregation_from_string(v);
    } else if (k == "out_neighbors") {
      s.embed.out_neighbors = parse_bool(k, v);
    } else if (k == "classifier") {
      c.arch = architecture_from_string(v);
    } else if (k == "hidden") {
      c.hidden = to_size(k, v);
    } else if (k == "lr") {
      c.learning_rate = to_double(k, v);
    } else if (k == "l2") {
      c.l2 = to_double(k, v);
    } else if (k == "clf_batch_size") {
      c.batch_size = to_size(k, v);
    } else if (k == "max_epochs") {
      c.max_epochs = static_cast<int>(to_int(k, v));
    } else if (k == "patience") {
      c.patience = static_cast<int>(to_int(k, v));
    } else if (k == "metric") {
      c.metric = metric_from_string(v);
    } else if (k == "clf_standardize") {
      c.standardize = parse_bool(k, v);
    } else if (std::find(experiment_keys().begin(), experiment_keys().end(), k) == experiment_keys().end()) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  if (!s.baseline && st.layers < 1) throw ConfigError("'layers' must be at least 1");
  if (!s.baseline && st.states < 1) throw ConfigError("'states' must be at least 1");
  const bool icgmm = st.model == ModelKind::kIcgmm || st.model == ModelKind::kIcgmmFast;
  if (!icgmm && (m.count("alpha0") || m.count("gamma") || m.count("sweeps") || m.count("auto_hyper"))) {
    throw ConfigError("HDP keys (alpha0, gamma, sweeps, auto_hyper) only apply to icgmm models");
  }
  if (st.model != ModelKind::kEcgmm && m.count("edge_states")) {
    throw ConfigError("'edge_states' only applies to ecgmm");
  }
  c.validate();
  return s;
}

ConfigMap spec_to_config(const RunSpec& s) {
  const StackConfig& st = s.stack;
  const ClassifierConfig& c = s.classifier;
  ConfigMap m;
  m["model"] = s.baseline ? "bof" : to_string(st.model);
  m["layers"] = std::to_string(st.layers);
  m["states"] = std::to_string(st.states);
  m["full_history"] = fmt(st.full_history);
  m["posterior"] = st.mode == PosteriorMode::kOneHot ? "one-hot" : "continuous";
  m["epochs"] = std::to_string(st.epochs);
  m["threshold"] = fmt(st.threshold);
  m["batch_size"] = std::to_string(st.batch_size);
  m["gaussian_init"] = st.ginit == GaussianInit::kKMeans ? "kmeans" : "quantiles";
  m["dummy_arc_feature"] = fmt(st.dummy_arc_feature);
  m["bottom"] = fmt(s.bottom);
  if (st.model == ModelKind::kEcgmm) m["edge_states"] = std::to_string(st.edge_states);
  if (st.model == ModelKind::kIcgmm || st.model == ModelKind::kIcgmmFast) {
    m["sweeps"] = std::to_string(st.icgmm.sweeps);
    m["alpha0"] = fmt(st.icgmm.alpha0);
    m["gamma"] = fmt(st.icgmm.gamma);
    m["auto_hyper"] = fmt(st.icgmm.auto_hyper);
    m["initial_states"] = std::to_string(st.icgmm.initial_states);
    m["burn_in"] = std::to_string(st.icgmm.burn_in);
    m["thin"] = std::to_string(st.icgmm.thin);
    m["eta"] = fmt(st.icgmm.prior.eta);
    if (!st.icgmm.mu0_from_data) m["mu0"] = fmt(st.icgmm.prior.mu0);
    m["lambda0"] = fmt(st.icgmm.prior.lambda0);
    m["a0"] = fmt(st.icgmm.prior.a0);
    m["b0"] = fmt(st.icgmm.prior.b0);
  }
  m["embedding"] = to_string(s.embed.kind);
  m["aggregation"] = to_string(s.embed.aggregation);
  m["out_neighbors"] = fmt(s.embed.out_neighbors);
  m["classifier"] = to_string(c.arch);
  m["hidden"] = std::to_string(c.hidden);
  m["lr"] = fmt(c.learning_rate);
  m["l2"] = fmt(c.l2);
  m["clf_batch_size"] = std::to_string(c.batch_size);
  m["max_epochs"] = std::to_string(c.max_epochs);
  m["patience"] = std::to_string(c.patience);
  m["metric"] = to_string(c.metric);
  m["clf_standardize"] = fmt(c.standardize);
  return m;
}

std::vector<ConfigMap> expand_grid(const ConfigEntries& entries) {
  std::vector<ConfigMap> out{ConfigMap{}};
  for (const auto& [k, v] : entries) {
    const auto values = split_commas(v);
    if (values.empty() || std::any_of(values.begin(), values.end(), [](const auto& x) { return x.empty(); })) {
      throw ConfigError("'" + k + "' has an empty grid value");
    }
    std::vector<ConfigMap> next;
    next.reserve(out.size() * values.size());
    for (const auto& base : out) {
      for (const auto& x : values) {
        ConfigMap m = base;
        m[k] = x;
        next.push_back(std::move(m));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::string config_hash(const ConfigMap& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : m) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dbgn
