#include "dbgn/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dbgn/classifier.hpp"
#include "dbgn/config.hpp"
#include "dbgn/embeddings.hpp"
#include "dbgn/errors.hpp"
#include "dbgn/evaluation.hpp"
#include "dbgn/graph.hpp"
#include "dbgn/rng.hpp"
#include "dbgn/stack.hpp"
#include "json.hpp"

namespace dbgn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Above this many vertex-layer-fits an evaluation counts as full scale.
constexpr double kDeskBudget = 2e8;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 1;
  bool deterministic = false;
  bool long_mode = false;
  int verbosity = 0;
  std::vector<std::string> argv;
};

void log(const Globals& g, const std::string& msg) {
  if (g.verbosity >= 0) std::cerr << msg << "\n";
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty() || !fs::exists(path)) throw ConfigError(what + " not found: '" + path + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = fs::path(dir) / ".write_probe";
  std::ofstream out(probe);
  if (!out) throw ConfigError("output directory is not writable: " + dir);
  out.close();
  fs::remove(probe, ec);
}

std::string read_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char buf[8] = {};
  in.read(buf, 8);
  return std::string(buf, static_cast<std::size_t>(in.gcount()));
}

Dataset load_dataset(const std::string& path) {
  require_file(path, "dataset cache");
  Dataset d = read_graph_lines(path);
  d.validate();
  return d;
}

EmbeddingSet load_embeddings(const std::string& path) {
  require_file(path, "embedding file");
  EmbeddingSet e = read_magic(path) == "DBGNEMB1" ? import_binary(path) : import_csv(path);
  if (fs::exists(path + ".json")) check_metadata(e, path);
  return e;
}

std::vector<double> read_labels(const std::string& path) {
  require_file(path, "label file");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string v = comma == std::string::npos ? line : line.substr(comma + 1);
    try {
      out.push_back(std::stod(v));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad label '" + v + "'");
    }
  }
  return out;
}

void write_labels(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  out << "graph_id,label\n";
  char buf[64];
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    if (!d.graphs[i].target) return;
    std::snprintf(buf, sizeof buf, "%.17g", *d.graphs[i].target);
    out << i << "," << buf << "\n";
  }
}

void write_manifest(const Globals& g, const std::string& dir, const std::string& command, const ConfigMap& config,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  json in = json::object(), outj = json::object();
  for (const auto& p : inputs) in[p] = file_hash(p);
  for (const auto& p : outputs) outj[fs::path(p).filename().string()] = file_hash(p);
  const json m = {{"command", command},
                  {"version", kVersion},
                  {"config", config},
                  {"config_hash", config_hash(config)},
                  {"seed", g.seed},
                  {"workers", g.workers},
                  {"deterministic", g.deterministic},
                  {"long_mode", g.long_mode},
                  {"inputs", in},
                  {"outputs", outj}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << m.dump(2) << "\n";
}

ConfigEntries load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigEntries e;
  if (!path.empty()) {
    require_file(path, "config file");
    e = read_config_file(path);
  }
  apply_overrides(e, overrides);
  return e;
}

std::uint64_t resolve_seed(const Globals& g, const ConfigMap& m) {
  if (g.seed_set) return g.seed;
  auto it = m.find("seed");
  return it == m.end() ? 0 : std::stoull(it->second);
}

json stack_metadata(const TrainedStack& s, const ConfigMap& cfg) {
  json layers = json::array();
  for (int l = 0; l < s.num_layers(); ++l) {
    const LayerDiagnostics& d = s.diagnostics.at(static_cast<std::size_t>(l));
    json j = {{"width", s.train.vertex[static_cast<std::size_t>(l)].width}};
    if (!d.log_likelihood.empty()) j["log_likelihood"] = d.log_likelihood;
    if (!d.edge_log_likelihood.empty()) j["edge_log_likelihood"] = d.edge_log_likelihood;
    if (!d.c_trajectory.empty()) {
      j["c_trajectory"] = d.c_trajectory;
      j["alpha0_trajectory"] = d.alpha0_trajectory;
      j["gamma_trajectory"] = d.gamma_trajectory;
    }
    if (l < static_cast<int>(s.train.edge.size())) j["edge_width"] = s.train.edge[static_cast<std::size_t>(l)].width;
    layers.push_back(std::move(j));
  }
  return {{"model", to_string(s.config.model)},
          {"config", cfg},
          {"config_hash", config_hash(cfg)},
          {"seed", s.config.seed},
          {"layer_widths", s.layer_widths()},
          {"layers", layers}};
}

void export_all(const EmbeddingSet& e, const std::string& stem, const std::string& format,
                std::vector<std::string>& outputs) {
  if (format == "csv" || format == "both") {
    export_csv(e, stem + ".csv");
    write_metadata(e, stem + ".csv");
    outputs.push_back(stem + ".csv");
  }
  if (format == "binary" || format == "both") {
    export_binary(e, stem + ".bin");
    write_metadata(e, stem + ".bin");
    outputs.push_back(stem + ".bin");
  }
}

// ---- ingest ----

struct IngestArgs {
  std::string input, name, out;
  bool degree_feature = false;
  bool prefer_attributes = false;
};

int cmd_ingest(const Globals& g, const IngestArgs& a) {
  if (!fs::exists(a.input)) throw ConfigError("input path does not exist: '" + a.input + "'");
  Dataset d;
  if (fs::is_directory(a.input)) {
    if (a.name.empty()) throw ConfigError("--name is required for a TU dataset directory");
    TuOptions opts;
    opts.prefer_attributes = a.prefer_attributes;
    d = load_tu_dataset(a.input, a.name, opts);
  } else {
    d = read_graph_lines(a.input);
  }
  bool has_edges = false;
  for (const auto& gr : d.graphs) has_edges = has_edges || !gr.edges.empty();
  if (has_edges) d = to_directed(d);
  if (a.degree_feature) d = add_degree_feature(d);
  d.validate();
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_graph_lines(d, a.out);
  const std::string h = file_hash(a.out);
  std::printf("%s graphs=%zu vertices=%zu arcs=%zu hash=%s\n", a.out.c_str(), d.graphs.size(), d.total_vertices(),
              d.total_arcs(), h.c_str());
  log(g, "ingested " + a.input);
  return 0;
}

// ---- embed ----

struct EmbedArgs {
  std::string config, data, apply, out, checkpoint, format = "both", level = "graph";
  std::vector<std::string> set;
};

int cmd_embed(Globals& g, const EmbedArgs& a) {
  ConfigEntries entries = load_config(a.config, a.set);
  ConfigMap m = to_map(entries);
  RunSpec spec = spec_from_config(m);
  if (spec.baseline && a.level == "vertex") throw ConfigError("bag-of-features has no vertex level");
  g.seed = resolve_seed(g, m);
  spec.stack.seed = g.seed;
  spec.stack.workers = g.workers;
  m = spec_to_config(spec);
  ensure_dir(a.out);

  Dataset d = load_dataset(a.data);
  if (spec.bottom) d = augment_bottom(d);
  std::vector<std::string> outputs;
  std::vector<std::string> inputs = {a.data};
  auto produce = [&](const Dataset& ds, const StackPosteriors* post, const std::string& stem, const json& meta) {
    EmbeddingSet e;
    if (spec.baseline) {
      e = bag_of_features(ds, spec.embed.aggregation);
    } else if (a.level == "vertex") {
      e = build_dataset_vertex_embeddings(ds, post->vertex, spec.embed.kind, spec.embed.out_neighbors);
    } else {
      e = build_graph_embeddings(ds, *post, spec.embed.kind, spec.embed.aggregation, spec.embed.out_neighbors);
    }
    e.metadata = meta.dump();
    export_all(e, (fs::path(a.out) / stem).string(), a.format, outputs);
    write_labels(ds, (fs::path(a.out) / (stem + "_labels.csv")).string());
  };

  if (spec.baseline) {
    const json meta = {{"model", "bof"}, {"config", m}, {"config_hash", config_hash(m)}};
    produce(d, nullptr, "embeddings", meta);
  } else {
    const std::string ckpt = a.checkpoint.empty() ? (fs::path(a.out) / "layers").string() : a.checkpoint;
    const TrainedStack s = train_stack(d, spec.stack, ckpt);
    json meta = stack_metadata(s, m);
    meta["level"] = a.level;
    produce(d, &s.train, "embeddings", meta);
    if (!a.apply.empty()) {
      Dataset t = load_dataset(a.apply);
      if (spec.bottom) t = augment_bottom(t);
      inputs.push_back(a.apply);
      const StackPosteriors p = infer_stack(s, t);
      produce(t, &p, "applied", meta);
    }
  }
  write_manifest(g, a.out, "embed", m, inputs, outputs);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

// ---- classify ----

struct ClassifyArgs {
  std::string config, embeddings, labels, test_embeddings, test_labels, out;
  double holdout = 0.1;
  std::vector<std::string> set;
};

int cmd_classify(Globals& g, const ClassifyArgs& a) {
  ConfigEntries entries = load_config(a.config, a.set);
  ConfigMap m = to_map(entries);
  RunSpec spec = spec_from_config(m);
  g.seed = resolve_seed(g, m);
  ensure_dir(a.out);
  const EmbeddingSet e = load_embeddings(a.embeddings);
  const std::vector<double> y = read_labels(a.labels);
  if (y.size() != e.rows) throw DataError("label count differs from embedding rows");

  const bool regression = is_regression(spec.classifier.metric);
  std::vector<int> strata;
  if (!regression) {
    for (double v : y) strata.push_back(static_cast<int>(v));
  }
  std::vector<std::size_t> all(e.rows);
  for (std::size_t i = 0; i < e.rows; ++i) all[i] = i;
  auto [tr, va] = holdout_split(all, strata, a.holdout, derive_seed(g.seed, {0}));
  auto gather = [&](const std::vector<std::size_t>& idx, std::vector<double>& x, std::vector<double>& t) {
    for (auto i : idx) {
      const auto r = e.row(i);
      x.insert(x.end(), r.begin(), r.end());
      t.push_back(y[i]);
    }
  };
  std::vector<double> xtr, ytr, xva, yva;
  gather(tr, xtr, ytr);
  gather(va, xva, yva);
  ClassifierConfig cc = spec.classifier;
  cc.seed = derive_seed(g.seed, {1});
  const ClassifierParams p =
      train_classifier(Matrix{xtr, tr.size(), e.width}, ytr, Matrix{xva, va.size(), e.width}, yva, cc);

  json metrics = {{"metric", to_string(cc.metric)},
                  {"train", score(predict(p, Matrix{xtr, tr.size(), e.width}), p.outputs, ytr, cc.metric)},
                  {"validation", p.best_metric},
                  {"epochs", p.epoch},
                  {"best_epoch", p.best_epoch}};
  std::vector<std::string> outputs, inputs = {a.embeddings, a.labels};
  const std::string clf_path = (fs::path(a.out) / "classifier.bin").string();
  save_classifier(p, clf_path);
  outputs.push_back(clf_path);
  const std::string pred_path = (fs::path(a.out) / "predictions.csv").string();
  if (!a.test_embeddings.empty()) {
    const EmbeddingSet te = load_embeddings(a.test_embeddings);
    const auto pred = predict(p, Matrix{te.values, te.rows, te.width});
    write_predictions(pred_path, pred, p.outputs, p.regression);
    inputs.push_back(a.test_embeddings);
    if (!a.test_labels.empty()) {
      const auto ty = read_labels(a.test_labels);
      if (ty.size() != te.rows) throw DataError("test label count differs from test embedding rows");
      metrics["test"] = score(pred, p.outputs, ty, cc.metric);
      inputs.push_back(a.test_labels);
    }
  } else {
    write_predictions(pred_path, predict(p, Matrix{xva, va.size(), e.width}), p.outputs, p.regression);
  }
  outputs.push_back(pred_path);
  const std::string metrics_path = (fs::path(a.out) / "metrics.json").string();
  std::ofstream(metrics_path) << metrics.dump(2) << "\n";
  outputs.push_back(metrics_path);
  write_manifest(g, a.out, "classify", spec_to_config(spec), inputs, outputs);
  std::printf("%s\n", metrics.dump().c_str());
  return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
  std::string config, data, out;
  std::vector<std::string> set;
};

int cmd_evaluate(Globals& g, const EvaluateArgs& a) {
  ConfigEntries entries = load_config(a.config, a.set);
  ExperimentConfig cfg = experiment_from_config(entries);
  const ConfigMap raw = to_map(entries);
  if (g.seed_set) cfg.seed = g.seed;
  g.seed = cfg.seed;
  cfg.workers = g.workers;
  std::string data = a.data;
  if (data.empty() && raw.count("dataset")) data = raw.at("dataset");
  if (!a.out.empty()) cfg.output = a.out;
  if (cfg.output.empty()) throw ConfigError("evaluate needs --out or an 'output' key");
  ensure_dir(cfg.output);
  const Dataset d = load_dataset(data);

  int max_layers = 1;
  for (const auto& p : cfg.grid) max_layers = std::max(max_layers, spec_from_config(p).stack.layers);
  const double cost = static_cast<double>(d.total_vertices()) * static_cast<double>(cfg.folds) *
                      static_cast<double>(cfg.grid.size() + cfg.final_runs) * max_layers;
  if (cost > kDeskBudget && !g.long_mode) {
    throw ConfigError("experiment exceeds the desk-scale budget; rerun with --long-mode");
  }
  const AssessmentReport r = model_assessment(d, cfg);
  ConfigMap record = raw;
  record["seed"] = std::to_string(cfg.seed);
  std::vector<std::string> outputs;
  for (const char* f : {"report.json", "report.md", "report.csv"}) outputs.push_back((fs::path(cfg.output) / f).string());
  write_manifest(g, cfg.output, "evaluate", record, {data}, outputs);
  std::printf("%s %.4f +- %.4f (%zu folds)\n", r.metric.c_str(), r.mean, r.std, r.folds.size());
  return 0;
}

// ---- inspect ----

int cmd_inspect(const std::string& path) {
  require_file(path, "file");
  const std::string magic = read_magic(path);
  json j;
  if (magic == "DBGNEMB1") {
    const EmbeddingSet e = import_binary(path);
    j = {{"type", "embeddings"},
         {"rows", e.rows},
         {"width", e.width},
         {"kind", to_string(e.kind)},
         {"aggregation", to_string(e.aggregation)},
         {"vertex_blocks", e.vertex_blocks},
         {"edge_blocks", e.edge_blocks}};
  } else if (magic == "DBGNLAYR") {
    j = json::parse(layer_to_json(load_layer(path)));
    j["type"] = "layer";
  } else if (magic == "DBGNHDP1") {
    const HdpState s = load_hdp_state(path);
    j = {{"type", "hdp"},
         {"states", s.num_states()},
         {"groups", s.num_groups},
         {"alpha0", s.alpha0},
         {"gamma", s.gamma},
         {"beta", s.beta}};
  } else if (magic == "DBGNPOST") {
    const FrozenPosterior p = load_posterior(path);
    j = {{"type", "posterior"}, {"layer", p.layer}, {"rows", p.rows()}, {"width", p.width}};
  } else if (magic == "DBGNCLF1") {
    const ClassifierParams p = load_classifier(path);
    j = {{"type", "classifier"},
         {"architecture", to_string(p.arch)},
         {"inputs", p.inputs},
         {"hidden", p.hidden},
         {"outputs", p.outputs},
         {"epochs", p.epoch},
         {"best_epoch", p.best_epoch},
         {"best_metric", p.best_metric}};
  } else if (fs::path(path).extension() == ".json") {
    std::ifstream in(path);
    j = json::parse(in);
  } else {
    const Dataset d = read_graph_lines(path);
    j = {{"type", "dataset"},
         {"graphs", d.graphs.size()},
         {"vertices", d.total_vertices()},
         {"arcs", d.total_arcs()},
         {"task", to_string(d.task)},
         {"features", d.feature_kind == FeatureKind::kDiscrete ? "discrete" : "continuous"},
         {"vertex_alphabet", d.vertex_alphabet},
         {"edge_alphabet", d.edge_alphabet},
         {"arc_features", d.has_arc_features},
         {"classes", d.num_classes},
         {"hash", file_hash(path)}};
  }
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

}  // namespace

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

int run_cli(int argc, char** argv) {
  Globals g;
  CLI::App app{"Deep Bayesian graph networks: CGMM, E-CGMM and iCGMM embeddings and evaluation", "dbgn"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.add_option("--seed", g.seed, "Experiment seed (overrides the config)")->each([&g](const std::string&) {
    g.seed_set = true;
  });
  app.add_option("--workers", g.workers, "Worker threads; 1 guarantees determinism")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", g.deterministic, "Force a single worker");
  app.add_flag("--long-mode", g.long_mode, "Allow full-scale experiments");
  app.add_flag("-v,--verbose", g.verbosity, "More logging");

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Load a TU directory or graph-lines file into a dataset cache");
  ingest->add_option("--input", ia.input, "TU directory or .jsonl file")->required();
  ingest->add_option("--name", ia.name, "TU dataset name");
  ingest->add_option("--out", ia.out, "Cache file")->required();
  ingest->add_flag("--degree-feature", ia.degree_feature, "Use the in-degree as a continuous feature");
  ingest->add_flag("--prefer-attributes", ia.prefer_attributes, "Use node attributes over labels");

  EmbedArgs ea;
  auto* embed = app.add_subcommand("embed", "Train a stack incrementally and export embeddings");
  embed->add_option("--config", ea.config, "Key-value config file");
  embed->add_option("--set", ea.set, "key=value override")->take_all();
  embed->add_option("--data", ea.data, "Dataset cache")->required();
  embed->add_option("--apply", ea.apply, "Also embed this dataset with the trained stack");
  embed->add_option("--out", ea.out, "Output directory")->required();
  embed->add_option("--checkpoint", ea.checkpoint, "Layer checkpoint directory (default OUT/layers)");
  embed->add_option("--format", ea.format, "csv|binary|both")->check(CLI::IsMember({"csv", "binary", "both"}));
  embed->add_option("--level", ea.level, "graph|vertex")->check(CLI::IsMember({"graph", "vertex"}));

  ClassifyArgs ca;
  auto* classify = app.add_subcommand("classify", "Train a classifier on exported embeddings");
  classify->add_option("--config", ca.config, "Key-value config file");
  classify->add_option("--set", ca.set, "key=value override")->take_all();
  classify->add_option("--embeddings", ca.embeddings, "Embedding file (csv or binary)")->required();
  classify->add_option("--labels", ca.labels, "Label CSV (graph_id,label)")->required();
  classify->add_option("--test-embeddings", ca.test_embeddings, "Embeddings to predict");
  classify->add_option("--test-labels", ca.test_labels, "Labels of the test embeddings");
  classify->add_option("--holdout", ca.holdout, "Early-stopping fraction")->check(CLI::Range(0.01, 0.99));
  classify->add_option("--out", ca.out, "Output directory")->required();

  EvaluateArgs va;
  auto* evaluate = app.add_subcommand("evaluate", "Nested k-fold risk assessment of a config grid");
  evaluate->add_option("--config", va.config, "Experiment config file")->required();
  evaluate->add_option("--set", va.set, "key=value override")->take_all();
  evaluate->add_option("--data", va.data, "Dataset cache (default: the 'dataset' key)");
  evaluate->add_option("--out", va.out, "Output directory (default: the 'output' key)");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Summarize a cache, embedding, layer, classifier or report file");
  inspect->add_option("path", inspect_path, "File to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }
  if (g.deterministic) g.workers = 1;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);

  try {
    if (*ingest) return cmd_ingest(g, ia);
    if (*embed) return cmd_embed(g, ea);
    if (*classify) return cmd_classify(g, ca);
    if (*evaluate) return cmd_evaluate(g, va);
    if (*inspect) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kDataIntegrity);
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kDataIntegrity);
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kDataIntegrity);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNumerical);
  } catch (const ConsistencyError& e) {
    std::cerr << "sampler consistency error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNumerical);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "malformed json: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kDataIntegrity);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return static_cast<int>(ExitCode::kUsage);
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  std::vector<char*> argv;
  for (auto& s : copy) argv.push_back(s.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace dbgn
