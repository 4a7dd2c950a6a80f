// Line-delimited JSON dataset format.
//
//   {"format":"dbgn-graphs","version":1,"feature_kind":"discrete","K":3,"A":1,...}
//   {"n":3,"x":[0,1,2],"arcs":[[0,1,0],[1,2,0]],"arc_x":[...],"y":1}
//   ...
//
// Doubles are printed with round-trip precision, so write/read is bit-exact.

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "dbgn/errors.hpp"
#include "dbgn/graph.hpp"

namespace dbgn {
namespace {

using nlohmann::json;
constexpr int kFormatVersion = 1;

json graph_to_json(const Graph& g, bool arc_features) {
  json j;
  j["n"] = g.num_vertices;
  j["x"] = g.x;
  json arcs = json::array();
  for (const Arc& a : g.arcs) arcs.push_back({a.src, a.dst, a.label});
  j["arcs"] = std::move(arcs);
  if (arc_features) {
    std::vector<double> ax;
    for (const Arc& a : g.arcs) ax.push_back(a.feature);
    j["arc_x"] = ax;
  }
  if (!g.edges.empty()) {
    json edges = json::array();
    for (const Arc& a : g.edges) edges.push_back({a.src, a.dst, a.label, a.feature});
    j["edges"] = std::move(edges);
  }
  if (g.target) j["y"] = *g.target;
  if (!g.vertex_targets.empty()) j["vy"] = g.vertex_targets;
  if (g.has_bottom()) {
    j["bottom"] = g.bottom_in;
    j["bottom_label"] = *g.bottom_label;
  }
  return j;
}

Graph graph_from_json(const json& j, bool arc_features) {
  Graph g;
  g.num_vertices = j.at("n").get<std::size_t>();
  g.x = j.at("x").get<std::vector<double>>();
  for (const auto& a : j.at("arcs")) {
    if (a.size() != 3) throw DataError("arc triple expected");
    g.arcs.push_back(Arc{a[0].get<VertexId>(), a[1].get<VertexId>(), a[2].get<EdgeLabel>(), 0.0});
  }
  if (arc_features) {
    const auto ax = j.at("arc_x").get<std::vector<double>>();
    if (ax.size() != g.arcs.size()) throw DataError("arc_x length differs from arc count");
    for (std::size_t i = 0; i < ax.size(); ++i) g.arcs[i].feature = ax[i];
  }
  if (j.contains("edges")) {
    for (const auto& e : j["edges"]) {
      g.edges.push_back(Arc{e[0].get<VertexId>(), e[1].get<VertexId>(), e[2].get<EdgeLabel>(), e[3].get<double>()});
    }
  }
  if (j.contains("y")) g.target = j["y"].get<double>();
  if (j.contains("vy")) g.vertex_targets = j["vy"].get<std::vector<int>>();
  if (j.contains("bottom")) {
    g.bottom_in = j["bottom"].get<std::vector<std::uint32_t>>();
    g.bottom_label = j.at("bottom_label").get<EdgeLabel>();
  }
  return g;
}

}  // namespace

void write_graph_lines(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  json header;
  header["format"] = "dbgn-graphs";
  header["version"] = kFormatVersion;
  header["feature_kind"] = d.feature_kind == FeatureKind::kDiscrete ? "discrete" : "continuous";
  header["K"] = d.vertex_alphabet;
  header["A"] = d.edge_alphabet;
  header["arc_features"] = d.has_arc_features;
  header["task"] = to_string(d.task);
  header["num_classes"] = d.num_classes;
  header["num_graphs"] = d.graphs.size();
  out << header.dump() << '\n';
  for (const auto& g : d.graphs) out << graph_to_json(g, d.has_arc_features).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

Dataset read_graph_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + path);
  Dataset d;
  std::size_t declared = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "dbgn-graphs") throw DataError(path + ": not a dbgn graph file");
    if (header.at("version").get<int>() != kFormatVersion) throw IoError(path + ": unsupported format version");
    d.feature_kind = header.at("feature_kind") == "discrete" ? FeatureKind::kDiscrete : FeatureKind::kContinuous;
    d.vertex_alphabet = header.at("K").get<std::size_t>();
    d.edge_alphabet = header.at("A").get<std::size_t>();
    d.has_arc_features = header.at("arc_features").get<bool>();
    d.task = task_from_string(header.at("task").get<std::string>());
    d.num_classes = header.at("num_classes").get<std::size_t>();
    declared = header.at("num_graphs").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(path + ":1: malformed header: " + e.what());
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      d.graphs.push_back(graph_from_json(json::parse(line), d.has_arc_features));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (d.graphs.size() != declared) throw IoError(path + ": truncated (expected " + std::to_string(declared) + " graphs)");
  const bool has_unordered = std::any_of(d.graphs.begin(), d.graphs.end(), [](const Graph& g) { return !g.edges.empty(); });
  if (!has_unordered) d.validate();
  return d;
}

}  // namespace dbgn
