#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dbgn/errors.hpp"
#include "dbgn/graph.hpp"

namespace dbgn {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits on commas; tolerates surrounding whitespace.
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

long long parse_int(const std::string& tok, const std::string& file, std::size_t line) {
  long long v = 0;
  const auto* end = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || p != end || tok.empty()) {
    throw DataError(file + ":" + std::to_string(line) + ": expected integer, got '" + tok + "'");
  }
  return v;
}

double parse_double(const std::string& tok, const std::string& file, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(file + ":" + std::to_string(line) + ": expected number, got '" + tok + "'");
  }
}

struct Lines {
  std::string path;
  std::vector<std::string> rows;
};

std::optional<Lines> read_lines(const fs::path& p, bool required) {
  if (!fs::exists(p)) {
    if (required) throw IoError("missing required file: " + p.string());
    return std::nullopt;
  }
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  Lines out{p.filename().string(), {}};
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    out.rows.push_back(line);
  }
  while (!out.rows.empty() && out.rows.back().empty()) out.rows.pop_back();
  return out;
}

std::vector<long long> read_int_column(const Lines& f) {
  std::vector<long long> out;
  out.reserve(f.rows.size());
  for (std::size_t i = 0; i < f.rows.size(); ++i) {
    const auto fields = split_fields(f.rows[i]);
    if (fields.size() != 1) {
      throw DataError(f.path + ":" + std::to_string(i + 1) + ": expected a single integer");
    }
    out.push_back(parse_int(fields[0], f.path, i + 1));
  }
  return out;
}

// Maps raw label values to dense ids in sorted order.
std::vector<std::size_t> densify(const std::vector<long long>& raw, std::size_t& alphabet) {
  std::map<long long, std::size_t> ids;
  for (long long v : raw) ids.emplace(v, 0);
  std::size_t next = 0;
  for (auto& [k, v] : ids) v = next++;
  alphabet = ids.size();
  std::vector<std::size_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = ids[raw[i]];
  return out;
}

}  // namespace

Dataset load_tu_dataset(const std::string& root, const std::string& name, const TuOptions& opts) {
  const fs::path base(root);
  auto file = [&](const char* suffix) { return base / (name + suffix); };

  const auto indicator_file = read_lines(file("_graph_indicator.txt"), true);
  const auto arcs_file = read_lines(file("_A.txt"), true);
  const auto graph_labels_file = read_lines(file("_graph_labels.txt"), false);
  const auto node_labels_file = read_lines(file("_node_labels.txt"), false);
  const auto edge_labels_file = read_lines(file("_edge_labels.txt"), false);
  const auto node_attr_file = read_lines(file("_node_attributes.txt"), false);
  const auto edge_attr_file = read_lines(file("_edge_attributes.txt"), false);

  const auto indicator = read_int_column(*indicator_file);
  const std::size_t num_vertices = indicator.size();
  if (num_vertices == 0) throw DataError(indicator_file->path + ": empty");

  // Graph ids are 1-based and contiguous in the benchmark layout.
  long long max_graph = 0;
  for (std::size_t i = 0; i < num_vertices; ++i) {
    if (indicator[i] < 1) throw DataError(indicator_file->path + ":" + std::to_string(i + 1) + ": graph id < 1");
    if (i > 0 && indicator[i] < indicator[i - 1]) {
      throw DataError(indicator_file->path + ":" + std::to_string(i + 1) + ": graph ids must be non-decreasing");
    }
    max_graph = std::max(max_graph, indicator[i]);
  }

  Dataset d;
  d.graphs.resize(static_cast<std::size_t>(max_graph));
  std::vector<std::size_t> local_id(num_vertices);
  for (std::size_t i = 0; i < num_vertices; ++i) {
    Graph& g = d.graphs[static_cast<std::size_t>(indicator[i] - 1)];
    local_id[i] = g.num_vertices++;
  }

  // Vertex features.
  std::vector<double> features(num_vertices, 0.0);
  if (node_labels_file && !(opts.prefer_attributes && node_attr_file)) {
    auto raw = read_int_column(*node_labels_file);
    if (raw.size() != num_vertices) throw DataError(node_labels_file->path + ": row count differs from vertex count");
    std::size_t k = 0;
    const auto dense = densify(raw, k);
    for (std::size_t i = 0; i < num_vertices; ++i) features[i] = static_cast<double>(dense[i]);
    d.feature_kind = FeatureKind::kDiscrete;
    d.vertex_alphabet = k;
  } else if (node_attr_file) {
    const Lines& f = *node_attr_file;
    if (f.rows.size() != num_vertices) throw DataError(f.path + ": row count differs from vertex count");
    for (std::size_t i = 0; i < num_vertices; ++i) {
      const auto fields = split_fields(f.rows[i]);
      if (fields.size() > 1 && !opts.allow_truncate_attributes) {
        throw DataError(f.path + ":" + std::to_string(i + 1) +
                        ": multi-dimensional vertex attributes are not supported "
                        "(use --allow-truncate-attributes to keep the first column)");
      }
      features[i] = parse_double(fields[0], f.path, i + 1);
    }
    d.feature_kind = FeatureKind::kContinuous;
    d.vertex_alphabet = 0;
  } else {
    d.feature_kind = FeatureKind::kDiscrete;
    d.vertex_alphabet = 1;
  }
  for (std::size_t i = 0; i < num_vertices; ++i) {
    d.graphs[static_cast<std::size_t>(indicator[i] - 1)].x.push_back(features[i]);
  }

  // Arcs.
  std::vector<std::size_t> edge_label_ids;
  if (edge_labels_file) {
    auto raw = read_int_column(*edge_labels_file);
    if (raw.size() != arcs_file->rows.size()) throw DataError(edge_labels_file->path + ": row count differs from arc count");
    std::size_t a = 0;
    edge_label_ids = densify(raw, a);
    d.edge_alphabet = a;
  } else {
    d.edge_alphabet = 1;
  }
  std::vector<double> arc_feat;
  if (edge_attr_file) {
    const Lines& f = *edge_attr_file;
    if (f.rows.size() != arcs_file->rows.size()) throw DataError(f.path + ": row count differs from arc count");
    for (std::size_t i = 0; i < f.rows.size(); ++i) {
      const auto fields = split_fields(f.rows[i]);
      if (fields.size() > 1 && !opts.allow_truncate_attributes) {
        throw DataError(f.path + ":" + std::to_string(i + 1) + ": multi-dimensional arc attributes are not supported");
      }
      arc_feat.push_back(parse_double(fields[0], f.path, i + 1));
    }
    d.has_arc_features = true;
  }
  for (std::size_t i = 0; i < arcs_file->rows.size(); ++i) {
    const auto fields = split_fields(arcs_file->rows[i]);
    if (fields.size() != 2) {
      throw DataError(arcs_file->path + ":" + std::to_string(i + 1) + ": expected 'i, j'");
    }
    const long long s = parse_int(fields[0], arcs_file->path, i + 1);
    const long long t = parse_int(fields[1], arcs_file->path, i + 1);
    if (s < 1 || t < 1 || s > static_cast<long long>(num_vertices) || t > static_cast<long long>(num_vertices)) {
      throw DataError(arcs_file->path + ":" + std::to_string(i + 1) + ": vertex id out of range");
    }
    const auto si = static_cast<std::size_t>(s - 1);
    const auto ti = static_cast<std::size_t>(t - 1);
    if (indicator[si] != indicator[ti]) {
      throw DataError(arcs_file->path + ":" + std::to_string(i + 1) + ": integrity error, arc " + fields[0] + " -> " +
                      fields[1] + " joins graphs " + std::to_string(indicator[si]) + " and " +
                      std::to_string(indicator[ti]));
    }
    Graph& g = d.graphs[static_cast<std::size_t>(indicator[si] - 1)];
    Arc arc;
    arc.src = static_cast<VertexId>(local_id[si]);
    arc.dst = static_cast<VertexId>(local_id[ti]);
    arc.label = edge_label_ids.empty() ? 0 : static_cast<EdgeLabel>(edge_label_ids[i]);
    arc.feature = arc_feat.empty() ? 0.0 : arc_feat[i];
    g.arcs.push_back(arc);
  }

  // Graph targets.
  if (graph_labels_file) {
    auto raw = read_int_column(*graph_labels_file);
    if (raw.size() != d.graphs.size()) throw DataError(graph_labels_file->path + ": row count differs from graph count");
    std::size_t classes = 0;
    const auto dense = densify(raw, classes);
    for (std::size_t g = 0; g < d.graphs.size(); ++g) d.graphs[g].target = static_cast<double>(dense[g]);
    d.num_classes = classes;
  }
  d.task = Task::kGraphClassification;
  d.validate();
  return d;
}

}  // namespace dbgn
