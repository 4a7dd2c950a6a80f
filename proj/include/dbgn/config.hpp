#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dbgn/classifier.hpp"
#include "dbgn/embeddings.hpp"
#include "dbgn/stack.hpp"

namespace dbgn {

/// Ordered `key = value` entries of a config file. Order matters for grids.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;
using ConfigMap = std::map<std::string, std::string>;

/// Parses `key = value` lines; `#` starts a comment. Later keys override
/// earlier ones but keep the first position.
ConfigEntries parse_config(const std::string& text, const std::string& origin = "<config>");
ConfigEntries read_config_file(const std::string& path);
/// Applies `key=value` overrides in place.
void apply_overrides(ConfigEntries& entries, const std::vector<std::string>& overrides);
ConfigMap to_map(const ConfigEntries& entries);

struct EmbedOptions {
  EmbeddingKind kind = EmbeddingKind::kUnigram;
  Aggregation aggregation = Aggregation::kSum;
  bool out_neighbors = false;
};

/// One fully specified pipeline: encoder, embedding construction, classifier.
struct RunSpec {
  bool baseline = false;  // bag-of-features instead of a trained stack
  bool bottom = false;    // bottom-state augmentation before training
  StackConfig stack;
  EmbedOptions embed;
  ClassifierConfig classifier;
};

/// Builds a RunSpec from single-valued model keys. Experiment-level keys are
/// ignored; anything else unknown is a ConfigError.
RunSpec spec_from_config(const ConfigMap& m);
/// Canonical key/value form of a spec (every model key present).
ConfigMap spec_to_config(const RunSpec& s);

/// Keys accepted by spec_from_config.
const std::vector<std::string>& model_keys();
/// Experiment-level keys (dataset, folds, seeds, ...).
const std::vector<std::string>& experiment_keys();

/// Cartesian expansion of comma-separated values; the first declared axis
/// varies slowest. Returns one single-valued map per configuration.
std::vector<ConfigMap> expand_grid(const ConfigEntries& entries);

/// Stable 64-bit FNV-1a hash of the canonical `k=v` lines, as 16 hex digits.
std::string config_hash(const ConfigMap& m);

bool parse_bool(const std::string& key, const std::string& v);

}  // namespace dbgn
