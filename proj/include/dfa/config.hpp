#pragma once
// Line-oriented configuration files: `[section]` headers with `key = value`
// entries; `#` starts a comment. Recognized sections are [dataset], [train]
// and [run]; unknown sections, unknown keys, duplicate keys and malformed
// values are hard errors.
#include <cstdint>
#include <map>
#include <string>

#include "dfa/data/dataset.hpp"
#include "dfa/train/trainer.hpp"

namespace dfa::config {

// Orchestration knobs that sit above a single trainer instance.
struct RunOptions {
  int trials = 1;
  int quota = -1;           // conflicting samples per batch; -1 = plain sampling
  int perms = 10;           // swap-probe permutation count
  uint64_t probe_seed = 1;  // swap-probe permutation seed
};

using Section = std::map<std::string, std::string>;

struct ParsedConfig {
  std::map<std::string, Section> sections;
};

// Parses configuration text; syntax errors carry 1-based line numbers.
ParsedConfig parse_config_text(const std::string& text);

// Reads and parses a configuration file.
ParsedConfig read_config_file(const std::string& path);

// Applies a parsed file on top of the given values (later sources win by
// being applied later). Throws ConfigError naming the offending entry.
void apply_config(const ParsedConfig& parsed, data::BiasedDatasetSpec& dataset,
                  train::TrainConfig& train, RunOptions& run);

// Canonical rendering of every materialized value, in the same file format,
// so manifests record the fully resolved configuration. Feeding the result
// back through parse/apply reproduces the same values.
std::string resolved_config_text(const data::BiasedDatasetSpec& dataset,
                                 const train::TrainConfig& train,
                                 const RunOptions& run);

// Name <-> enum helpers shared with the command line (the forward mapping
// for datasets lives in data::base_dataset_name).
data::BaseDataset base_dataset_from(const std::string& name);
std::string encoder_kind_name(EncoderKind kind);
EncoderKind encoder_kind_from(const std::string& name);

}  // namespace dfa::config
