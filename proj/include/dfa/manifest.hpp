#pragma once
// Run manifests: a JSON sidecar recording everything needed to reproduce an
// invocation. Written in `running` state before long work starts and
// finalized to `complete` afterwards, so interrupted runs are recognizable.
#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dfa::manifest {

inline constexpr const char* kCodeVersion = "dfa 0.1.0";

struct RunManifest {
  std::string command;
  std::string resolved_config;  // every default materialized, config file form
  std::string dataset_digest;   // hex, empty when the command has no dataset
  uint64_t seed = 0;
  std::vector<std::string> outputs;  // every artifact path the run writes
  std::vector<std::pair<std::string, std::string>> env;  // recorded env reads
};

// Writes the manifest on construction (status "running") and again on
// finish() (status "complete", with both timestamps and wall-clock seconds).
class ManifestWriter {
 public:
  ManifestWriter(std::string path, RunManifest m);

  // The manifest may be amended (extra outputs, recorded digests) between
  // start and finish; finish() persists the final state.
  RunManifest& data() { return m_; }

  void finish();

 private:
  std::string path_;
  RunManifest m_;
  std::string started_at_;
  std::chrono::steady_clock::time_point t0_;
};

// Default manifest location for a given primary output artifact.
std::string path_for(const std::string& output_path);

}  // namespace dfa::manifest
