#include "dfa/manifest.hpp"

#include <ctime>

#include <json.hpp>

#include "dfa/report.hpp"

namespace dfa::manifest {
namespace {

using nlohmann::json;

std::string utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json render(const RunManifest& m, const std::string& status,
            const std::string& started_at) {
  json j;
  j["command"] = m.command;
  j["status"] = status;
  j["code_version"] = kCodeVersion;
  j["seed"] = m.seed;
  j["resolved_config"] = m.resolved_config;
  if (!m.dataset_digest.empty()) j["dataset_digest"] = m.dataset_digest;
  j["outputs"] = m.outputs;
  json env = json::object();
  for (const auto& [key, value] : m.env) env[key] = value;
  j["environment"] = env;
  j["started_at"] = started_at;
  return j;
}

}  // namespace

ManifestWriter::ManifestWriter(std::string path, RunManifest m)
    : path_(std::move(path)),
      m_(std::move(m)),
      started_at_(utc_now()),
      t0_(std::chrono::steady_clock::now()) {
  report::write_json(path_, render(m_, "running", started_at_));
}

void ManifestWriter::finish() {
  json j = render(m_, "complete", started_at_);
  j["finished_at"] = utc_now();
  j["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  report::write_json(path_, j);
}

std::string path_for(const std::string& output_path) {
  return output_path + ".manifest.json";
}

}  // namespace dfa::manifest
