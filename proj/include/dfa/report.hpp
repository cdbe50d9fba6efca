#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace dfa::report {

std::string hex64(uint64_t v);

// Digest over the canonical (sorted-key) rendering with volatile fields
// removed: wall-clock timings, timestamps, file paths chosen by the caller,
// and any previously embedded digest. Two runs with identical configuration
// and seed therefore produce identical digests even though they never take
// the same wall time.
uint64_t metrics_digest(nlohmann::json j);

// Stamps j["digest"] with hex64(metrics_digest(j)).
void finalize(nlohmann::json& j);

// Canonical rendering: sorted keys, 2-space indent, trailing newline.
std::string render(const nlohmann::json& j);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

// CSV views. Columns are stable; one data row per trial (train reports) or
// per grid row (diversity / ablation reports), plus one header row.
std::string trials_csv(const nlohmann::json& train_report);
std::string diversity_csv(const nlohmann::json& diversity_report);
std::string ablation_csv(const nlohmann::json& ablation_report);

void write_text(const std::string& path, const std::string& content);

}  // namespace dfa::report
