#include "dfa/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dfa/errors.hpp"
#include "dfa/fnv.hpp"

namespace dfa::report {

namespace {

// Fields that legitimately differ between two otherwise identical runs.
constexpr const char* kVolatileKeys[] = {
    "digest",     "wall_seconds", "wall_seconds_total", "started_at",
    "finished_at", "run_log",     "checkpoint",         "output",
};

bool is_volatile(const std::string& key) {
  for (const char* k : kVolatileKeys) {
    if (key == k) return true;
  }
  return false;
}

void strip_volatile(nlohmann::json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end();) {
      if (is_volatile(it.key())) {
        it = j.erase(it);
      } else {
        strip_volatile(it.value());
        ++it;
      }
    }
  } else if (j.is_array()) {
    for (auto& v : j) strip_volatile(v);
  }
}

std::string num(const nlohmann::json& v) { return v.dump(); }

}  // namespace

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t metrics_digest(nlohmann::json j) {
  strip_volatile(j);
  const std::string text = j.dump();  // sorted keys by construction
  return fnv1a(text.data(), text.size());
}

void finalize(nlohmann::json& j) { j["digest"] = hex64(metrics_digest(j)); }

std::string render(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_json(const std::string& path, const nlohmann::json& j) {
  write_text(path, render(j));
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(is, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw DataError(path + " is not valid JSON");
  return j;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  os.flush();
  if (!os) throw DataError("failed while writing " + path);
}

std::string trials_csv(const nlohmann::json& train_report) {
  std::ostringstream os;
  os << "trial,seed,accuracy,accuracy_aligned,accuracy_conflicting,iterations,"
        "param_digest\n";
  int k = 0;
  for (const auto& t : train_report.at("trials")) {
    os << k++ << ',' << num(t.at("seed")) << ',' << num(t.at("accuracy")) << ','
       << num(t.at("accuracy_aligned")) << ',' << num(t.at("accuracy_conflicting"))
       << ',' << num(t.at("iterations")) << ','
       << t.at("param_digest").get<std::string>() << "\n";
  }
  return os.str();
}

namespace {

std::string grid_csv(const nlohmann::json& rows, const std::string& lead_header,
                     const std::vector<std::string>& lead_keys) {
  std::ostringstream os;
  os << lead_header << ",mean_accuracy,std_accuracy";
  size_t trials = 0;
  if (!rows.empty()) trials = rows.front().at("trials").size();
  for (size_t k = 0; k < trials; ++k) os << ",trial_" << k;
  os << "\n";
  for (const auto& r : rows) {
    bool first = true;
    for (const auto& key : lead_keys) {
      if (!first) os << ',';
      first = false;
      const auto& v = r.at(key);
      os << (v.is_string() ? v.get<std::string>() : v.dump());
    }
    os << ',' << r.at("mean_accuracy").dump() << ',' << r.at("std_accuracy").dump();
    for (const auto& t : r.at("trials")) os << ',' << t.at("accuracy").dump();
    os << "\n";
  }
  return os.str();
}

}  // namespace

std::string diversity_csv(const nlohmann::json& diversity_report) {
  return grid_csv(diversity_report.at("cells"),
                  "diversity_ratio,sampling_ratio,quota",
                  {"diversity_ratio", "sampling_ratio", "quota"});
}

std::string ablation_csv(const nlohmann::json& ablation_report) {
  return grid_csv(ablation_report.at("rows"), "row", {"row"});
}

}  // namespace dfa::report
