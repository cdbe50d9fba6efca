#include "dfa/config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "dfa/errors.hpp"

namespace dfa::config {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& where, const std::string& value,
                            const char* want) {
  throw ConfigError("configuration key '" + where + "': cannot parse '" + value +
                    "' as " + want);
}

int64_t parse_i64(const std::string& where, const std::string& v) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(where, v, "an integer");
  return out;
}

uint64_t parse_u64(const std::string& where, const std::string& v) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    bad_value(where, v, "an unsigned integer");
  }
  return out;
}

int parse_int(const std::string& where, const std::string& v) {
  const int64_t wide = parse_i64(where, v);
  if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
    throw ConfigError("configuration key '" + where + "': value " + v +
                      " is out of range");
  }
  return static_cast<int>(wide);
}

double parse_f64(const std::string& where, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(where, v, "a number");
  return out;
}

bool parse_bool(const std::string& where, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  bad_value(where, v, "a boolean (true/false/1/0)");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

void apply_dataset(const Section& sec, data::BiasedDatasetSpec& ds) {
  for (const auto& [key, value] : sec) {
    const std::string where = "dataset." + key;
    if (key == "base") {
      ds.base = base_dataset_from(value);
    } else if (key == "ratio") {
      ds.conflict_ratio = parse_f64(where, value);
    } else if (key == "seed") {
      ds.seed = parse_u64(where, value);
    } else if (key == "severity") {
      ds.severity = parse_int(where, value);
    } else if (key == "lossless_float") {
      ds.lossless_float = parse_bool(where, value);
    } else if (key == "test_excludes_designated") {
      ds.test_excludes_designated = parse_bool(where, value);
    } else if (key == "subset_per_class") {
      ds.subset_per_class = parse_int(where, value);
    } else if (key == "allow_any_ratio") {
      ds.allow_any_ratio = parse_bool(where, value);
    } else {
      throw ConfigError("unknown configuration key '" + where + "'");
    }
  }
}

void apply_train(const Section& sec, train::TrainConfig& tc) {
  for (const auto& [key, value] : sec) {
    const std::string where = "train." + key;
    if (key == "encoder") {
      tc.encoder = encoder_kind_from(value);
    } else if (key == "hidden") {
      tc.hidden = parse_int(where, value);
    } else if (key == "latent_dim") {
      tc.latent_dim = parse_int(where, value);
    } else if (key == "lambda_dis") {
      tc.weights.lambda_dis = parse_f64(where, value);
    } else if (key == "lambda_swap_b") {
      tc.weights.lambda_swap_b = parse_f64(where, value);
    } else if (key == "lambda_swap") {
      tc.weights.lambda_swap = parse_f64(where, value);
    } else if (key == "q") {
      tc.weights.q = parse_f64(where, value);
    } else if (key == "lr") {
      tc.lr = parse_f64(where, value);
    } else if (key == "lr_decay_step") {
      tc.lr_decay_step = parse_i64(where, value);
    } else if (key == "lr_decay_gamma") {
      tc.lr_decay_gamma = parse_f64(where, value);
    } else if (key == "iterations") {
      tc.iterations = parse_i64(where, value);
    } else if (key == "t_swap") {
      tc.t_swap = parse_i64(where, value);
    } else if (key == "batch_size") {
      tc.batch_size = parse_int(where, value);
    } else if (key == "seed") {
      tc.seed = parse_u64(where, value);
    } else if (key == "augment") {
      tc.augment = parse_bool(where, value);
    } else if (key == "normalize") {
      tc.normalize = parse_bool(where, value);
    } else if (key == "w_ema") {
      tc.w_ema = parse_f64(where, value);
    } else if (key == "eval_every") {
      tc.eval_every = parse_i64(where, value);
    } else if (key == "log_every") {
      tc.log_every = parse_i64(where, value);
    } else {
      throw ConfigError("unknown configuration key '" + where + "'");
    }
  }
}

void apply_run(const Section& sec, RunOptions& run) {
  for (const auto& [key, value] : sec) {
    const std::string where = "run." + key;
    if (key == "trials") {
      run.trials = parse_int(where, value);
    } else if (key == "quota") {
      run.quota = parse_int(where, value);
    } else if (key == "perms") {
      run.perms = parse_int(where, value);
    } else if (key == "probe_seed") {
      run.probe_seed = parse_u64(where, value);
    } else {
      throw ConfigError("unknown configuration key '" + where + "'");
    }
  }
}

}  // namespace

ParsedConfig parse_config_text(const std::string& text) {
  ParsedConfig pc;
  std::string section;
  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const std::string at = "config line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(at + ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(at + ": empty section name");
      pc.sections[section];  // a section may legitimately stay empty
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(at + ": expected 'key = value', got '" + line + "'");
    }
    if (section.empty()) {
      throw ConfigError(at + ": entry appears before any [section] header");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(at + ": empty key");
    auto [it, fresh] = pc.sections[section].emplace(key, value);
    if (!fresh) {
      throw ConfigError(at + ": duplicate key '" + section + "." + key + "'");
    }
  }
  return pc;
}

ParsedConfig read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_config(const ParsedConfig& parsed, data::BiasedDatasetSpec& dataset,
                  train::TrainConfig& train, RunOptions& run) {
  for (const auto& [name, sec] : parsed.sections) {
    if (name == "dataset") {
      apply_dataset(sec, dataset);
    } else if (name == "train") {
      apply_train(sec, train);
    } else if (name == "run") {
      apply_run(sec, run);
    } else {
      throw ConfigError("unknown configuration section '[" + name + "]'");
    }
  }
}

std::string resolved_config_text(const data::BiasedDatasetSpec& dataset,
                                 const train::TrainConfig& train,
                                 const RunOptions& run) {
  std::ostringstream os;
  os << "[dataset]\n";
  os << "base = " << data::base_dataset_name(dataset.base) << "\n";
  os << "ratio = " << fmt(dataset.conflict_ratio) << "\n";
  os << "seed = " << dataset.seed << "\n";
  os << "severity = " << dataset.severity << "\n";
  os << "lossless_float = " << (dataset.lossless_float ? 1 : 0) << "\n";
  os << "test_excludes_designated = " << (dataset.test_excludes_designated ? 1 : 0)
     << "\n";
  os << "subset_per_class = " << dataset.subset_per_class << "\n";
  os << "allow_any_ratio = " << (dataset.allow_any_ratio ? 1 : 0) << "\n";
  os << "\n[train]\n";
  os << "encoder = " << encoder_kind_name(train.encoder) << "\n";
  os << "hidden = " << train.hidden << "\n";
  os << "latent_dim = " << train.latent_dim << "\n";
  os << "lambda_dis = " << fmt(train.weights.lambda_dis) << "\n";
  os << "lambda_swap_b = " << fmt(train.weights.lambda_swap_b) << "\n";
  os << "lambda_swap = " << fmt(train.weights.lambda_swap) << "\n";
  os << "q = " << fmt(train.weights.q) << "\n";
  os << "lr = " << fmt(train.lr) << "\n";
  os << "lr_decay_step = " << train.lr_decay_step << "\n";
  os << "lr_decay_gamma = " << fmt(train.lr_decay_gamma) << "\n";
  os << "iterations = " << train.iterations << "\n";
  os << "t_swap = " << train.t_swap << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "seed = " << train.seed << "\n";
  os << "augment = " << (train.augment ? 1 : 0) << "\n";
  os << "normalize = " << (train.normalize ? 1 : 0) << "\n";
  os << "w_ema = " << fmt(train.w_ema) << "\n";
  os << "eval_every = " << train.eval_every << "\n";
  os << "log_every = " << train.log_every << "\n";
  os << "\n[run]\n";
  os << "trials = " << run.trials << "\n";
  os << "quota = " << run.quota << "\n";
  os << "perms = " << run.perms << "\n";
  os << "probe_seed = " << run.probe_seed << "\n";
  return os.str();
}

data::BaseDataset base_dataset_from(const std::string& name) {
  if (name == "colored_mnist") return data::BaseDataset::colored_mnist;
  if (name == "corrupted_cifar10") return data::BaseDataset::corrupted_cifar10;
  throw ConfigError("unknown base dataset '" + name +
                    "' (expected colored_mnist or corrupted_cifar10)");
}

std::string encoder_kind_name(EncoderKind kind) {
  return kind == EncoderKind::mlp ? "mlp" : "conv_small";
}

EncoderKind encoder_kind_from(const std::string& name) {
  if (name == "mlp") return EncoderKind::mlp;
  if (name == "conv_small") return EncoderKind::conv_small;
  throw ConfigError("unknown encoder '" + name + "' (expected mlp or conv_small)");
}

}  // namespace dfa::config
