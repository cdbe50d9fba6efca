#include "dfa/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sys/stat.h>

#include "dfa/report.hpp"
#include "dfa/stats.hpp"

namespace dfa::exp {

namespace {

using nlohmann::json;

bool file_exists(const std::string& path) {
  struct stat st {};
  return ::stat(path.c_str(), &st) == 0;
}

json step_record(const train::StepStats& st) {
  json rec;
  rec["t"] = st.t;
  rec["l_dis"] = st.l_dis;
  if (st.l_swap) rec["l_swap"] = *st.l_swap;
  rec["lr"] = st.lr;
  if (st.w_mean_aligned) rec["w_mean_aligned"] = *st.w_mean_aligned;
  if (st.w_mean_conflicting) rec["w_mean_conflicting"] = *st.w_mean_conflicting;
  return rec;
}

// Shared run loop: step, log at the configured cadences, evaluate
// periodically and once at the end, optionally checkpoint the final state.
template <class Trainer>
TrialOutcome run_loop(Trainer& tr, const data::BiasedDataset& ds,
                      const train::TrainConfig& cfg, const RunPaths& paths,
                      bool dual, int quota) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ofstream log;
  if (!paths.run_log.empty()) {
    log.open(paths.run_log, std::ios::binary | std::ios::trunc);
    if (!log) throw DataError("cannot open " + paths.run_log + " for writing");
  }

  while (tr.completed() < cfg.iterations) {
    const auto st = tr.step();
    const bool last = st.t == cfg.iterations;
    const bool eval_now =
        log.is_open() && cfg.eval_every > 0 && (st.t % cfg.eval_every == 0 || last);
    const bool log_now =
        log.is_open() &&
        (eval_now || last || (cfg.log_every > 0 && st.t % cfg.log_every == 0));
    if (log_now) {
      json rec = step_record(st);
      if (eval_now) {
        rec["test_acc"] = eval::evaluate(tr.model(), ds, ds.test, tr.prep()).overall();
      }
      log << rec.dump() << "\n";
    }
  }
  if (log.is_open()) {
    log.flush();
    if (!log) throw DataError("failed while writing " + paths.run_log);
  }

  TrialOutcome out;
  out.seed = cfg.seed;
  out.config_digest = cfg.digest(train::run_mode(dual, quota), ds.content_digest());
  out.param_digest = tr.param_digest();
  out.iterations = tr.completed();
  out.test = eval::evaluate(tr.model(), ds, ds.test, tr.prep());
  if (!paths.checkpoint.empty()) {
    tr.save_checkpoint(paths.checkpoint, ds.content_digest());
    out.checkpoint = paths.checkpoint;
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

TrialOutcome load_outcome(const std::string& path, uint64_t expect_digest) {
  const json j = report::read_json(path);
  TrialOutcome out;
  out.seed = j.at("seed").get<uint64_t>();
  out.config_digest = std::stoull(j.at("config_digest").get<std::string>(), nullptr, 16);
  if (out.config_digest != expect_digest) {
    throw DataError(path + " records a different configuration digest");
  }
  out.param_digest = std::stoull(j.at("param_digest").get<std::string>(), nullptr, 16);
  out.iterations = j.at("iterations").get<int64_t>();
  const json& c = j.at("counts");
  out.test.n = c.at("n").get<int64_t>();
  out.test.n_aligned = c.at("aligned").get<int64_t>();
  out.test.n_conflicting = c.at("conflicting").get<int64_t>();
  out.test.correct = c.at("correct").get<int64_t>();
  out.test.correct_aligned = c.at("correct_aligned").get<int64_t>();
  out.test.correct_conflicting = c.at("correct_conflicting").get<int64_t>();
  out.wall_seconds = j.value("wall_seconds", 0.0);
  out.checkpoint = j.value("checkpoint", std::string{});
  return out;
}

// Aggregates a set of trial outcomes into the shared report core.
json aggregate(const std::vector<TrialOutcome>& outs) {
  json j;
  std::vector<double> acc, acc_a, acc_c;
  json trials = json::array();
  for (const auto& o : outs) {
    trials.push_back(outcome_json(o));
    acc.push_back(o.test.overall());
    acc_a.push_back(o.test.aligned_pct());
    acc_c.push_back(o.test.conflicting_pct());
  }
  const auto overall = stats::mean_std_population(acc);
  j["trials"] = std::move(trials);
  j["mean_accuracy"] = overall.mean;
  j["std_accuracy"] = overall.stddev;
  j["breakdown"] = {{"overall", overall.mean},
                    {"aligned", stats::mean_std_population(acc_a).mean},
                    {"conflicting", stats::mean_std_population(acc_c).mean}};
  return j;
}

std::vector<TrialOutcome> run_trials(const Cache& cache, const data::BiasedDataset& ds,
                                     const train::TrainConfig& cfg, bool dual,
                                     int quota, int trials) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  std::vector<TrialOutcome> outs;
  outs.reserve(static_cast<size_t>(trials));
  for (int k = 0; k < trials; ++k) {
    train::TrainConfig c = cfg;
    c.seed = trial_seed(cfg.seed, k);
    outs.push_back(cached_run(cache, ds, c, dual, quota));
  }
  return outs;
}

}  // namespace

uint64_t trial_seed(uint64_t base_seed, int trial) {
  return mix_seed(base_seed, 0x545249414C000000ULL + static_cast<uint64_t>(trial));
}

TrialOutcome run_dual(const data::BiasedDataset& ds, const train::TrainConfig& cfg,
                      const RunPaths& paths) {
  train::DualTrainer tr(ds, cfg);
  return run_loop(tr, ds, cfg, paths, /*dual=*/true, -1);
}

TrialOutcome run_vanilla(const data::BiasedDataset& ds, const train::TrainConfig& cfg,
                         int quota, const RunPaths& paths) {
  train::VanillaTrainer tr(ds, cfg);
  if (quota >= 0) tr.use_quota_sampler(quota);
  return run_loop(tr, ds, cfg, paths, /*dual=*/false, quota);
}

json outcome_json(const TrialOutcome& out) {
  json j;
  j["seed"] = out.seed;
  j["config_digest"] = report::hex64(out.config_digest);
  j["param_digest"] = report::hex64(out.param_digest);
  j["iterations"] = out.iterations;
  j["accuracy"] = out.test.overall();
  j["accuracy_aligned"] = out.test.aligned_pct();
  j["accuracy_conflicting"] = out.test.conflicting_pct();
  j["counts"] = {{"n", out.test.n},
                 {"aligned", out.test.n_aligned},
                 {"conflicting", out.test.n_conflicting},
                 {"correct", out.test.correct},
                 {"correct_aligned", out.test.correct_aligned},
                 {"correct_conflicting", out.test.correct_conflicting}};
  j["wall_seconds"] = out.wall_seconds;
  if (!out.checkpoint.empty()) j["checkpoint"] = out.checkpoint;
  return j;
}

TrialOutcome cached_run(const Cache& cache, const data::BiasedDataset& ds,
                        const train::TrainConfig& cfg, bool dual, int quota,
                        bool want_checkpoint) {
  if (cache.dir.empty()) {
    if (want_checkpoint) {
      throw ContractError("a checkpoint was requested but caching is disabled");
    }
    return dual ? run_dual(ds, cfg, {}) : run_vanilla(ds, cfg, quota, {});
  }
  const uint64_t digest = cfg.digest(train::run_mode(dual, quota), ds.content_digest());
  const std::string key = report::hex64(digest);
  const std::string meta = cache.dir + "/run_" + key + ".json";
  const std::string ckpt = cache.dir + "/ck_" + key + ".ckpt";
  if (file_exists(meta) && (!want_checkpoint || file_exists(ckpt))) {
    return load_outcome(meta, digest);
  }
  RunPaths paths;
  paths.run_log = cache.dir + "/run_" + key + ".jsonl";
  paths.checkpoint = ckpt;
  TrialOutcome out =
      dual ? run_dual(ds, cfg, paths) : run_vanilla(ds, cfg, quota, paths);
  report::write_json(meta, outcome_json(out));
  return out;
}

json train_report(const Cache& cache, const data::BiasedDataset& ds,
                  const train::TrainConfig& cfg, bool dual, int quota, int trials) {
  const auto outs = run_trials(cache, ds, cfg, dual, quota, trials);
  json j = aggregate(outs);
  j["command"] = dual ? "train" : "train-vanilla";
  j["mode"] = train::run_mode(dual, quota);
  j["dataset_digest"] = report::hex64(ds.content_digest());
  j["config_digest"] =
      report::hex64(cfg.digest(train::run_mode(dual, quota), ds.content_digest()));
  j["base_seed"] = cfg.seed;
  j["iterations"] = cfg.iterations;
  report::finalize(j);
  return j;
}

json ablation_report(const Cache& cache, const data::BiasedDataset& ds,
                     const train::TrainConfig& cfg, int trials) {
  json rows = json::array();

  auto add_row = [&](const std::string& label, const train::TrainConfig& c,
                     bool dual) {
    json row = aggregate(run_trials(cache, ds, c, dual, -1, trials));
    row["row"] = label;
    row["mode"] = train::run_mode(dual, -1);
    row["t_swap"] = c.t_swap;
    row["lambda_swap"] = c.weights.lambda_swap;
    rows.push_back(std::move(row));
  };

  add_row("vanilla", cfg, false);

  train::TrainConfig dis_only = cfg;
  dis_only.weights.lambda_swap = 0.0;
  add_row("disentangle_only", dis_only, true);

  train::TrainConfig from_start = cfg;
  from_start.t_swap = 0;
  add_row("swap_from_start", from_start, true);

  add_row("swap_scheduled", cfg, true);

  json j;
  j["command"] = "ablate";
  j["dataset_digest"] = report::hex64(ds.content_digest());
  j["base_seed"] = cfg.seed;
  j["iterations"] = cfg.iterations;
  j["rows"] = std::move(rows);
  report::finalize(j);
  return j;
}

json diversity_report(const Cache& cache, const data::BiasedDataset& ds_1pct,
                      const data::BiasedDataset& ds_5pct,
                      const train::TrainConfig& cfg, int trials) {
  const auto check_ratio = [](const data::BiasedDataset& ds, double want) {
    if (std::abs(ds.spec.conflict_ratio - want) > 1e-9) {
      throw ConfigError("diversity experiment needs dataset builds at ratios "
                        "0.01 and 0.05");
    }
  };
  check_ratio(ds_1pct, 0.01);
  check_ratio(ds_5pct, 0.05);

  json cells = json::array();
  for (const double diversity : {0.01, 0.05}) {
    const auto& ds = diversity == 0.01 ? ds_1pct : ds_5pct;
    for (const double sampling : {0.01, 0.5}) {
      const int quota =
          static_cast<int>(std::lround(sampling * static_cast<double>(cfg.batch_size)));
      if (quota < 1) {
        throw ConfigError("sampling ratio times batch size must be >= 1");
      }
      json cell = aggregate(run_trials(cache, ds, cfg, false, quota, trials));
      cell["diversity_ratio"] = diversity;
      cell["sampling_ratio"] = sampling;
      cell["quota"] = quota;
      cell["dataset_digest"] = report::hex64(ds.content_digest());
      cells.push_back(std::move(cell));
    }
  }

  json j;
  j["command"] = "diversity";
  j["base_seed"] = cfg.seed;
  j["iterations"] = cfg.iterations;
  j["batch_size"] = cfg.batch_size;
  j["cells"] = std::move(cells);
  report::finalize(j);
  return j;
}

json single_report(const data::BiasedDataset& ds, const train::TrainConfig& cfg,
                   bool dual, int quota, const RunPaths& paths) {
  train::TrainConfig c = cfg;
  c.seed = trial_seed(cfg.seed, 0);
  const TrialOutcome out =
      dual ? run_dual(ds, c, paths) : run_vanilla(ds, c, quota, paths);
  json j = aggregate({out});
  j["command"] = dual ? "train" : "train-vanilla";
  j["mode"] = train::run_mode(dual, quota);
  j["dataset_digest"] = report::hex64(ds.content_digest());
  j["config_digest"] =
      report::hex64(cfg.digest(train::run_mode(dual, quota), ds.content_digest()));
  j["base_seed"] = cfg.seed;
  j["iterations"] = cfg.iterations;
  report::finalize(j);
  return j;
}

json resume_report(const data::BiasedDataset& ds, const std::string& checkpoint_path,
                   const ResumeOptions& opt, const RunPaths& paths) {
  const train::CheckpointSummary sum = train::summarize_checkpoint(checkpoint_path);
  train::TrainConfig cfg = sum.config;
  if (opt.iterations > 0) cfg.iterations = opt.iterations;
  if (opt.eval_every >= 0) cfg.eval_every = opt.eval_every;
  if (opt.log_every >= 0) cfg.log_every = opt.log_every;
  if (sum.t >= cfg.iterations) {
    throw ConfigError("checkpoint " + checkpoint_path + " is already at iteration " +
                      std::to_string(sum.t) + "; raise --iterations to continue");
  }
  TrialOutcome out;
  if (sum.dual) {
    auto tr = train::DualTrainer::resume(checkpoint_path, ds, cfg, opt.force);
    out = run_loop(tr, ds, cfg, paths, true, -1);
  } else {
    auto tr = train::VanillaTrainer::resume(checkpoint_path, ds, cfg, opt.force);
    out = run_loop(tr, ds, cfg, paths, false, sum.quota);
  }
  json j = aggregate({out});
  j["command"] = "resume";
  j["mode"] = train::run_mode(sum.dual, sum.quota);
  j["dataset_digest"] = report::hex64(ds.content_digest());
  j["config_digest"] = report::hex64(
      cfg.digest(train::run_mode(sum.dual, sum.quota), ds.content_digest()));
  j["resumed_from"] = sum.t;
  j["base_seed"] = cfg.seed;
  j["iterations"] = cfg.iterations;
  report::finalize(j);
  return j;
}

json probe_report(const data::BiasedDataset& ds, const train::TrainConfig& cfg,
                  const std::string& checkpoint_path, uint64_t probe_seed,
                  int n_perms) {
  train::DualTrainer tr = train::DualTrainer::resume(checkpoint_path, ds, cfg);
  const auto probe =
      eval::swap_probe(tr.model(), ds, ds.test, tr.prep(), probe_seed, n_perms);
  json j;
  j["command"] = "probe-swap";
  j["config_digest"] =
      report::hex64(cfg.digest(train::run_mode(true, -1), ds.content_digest()));
  j["dataset_digest"] = report::hex64(ds.content_digest());
  j["probe_seed"] = probe_seed;
  j["permutations"] = probe.permutations;
  j["intrinsic_original"] = probe.intrinsic_original;
  j["intrinsic_swapped"] = probe.intrinsic_swapped;
  j["bias_original"] = probe.bias_original;
  j["bias_swapped"] = probe.bias_swapped;
  report::finalize(j);
  return j;
}

}  // namespace dfa::exp
