#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "dfa/data/dataset.hpp"
#include "dfa/eval.hpp"
#include "dfa/train/trainer.hpp"

namespace dfa::exp {

// Per-run artifact destinations; any empty path is skipped.
struct RunPaths {
  std::string run_log;     // line-delimited JSON step records
  std::string checkpoint;  // final training state
};

// Result of one complete training run plus its test-set evaluation.
struct TrialOutcome {
  uint64_t seed = 0;
  uint64_t config_digest = 0;  // mode + config + dataset digest
  uint64_t param_digest = 0;
  int64_t iterations = 0;
  eval::Breakdown test;
  double wall_seconds = 0.0;
  std::string checkpoint;  // path when one was written
};

TrialOutcome run_dual(const data::BiasedDataset& ds, const train::TrainConfig& cfg,
                      const RunPaths& paths);
// quota < 0 trains with the plain epoch sampler; otherwise each batch holds
// exactly `quota` bias-conflicting samples.
TrialOutcome run_vanilla(const data::BiasedDataset& ds, const train::TrainConfig& cfg,
                         int quota, const RunPaths& paths);

// Completed runs recorded under their config digest so repeated experiment
// invocations reload results instead of retraining. An empty dir disables
// caching entirely (every call trains, nothing is written).
struct Cache {
  std::string dir;
};

// Runs (or reloads) one trial. With caching enabled the run log and final
// checkpoint land in the cache directory; `want_checkpoint` additionally
// demands that a cache hit still has its checkpoint file on disk.
TrialOutcome cached_run(const Cache& cache, const data::BiasedDataset& ds,
                        const train::TrainConfig& cfg, bool dual, int quota,
                        bool want_checkpoint = false);

// Seed used for trial k of a multi-trial experiment.
uint64_t trial_seed(uint64_t base_seed, int trial);

nlohmann::json outcome_json(const TrialOutcome& out);

// Multi-trial training report (mean, population std, group breakdown).
nlohmann::json train_report(const Cache& cache, const data::BiasedDataset& ds,
                            const train::TrainConfig& cfg, bool dual, int quota,
                            int trials);

// Four-row ladder over identical seeds: vanilla; disentangle-only
// (lambda_swap = 0); swap-from-start (t_swap = 0); scheduled swap (the given
// config).
nlohmann::json ablation_report(const Cache& cache, const data::BiasedDataset& ds,
                               const train::TrainConfig& cfg, int trials);

// 2x2 grid over conflicting-pool diversity (1% vs 5% dataset builds) and
// per-batch sampling ratio (1% vs 50% of the batch drawn conflicting).
nlohmann::json diversity_report(const Cache& cache,
                                const data::BiasedDataset& ds_1pct,
                                const data::BiasedDataset& ds_5pct,
                                const train::TrainConfig& cfg, int trials);

// Loads a trained dual model from its checkpoint and scores both heads
// before/after bias-latent swapping on the test split.
nlohmann::json probe_report(const data::BiasedDataset& ds,
                            const train::TrainConfig& cfg,
                            const std::string& checkpoint_path, uint64_t probe_seed,
                            int n_perms = 10);

// One derived-seed trial with explicit artifact paths, reported in the same
// shape as train_report.
nlohmann::json single_report(const data::BiasedDataset& ds,
                             const train::TrainConfig& cfg, bool dual, int quota,
                             const RunPaths& paths);

struct ResumeOptions {
  bool force = false;       // accept a configuration that no longer matches
  int64_t iterations = 0;   // >0 overrides the stored target (a config change)
  int64_t eval_every = -1;  // cadences are not part of the stored identity;
  int64_t log_every = -1;   // negative keeps the defaults
};

// Continues a checkpointed run to its target iteration count and reports the
// completed trial.
nlohmann::json resume_report(const data::BiasedDataset& ds,
                             const std::string& checkpoint_path,
                             const ResumeOptions& opt, const RunPaths& paths);

}  // namespace dfa::exp
