#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfa/ad/adam.hpp"
#include "dfa/ad/tape.hpp"
#include "dfa/data/dataset.hpp"
#include "dfa/losses.hpp"
#include "dfa/model.hpp"
#include "dfa/rng.hpp"
#include "dfa/train/batch.hpp"
#include "dfa/train/sampler.hpp"

namespace dfa::train {

// Everything one training run depends on. The canonical text rendering feeds
// the config digest that checkpoints and reports carry, so any field change
// invalidates stale artifacts.
struct TrainConfig {
  EncoderKind encoder = EncoderKind::mlp;
  int hidden = 100;
  int latent_dim = 16;
  LossWeights weights;  // lambda_dis, lambda_swap_b, lambda_swap, q

  double lr = 0.01;
  int64_t lr_decay_step = 10000;
  double lr_decay_gamma = 0.5;

  int64_t iterations = 50000;
  int64_t t_swap = 10000;  // feature augmentation starts at t > t_swap
  int batch_size = 256;
  uint64_t seed = 1;

  bool augment = false;     // pad-4 crop + horizontal flip
  bool normalize = false;   // channel statistics normalization
  double w_ema = 0.0;       // 0 = live per-batch difficulty; else EMA factor

  int64_t eval_every = 1000;  // run-log test accuracy cadence (0 = never)
  int64_t log_every = 100;    // run-log loss cadence (0 = never)

  void validate(bool dual) const;

  // Stable key=value rendering of every training-relevant field.
  std::string canonical_text(const std::string& mode) const;
  uint64_t digest(const std::string& mode, uint64_t dataset_digest) const;
};

// Appendix-default bundles.
TrainConfig preset_cmnist();
TrainConfig preset_cifar_small();

// Learning rate: constant through t <= t_swap, then one gamma factor per full
// decay step counted from t_swap.
double apply_lr_schedule(int64_t t, const TrainConfig& cfg);

struct StepStats {
  int64_t t = 0;  // 1-based iteration just completed
  double l_dis = 0.0;
  std::optional<double> l_swap;  // present once the swap gate is open
  double lr = 0.0;
  std::optional<double> w_mean_aligned;
  std::optional<double> w_mean_conflicting;
};

// Shared plumbing: batch sampling, per-sample difficulty tracking, optimizer
// bookkeeping and checkpoint glue for one model family.
struct TrainerCore {
  const data::BiasedDataset* ds = nullptr;
  TrainConfig cfg;
  BatchPrep prep;
  std::unique_ptr<BatchSampler> sampler;
  Rng swap_rng{0};  // re-seeded in init()
  ad::Tape<float> tape;
  int64_t t = 0;  // completed iterations

  // Per-sample loss EMAs (enabled by cfg.w_ema > 0).
  std::vector<double> ema_i, ema_b;
  std::vector<uint8_t> ema_touched;

  void init(const data::BiasedDataset& dataset, const TrainConfig& config, bool dual);
  double lr_now() const { return apply_lr_schedule(t + 1, cfg); }
};

class DualTrainer {
 public:
  DualTrainer(const data::BiasedDataset& ds, const TrainConfig& cfg);

  StepStats step();
  int64_t completed() const { return core_.t; }
  const TrainConfig& config() const { return core_.cfg; }
  DualEncoderModel<float>& model() { return model_; }
  const DualEncoderModel<float>& model() const { return model_; }
  const ad::Tape<float>& last_tape() const { return core_.tape; }
  const BatchPrep& prep() const { return core_.prep; }

  uint64_t param_digest() const;
  void save_checkpoint(const std::string& path, uint64_t dataset_digest) const;
  // Restores a checkpoint written with an identical config + dataset digest;
  // `force` overrides the digest check (parameter shapes must still match).
  static DualTrainer resume(const std::string& path, const data::BiasedDataset& ds,
                            const TrainConfig& cfg, bool force = false);

 private:
  TrainerCore core_;
  DualEncoderModel<float> model_;
};

class VanillaTrainer {
 public:
  VanillaTrainer(const data::BiasedDataset& ds, const TrainConfig& cfg);
  // Replaces the epoch sampler with a fixed-quota batch composer.
  void use_quota_sampler(int conflicting_per_batch);

  StepStats step();
  int64_t completed() const { return core_.t; }
  const TrainConfig& config() const { return core_.cfg; }
  VanillaModel<float>& model() { return model_; }
  const VanillaModel<float>& model() const { return model_; }
  const ad::Tape<float>& last_tape() const { return core_.tape; }
  const BatchPrep& prep() const { return core_.prep; }
  int quota() const { return quota_; }

  uint64_t param_digest() const;
  void save_checkpoint(const std::string& path, uint64_t dataset_digest) const;
  static VanillaTrainer resume(const std::string& path, const data::BiasedDataset& ds,
                               const TrainConfig& cfg, bool force = false);

 private:
  TrainerCore core_;
  VanillaModel<float> model_;
  int quota_ = -1;  // -1 = plain epoch sampler
};

// FNV digest over parameter values in declaration order (name + raw bytes).
uint64_t parameter_digest(const std::vector<ad::Parameter<float>*>& params);

// Mode label carried in config digests and checkpoints: "dual", "vanilla",
// or "vanilla,quota=K" for composed batches.
std::string run_mode(bool dual, int quota);

// Decoded identity of an on-disk checkpoint: the trainer kind plus the full
// training configuration reconstructed from the stored canonical text.
// Logging cadences are not part of the identity and take defaults.
struct CheckpointSummary {
  bool dual = false;
  int quota = -1;
  int64_t t = 0;
  uint64_t config_digest = 0;
  TrainConfig config;
};
CheckpointSummary summarize_checkpoint(const std::string& path);

}  // namespace dfa::train
