#pragma once
// Canonical experiment setups shared by the long-running experiment driver
// and the acceptance checks. Cached runs are keyed by the configuration
// digest, so every consumer must construct byte-identical configurations.
#include "dfa/data/dataset.hpp"
#include "dfa/train/trainer.hpp"

namespace setups {

inline dfa::data::BiasedDatasetSpec cmnist(double ratio) {
  dfa::data::BiasedDatasetSpec s;
  s.base = dfa::data::BaseDataset::colored_mnist;
  s.conflict_ratio = ratio;
  s.seed = 1;
  return s;
}

inline dfa::data::BiasedDatasetSpec cifar_subset() {
  dfa::data::BiasedDatasetSpec s;
  s.base = dfa::data::BaseDataset::corrupted_cifar10;
  s.conflict_ratio = 0.01;
  s.seed = 1;
  s.subset_per_class = 1000;
  return s;
}

inline dfa::train::TrainConfig cmnist_train() { return dfa::train::preset_cmnist(); }

// Reduced-scale conv schedule sized for a single desk CPU core: the
// 10K-image subset needs far fewer steps than the full corpus, and the
// shortened decay step keeps two halvings inside the post-warmup window.
inline dfa::train::TrainConfig cifar_reduced() {
  dfa::train::TrainConfig c = dfa::train::preset_cifar_small();
  c.batch_size = 128;
  c.iterations = 6000;
  c.t_swap = 1500;
  c.lr_decay_step = 2000;
  return c;
}

}  // namespace setups
