#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dfa/data/dataset.hpp"
#include "dfa/errors.hpp"
#include "dfa/model.hpp"
#include "dfa/train/batch.hpp"

namespace dfa::eval {

// Correct-prediction tallies for one split, kept as exact counts so the
// overall accuracy is the sample-weighted combination of the group
// accuracies by construction.
struct Breakdown {
  int64_t n = 0, n_aligned = 0, n_conflicting = 0;
  int64_t correct = 0, correct_aligned = 0, correct_conflicting = 0;

  double overall() const { return n == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(n); }
  double aligned_pct() const {
    return n_aligned == 0 ? 0.0
                          : 100.0 * static_cast<double>(correct_aligned) /
                                static_cast<double>(n_aligned);
  }
  double conflicting_pct() const {
    return n_conflicting == 0 ? 0.0
                              : 100.0 * static_cast<double>(correct_conflicting) /
                                    static_cast<double>(n_conflicting);
  }
};

// Scores a row-prediction callable over a split in fixed windows.
// Augmentation is always disabled here: evaluation sees the data as-is.
template <class PredictFn>
Breakdown evaluate_with(const data::BiasedDataset& ds, const data::Split& split,
                        train::BatchPrep prep, PredictFn&& predict,
                        int window = 512) {
  if (split.n == 0) throw DataError("cannot evaluate an empty split");
  if (window < 1) throw ContractError("evaluation window must be >= 1");
  prep.augment = false;
  Breakdown bd;
  std::vector<int64_t> idx;
  for (int64_t start = 0; start < split.n; start += window) {
    const int64_t stop = std::min<int64_t>(split.n, start + window);
    idx.resize(static_cast<size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto x = train::assemble_batch(ds, split, idx, prep, /*iteration=*/0);
    const std::vector<int> pred = predict(x);
    if (pred.size() != idx.size()) {
      throw ContractError("prediction count does not match the window");
    }
    for (size_t k = 0; k < idx.size(); ++k) {
      const auto s = static_cast<size_t>(idx[k]);
      const bool hit = pred[k] == static_cast<int>(split.targets[s]);
      const bool aligned = split.aligned[s] != 0;
      ++bd.n;
      (aligned ? bd.n_aligned : bd.n_conflicting) += 1;
      if (hit) {
        ++bd.correct;
        (aligned ? bd.correct_aligned : bd.correct_conflicting) += 1;
      }
    }
  }
  return bd;
}

inline Breakdown evaluate(const DualEncoderModel<float>& m,
                          const data::BiasedDataset& ds, const data::Split& split,
                          train::BatchPrep prep, int window = 512) {
  return evaluate_with(ds, split, prep,
                       [&](const ad::Tensor<float>& x) { return m.predict(x); },
                       window);
}

inline Breakdown evaluate(const VanillaModel<float>& m, const data::BiasedDataset& ds,
                          const data::Split& split, train::BatchPrep prep,
                          int window = 512) {
  return evaluate_with(ds, split, prep,
                       [&](const ad::Tensor<float>& x) { return m.predict(x); },
                       window);
}

// Head accuracies before and after replacing each sample's bias latent with
// another sample's. The intrinsic head is scored against target labels; the
// bias head against the bias attribute of whichever sample supplied the bias
// latent (the donor under swapping).
struct SwapProbe {
  double intrinsic_original = 0.0;
  double bias_original = 0.0;
  double intrinsic_swapped = 0.0;  // mean over permutations
  double bias_swapped = 0.0;       // mean over permutations
  int permutations = 0;
};

// Explicit-permutation seam (identity permutations must reproduce the
// original accuracies exactly).
SwapProbe swap_probe_with_perms(const DualEncoderModel<float>& m,
                                const data::BiasedDataset& ds,
                                const data::Split& split, train::BatchPrep prep,
                                const std::vector<std::vector<int>>& perms,
                                int window = 512);

// Seeded variant: averages over `n_perms` whole-split permutations drawn from
// the probe stream of `seed`.
SwapProbe swap_probe(const DualEncoderModel<float>& m, const data::BiasedDataset& ds,
                     const data::Split& split, train::BatchPrep prep, uint64_t seed,
                     int n_perms = 10, int window = 512);

// CSV of both latent halves: sample_id, target_label, bias_label,
// z_i_0..z_i_{d-1}, z_b_0..z_b_{d-1}. One row per sample, deterministic bytes.
void dump_embeddings(const DualEncoderModel<float>& m, const data::BiasedDataset& ds,
                     const data::Split& split, train::BatchPrep prep,
                     const std::string& path, int window = 512);

}  // namespace dfa::eval
