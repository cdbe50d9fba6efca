#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dfa/ad/ops.hpp"
#include "dfa/errors.hpp"

namespace dfa {

struct LossWeights {
  double lambda_dis = 10.0;    // weight on the bias head's amplified loss
  double lambda_swap_b = 10.0; // same, inside the swap term
  double lambda_swap = 1.0;    // weight of the whole swap term
  double q = 0.7;              // amplification exponent

  void validate() const {
    if (lambda_dis < 0 || lambda_swap_b < 0 || lambda_swap < 0) {
      throw ConfigError("loss weights must be >= 0");
    }
    if (!(q > 0.0 && q <= 1.0)) {
      throw ConfigError("q must lie in (0,1], got " + std::to_string(q));
    }
  }
};

// Per-sample reweighting coefficient ce_b / (ce_i + ce_b), computed from loss
// values and deliberately returned as a constant (no graph history), so no
// gradient ever flows through it. Both-zero rows fall back to 0.5.
template <class T>
ad::Tensor<T> relative_difficulty(const std::vector<T>& ce_i,
                                  const std::vector<T>& ce_b) {
  if (ce_i.size() != ce_b.size()) {
    throw ContractError("relative_difficulty: length mismatch");
  }
  std::vector<T> w(ce_i.size());
  for (size_t k = 0; k < w.size(); ++k) {
    const T a = ce_i[k], b = ce_b[k];
    if (a < T(0) || b < T(0) || !std::isfinite(static_cast<double>(a)) ||
        !std::isfinite(static_cast<double>(b))) {
      throw NumericError("relative_difficulty: losses must be finite and >= 0");
    }
    // Epsilon defines the 0/0 case as 0: a sample both branches already
    // classify perfectly carries no reweighting signal.
    w[k] = b / (a + b + T(1e-8));
  }
  const int n = static_cast<int>(w.size());
  return ad::Tensor<T>({n}, std::move(w));
}

// Disentanglement objective: mean_k [ w_k * ce(logits_i)_k + lambda_dis *
// gce(logits_b)_k ]. `w` enters as a constant coefficient vector.
template <class T>
ad::Tensor<T> disentangle_loss(ad::Tape<T>* tape, const ad::Tensor<T>& w,
                               const ad::Tensor<T>& logits_i,
                               const ad::Tensor<T>& logits_b,
                               const std::vector<int>& labels,
                               const LossWeights& lw) {
  lw.validate();
  auto ce_vec = ad::softmax_ce(tape, logits_i, labels);
  auto gce_vec = ad::gce(tape, logits_b, labels, lw.q);
  auto weighted = ad::mul(tape, ce_vec, w);
  auto total = ad::add(tape, weighted, ad::scale(tape, gce_vec, lw.lambda_dis));
  return ad::mean_all(tape, total);
}

// Swap objective: the same shape as disentangle_loss but evaluated on logits
// from swapped latent pairs; the bias head is supervised with the donor labels.
template <class T>
ad::Tensor<T> swap_loss(ad::Tape<T>* tape, const ad::Tensor<T>& w,
                        const ad::Tensor<T>& logits_i_swap,
                        const ad::Tensor<T>& logits_b_swap,
                        const std::vector<int>& labels,
                        const std::vector<int>& donor_labels,
                        const LossWeights& lw) {
  lw.validate();
  auto ce_vec = ad::softmax_ce(tape, logits_i_swap, labels);
  auto gce_vec = ad::gce(tape, logits_b_swap, donor_labels, lw.q);
  auto weighted = ad::mul(tape, ce_vec, w);
  auto total = ad::add(tape, weighted, ad::scale(tape, gce_vec, lw.lambda_swap_b));
  return ad::mean_all(tape, total);
}

// Scheduled combination. Before the gate opens (t <= t_swap) or when the swap
// term is disabled, this is just the disentanglement loss.
template <class T>
ad::Tensor<T> total_loss(ad::Tape<T>* tape, const ad::Tensor<T>& l_dis,
                         const ad::Tensor<T>* l_swap, int64_t t, int64_t t_swap,
                         const LossWeights& lw) {
  const bool gated_on = t > t_swap && lw.lambda_swap > 0.0;
  if (!gated_on) return l_dis;
  if (!l_swap) throw ContractError("total_loss: swap term required after gate opens");
  return ad::add(tape, l_dis, ad::scale(tape, *l_swap, lw.lambda_swap));
}

// Value-only cross-entropy rows, used when a loss value feeds the coefficient
// computation but must not add graph nodes.
template <class T>
std::vector<T> ce_values(const ad::Tensor<T>& logits, const std::vector<int>& labels) {
  return ad::softmax_ce<T>(nullptr, logits, labels).vals();
}

}  // namespace dfa
