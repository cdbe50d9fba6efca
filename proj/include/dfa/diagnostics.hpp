#pragma once
// Gradient self-test for the dual-encoder composite objective, shared by the
// command-line `gradcheck` subcommand and the acceptance checks.
#include <cstdint>
#include <string>

#include "dfa/losses.hpp"
#include "dfa/model.hpp"

namespace dfa::diag {

struct GradCheckSpec {
  int instances = 20;
  uint64_t seed = 1;
  int batch = 6;              // rows per random input batch
  double h = 1e-3;            // central-difference step
  double tolerance = 1e-4;    // pass threshold on the max relative error
  int coords_per_tensor = 6;  // sampled coordinates per parameter tensor
  ModelGeometry geometry{};   // defaults to the stock MLP (latent 16)
  LossWeights weights{};      // defaults to the MNIST loss weights
};

struct GradCheckOutcome {
  int instances = 0;
  int64_t coords_checked = 0;
  int64_t kink_skips = 0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string worst_param;  // parameter holding the worst coordinate
  int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Builds `instances` seeded random dual-encoder models, evaluates the full
// composite objective (difficulty-weighted disentanglement term plus the
// swap term under a fixed permutation), and compares reverse-mode gradients
// against 64-bit central finite differences. The per-sample difficulty
// weights and each head's view of the opposite latent half are constants of
// the objective by definition, so the finite-difference oracle freezes them
// at the base point.
GradCheckOutcome gradcheck_dual(const GradCheckSpec& spec);

}  // namespace dfa::diag
