#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dfa/ad/adam.hpp"
#include "dfa/ad/ops.hpp"
#include "dfa/ad/tape.hpp"
#include "dfa/rng.hpp"

namespace dfa::ad {

struct GradCheckConfig {
  double h = 1e-3;
  int coords_per_tensor = 8;
  // Relative error uses max(|analytic|, |numeric|, rel_floor) as denominator so
  // that near-zero gradients are held to an absolute tolerance of
  // tol * rel_floor instead of an unbounded relative one.
  double rel_floor = 1e-2;
  uint64_t seed = 12345;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  int64_t kink_skips = 0;
  std::string worst_param;
  int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of reverse-mode gradients for every parameter.
// `loss_fn` must be deterministic and must treat a null tape as a pure forward
// evaluation. Coordinates whose +/-h evaluations change any relu activation
// sign are skipped (the loss is not differentiable across those kinks).
template <class T>
GradCheckReport finite_diff_check(std::span<Parameter<T>*> params,
                                  const std::function<Tensor<T>(Tape<T>*)>& loss_fn,
                                  const GradCheckConfig& cfg) {
  Tape<T> tape;
  for (auto* p : params) p->value.drop_grad();
  Tensor<T> loss = loss_fn(&tape);
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) {
    if (p->value.has_grad()) {
      analytic.push_back(p->value.grad());
    } else {
      analytic.emplace_back(static_cast<size_t>(p->value.size()), T(0));
    }
    p->value.drop_grad();
  }

  auto eval = [&](uint64_t* sign_hash) {
    uint64_t h = kFnvOffset;
    relu_sign_sink = &h;
    double v = static_cast<double>(loss_fn(nullptr).item());
    relu_sign_sink = nullptr;
    if (sign_hash) *sign_hash = h;
    return v;
  };

  uint64_t base_hash = 0;
  eval(&base_hash);

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi]->value.vals();
    const int64_t n = static_cast<int64_t>(vals.size());
    Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(pi)));
    std::vector<int64_t> coords;
    if (n <= cfg.coords_per_tensor) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      while (static_cast<int>(coords.size()) < cfg.coords_per_tensor) {
        int64_t c = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
        bool dup = false;
        for (int64_t prev : coords) dup = dup || (prev == c);
        if (!dup) coords.push_back(c);
      }
    }
    for (int64_t c : coords) {
      const T orig = vals[static_cast<size_t>(c)];
      uint64_t hash_plus = 0, hash_minus = 0;
      vals[static_cast<size_t>(c)] = orig + static_cast<T>(cfg.h);
      const double f_plus = eval(&hash_plus);
      vals[static_cast<size_t>(c)] = orig - static_cast<T>(cfg.h);
      const double f_minus = eval(&hash_minus);
      vals[static_cast<size_t>(c)] = orig;
      if (hash_plus != base_hash || hash_minus != base_hash) {
        ++report.kink_skips;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * cfg.h);
      const double a = static_cast<double>(analytic[pi][static_cast<size_t>(c)]);
      const double denom =
          std::max({std::fabs(a), std::fabs(numeric), cfg.rel_floor});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[pi]->name;
        report.worst_coord = c;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace dfa::ad
