#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfa/ad/tensor.hpp"
#include "dfa/errors.hpp"

namespace dfa::ad {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> m, v;  // Adam first/second moment estimates
  int64_t steps = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> t) : name(std::move(n)), value(std::move(t)) {
    value.set_requires_grad(true);
    m.assign(static_cast<size_t>(value.size()), T(0));
    v.assign(static_cast<size_t>(value.size()), T(0));
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("adam: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam: betas must lie in [0,1)");
    }
    if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
    if (weight_decay < 0.0) throw ConfigError("adam: weight_decay must be >= 0");
  }
};

// One Adam update over every parameter. Parameters whose grad buffer was never
// touched this step are treated as having a zero gradient (their moments still
// decay, matching the usual framework semantics for an all-zero grad).
// Gradients are zeroed afterwards.
template <class T>
void adam_step(std::span<Parameter<T>*> params, const AdamConfig& cfg) {
  cfg.validate();
  for (Parameter<T>* p : params) {
    p->steps += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->steps));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T lr_t = static_cast<T>(cfg.lr * std::sqrt(bc2) / bc1);
    const T eps_hat = static_cast<T>(cfg.eps * std::sqrt(bc2));
    const bool had_grad = p->value.has_grad();
    const T* gbuf = had_grad ? p->value.grad().data() : nullptr;
    auto& vals = p->value.vals();
    for (size_t i = 0; i < vals.size(); ++i) {
      T g = gbuf ? gbuf[i] : T(0);
      if (cfg.weight_decay != 0.0) g += static_cast<T>(cfg.weight_decay) * vals[i];
      p->m[i] = b1 * p->m[i] + (T(1) - b1) * g;
      p->v[i] = b2 * p->v[i] + (T(1) - b2) * g * g;
      vals[i] -= lr_t * p->m[i] / (std::sqrt(p->v[i]) + eps_hat);
    }
    p->value.zero_grad();
  }
}

}  // namespace dfa::ad
