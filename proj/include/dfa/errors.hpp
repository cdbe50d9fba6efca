#pragma once

#include <stdexcept>
#include <string>

namespace dfa {

// Bad flags, invalid hyperparameters, unknown config keys.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data: bad magic, digest mismatch, impossible counts.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated preconditions in the math core: shape mismatches, non-bijective
// permutations, non-scalar backward roots.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf state or a failed numeric self-check.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dfa
