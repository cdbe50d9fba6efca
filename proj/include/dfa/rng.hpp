#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dfa/errors.hpp"

namespace dfa {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

// Named sub-stream tags so independent consumers never share a stream.
namespace rng_tag {
constexpr uint64_t init = 0x11;
constexpr uint64_t batch = 0x22;
constexpr uint64_t swap = 0x33;
constexpr uint64_t assign = 0x44;     // dataset aligned/conflicting assignment
constexpr uint64_t colorize = 0x55;   // bias attribute draws
constexpr uint64_t corrupt = 0x66;    // per-image corruption noise
constexpr uint64_t test_bias = 0x77;  // test-split bias draws
constexpr uint64_t augment = 0x88;    // train-time crop/flip
constexpr uint64_t probe = 0x99;      // swap-probe permutations
}  // namespace rng_tag

// Deterministic RNG stream. The distribution helpers are hand rolled so that
// sampled values do not depend on the standard library's unspecified
// distribution algorithms; only the mt19937_64 engine (which is fully
// specified) comes from the stdlib.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng stream(uint64_t seed, uint64_t tag) {
    return Rng(mix_seed(seed, tag));
  }

  uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n) via Lemire's method with rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) throw ContractError("Rng::below: n must be positive");
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<__uint128_t>(next_u64()) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  int below_int(int n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without a cached spare, so every call consumes exactly two
  // engine draws regardless of call history.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));  // u1 in [0,1) -> 1-u1 in (0,1]
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
    shuffle(p);
    return p;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string save() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (is.fail()) throw DataError("Rng::restore: malformed engine state");
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dfa
