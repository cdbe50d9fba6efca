#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <vector>

#include "dfa/binio.hpp"
#include "dfa/errors.hpp"
#include "dfa/rng.hpp"

namespace dfa::train {

// Mini-batch index source. Implementations are deterministic functions of
// their seed and call sequence, and serialize their full state so a resumed
// run continues the exact same index stream.
class BatchSampler {
 public:
  virtual ~BatchSampler() = default;
  virtual std::vector<int64_t> next(int batch) = 0;
  virtual void save(std::ostream& os) const = 0;
  virtual void load(std::istream& is) = 0;
};

// Epoch-wise shuffle without replacement. A batch never straddles an epoch
// boundary: when fewer than `batch` indices remain the pool is reshuffled and
// the leftovers of the old epoch are dropped.
class EpochSampler final : public BatchSampler {
 public:
  EpochSampler(int64_t n, Rng rng) : n_(n), rng_(std::move(rng)), cursor_(n) {
    if (n_ <= 0) throw ContractError("EpochSampler needs a non-empty pool");
  }

  std::vector<int64_t> next(int batch) override {
    if (batch <= 0) throw ContractError("batch size must be positive");
    if (batch > n_) {
      throw DataError("batch size " + std::to_string(batch) +
                      " exceeds the pool of " + std::to_string(n_));
    }
    if (cursor_ + batch > n_) {
      perm_ = rng_.permutation(static_cast<int>(n_));
      cursor_ = 0;
    }
    std::vector<int64_t> out(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i) {
      out[static_cast<size_t>(i)] = perm_[static_cast<size_t>(cursor_ + i)];
    }
    cursor_ += batch;
    return out;
  }

  void save(std::ostream& os) const override {
    binio::write_string(os, rng_.save());
    binio::write_pod<int64_t>(os, cursor_);
    binio::write_vec(os, perm_);
  }

  void load(std::istream& is) override {
    rng_.restore(binio::read_string(is));
    cursor_ = binio::read_pod<int64_t>(is);
    perm_ = binio::read_vec<int>(is);
  }

 private:
  int64_t n_;
  Rng rng_;
  int64_t cursor_;
  std::vector<int> perm_;
};

// Batch composer with a fixed per-batch quota of bias-conflicting samples.
// Each pool is cycled epoch-wise without replacement; once a pool is
// exhausted it reshuffles, which re-draws samples across batches whenever the
// pool is smaller than the demand.
class QuotaSampler final : public BatchSampler {
 public:
  QuotaSampler(std::vector<int64_t> aligned_pool, std::vector<int64_t> conflicting_pool,
               int conflicting_per_batch, Rng rng)
      : aligned_(std::move(aligned_pool)),
        conflicting_(std::move(conflicting_pool)),
        quota_(conflicting_per_batch),
        rng_(std::move(rng)) {
    if (quota_ < 0) throw ContractError("conflicting quota must be >= 0");
    if (quota_ > 0 && conflicting_.empty()) {
      throw DataError("conflicting quota requested but the conflicting pool is empty");
    }
    if (aligned_.empty()) throw DataError("aligned pool is empty");
    a_cursor_ = static_cast<int64_t>(aligned_.size());
    c_cursor_ = static_cast<int64_t>(conflicting_.size());
  }

  int quota() const { return quota_; }

  std::vector<int64_t> next(int batch) override {
    if (batch <= 0) throw ContractError("batch size must be positive");
    if (quota_ > batch) {
      throw DataError("conflicting quota exceeds the batch size");
    }
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(batch));
    for (int i = 0; i < quota_; ++i) out.push_back(draw(conflicting_, c_perm_, c_cursor_));
    for (int i = quota_; i < batch; ++i) out.push_back(draw(aligned_, a_perm_, a_cursor_));
    return out;
  }

  void save(std::ostream& os) const override {
    binio::write_string(os, rng_.save());
    binio::write_pod<int64_t>(os, a_cursor_);
    binio::write_pod<int64_t>(os, c_cursor_);
    binio::write_vec(os, a_perm_);
    binio::write_vec(os, c_perm_);
  }

  void load(std::istream& is) override {
    rng_.restore(binio::read_string(is));
    a_cursor_ = binio::read_pod<int64_t>(is);
    c_cursor_ = binio::read_pod<int64_t>(is);
    a_perm_ = binio::read_vec<int64_t>(is);
    c_perm_ = binio::read_vec<int64_t>(is);
  }

 private:
  int64_t draw(const std::vector<int64_t>& pool, std::vector<int64_t>& perm,
               int64_t& cursor) {
    if (cursor >= static_cast<int64_t>(pool.size())) {
      perm = pool;
      rng_.shuffle(perm);
      cursor = 0;
    }
    return perm[static_cast<size_t>(cursor++)];
  }

  std::vector<int64_t> aligned_, conflicting_;
  int quota_;
  Rng rng_;
  std::vector<int64_t> a_perm_, c_perm_;
  int64_t a_cursor_ = 0, c_cursor_ = 0;
};

}  // namespace dfa::train
