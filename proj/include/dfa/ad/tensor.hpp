#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dfa/errors.hpp"

namespace dfa::ad {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) {
    if (e < 0) throw ContractError("negative extent in shape");
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline uint64_t next_tensor_id() {
  static std::atomic<uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <class T>
struct TensorStorage {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  int node = -1;         // producing tape node, -1 for leaves and constants
  uint64_t epoch = 0;    // tape epoch `node` belongs to
  uint64_t id = next_tensor_id();
};

// Shared-buffer dense tensor. Copies are shallow: they alias the same storage,
// which is what lets backward closures capture operands cheaply.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : s_(std::make_shared<TensorStorage<T>>()) {
    s_->shape = std::move(shape);
    s_->values.assign(static_cast<size_t>(shape_numel(s_->shape)), T(0));
  }

  Tensor(Shape shape, std::vector<T> values)
      : s_(std::make_shared<TensorStorage<T>>()) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
      throw ContractError("tensor value count " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
    }
    s_->shape = std::move(shape);
    s_->values = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.vals()) x = v;
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }

  const Shape& shape() const { return s_->shape; }
  int dim(int i) const { return s_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(s_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(s_->values.size()); }

  std::vector<T>& vals() { return s_->values; }
  const std::vector<T>& vals() const { return s_->values; }

  T item() const {
    if (size() != 1) {
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return s_->values[0];
  }

  bool has_grad() const { return !s_->grad.empty(); }

  void ensure_grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->values.size(), T(0));
  }

  std::vector<T>& grad() {
    ensure_grad();
    return s_->grad;
  }

  const std::vector<T>& grad() const {
    if (s_->grad.empty()) {
      throw ContractError("grad accessed before any accumulation");
    }
    return s_->grad;
  }

  void zero_grad() {
    if (!s_->grad.empty()) s_->grad.assign(s_->grad.size(), T(0));
  }

  void drop_grad() { s_->grad.clear(); }

  void accumulate_grad(std::span<const T> g) {
    if (static_cast<int64_t>(g.size()) != size()) {
      throw ContractError("grad accumulation size mismatch");
    }
    ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) s_->grad[i] += g[i];
  }

  bool requires_grad() const { return s_->requires_grad; }

  Tensor& set_requires_grad(bool v) {
    s_->requires_grad = v;
    return *this;
  }

  int node() const { return s_->node; }
  uint64_t epoch() const { return s_->epoch; }
  uint64_t id() const { return s_->id; }

  void bind_node(int node, uint64_t epoch) {
    s_->node = node;
    s_->epoch = epoch;
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  std::shared_ptr<TensorStorage<T>> s_;
};

}  // namespace dfa::ad
