#pragma once

#include <cstring>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dfa/ad/tensor.hpp"
#include "dfa/errors.hpp"

namespace dfa::ad {

// Records one node per differentiable op. backward() replays the closures in
// reverse topological order (which is just recording order reversed). Nodes
// whose output never received a gradient are skipped, so unreachable inputs end
// the pass with no grad buffer at all.
template <class T>
class Tape {
 public:
  struct Node {
    const char* op;
    uint64_t out_id;
    std::vector<uint64_t> input_ids;       // every operand, for provenance
    std::vector<uint64_t> grad_input_ids;  // operands that accumulate gradient
    std::function<void()> backward;
  };

  int push(const char* op, uint64_t out_id, std::vector<uint64_t> input_ids,
           std::vector<uint64_t> grad_input_ids, std::function<void()> backward) {
    nodes_.push_back(Node{op, out_id, std::move(input_ids),
                          std::move(grad_input_ids), std::move(backward)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void backward(Tensor<T>& root) {
    if (root.size() != 1) {
      throw ContractError("backward root must be scalar, got shape " +
                          shape_str(root.shape()));
    }
    if (root.node() >= 0 && root.epoch() != epoch_) {
      throw ContractError("backward root was recorded on a different tape epoch");
    }
    root.ensure_grad();
    root.grad()[0] += T(1);
    if (root.node() < 0) return;
    for (int i = root.node(); i >= 0; --i) nodes_[static_cast<size_t>(i)].backward();
  }

  void reset() {
    nodes_.clear();
    ++epoch_;
  }

  uint64_t epoch() const { return epoch_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  size_t node_count() const { return nodes_.size(); }

  bool contains_op(const char* op) const {
    for (const auto& n : nodes_) {
      if (std::strcmp(n.op, op) == 0) return true;
    }
    return false;
  }

  // True when a gradient rooted at `from` can flow into the tensor with
  // `target_id`. Only edges that actually accumulate gradient are followed, so
  // constants and detached operands are unreachable even though they appear in
  // `input_ids`.
  bool reaches(const Tensor<T>& from, uint64_t target_id) const {
    if (from.id() == target_id) return true;
    if (from.node() < 0) return false;
    std::unordered_map<uint64_t, int> producer;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      producer[nodes_[i].out_id] = static_cast<int>(i);
    }
    std::vector<int> stack{from.node()};
    std::vector<bool> seen(nodes_.size(), false);
    seen[static_cast<size_t>(from.node())] = true;
    while (!stack.empty()) {
      int ni = stack.back();
      stack.pop_back();
      for (uint64_t in : nodes_[static_cast<size_t>(ni)].grad_input_ids) {
        if (in == target_id) return true;
        auto it = producer.find(in);
        if (it != producer.end() && !seen[static_cast<size_t>(it->second)]) {
          seen[static_cast<size_t>(it->second)] = true;
          stack.push_back(it->second);
        }
      }
    }
    return false;
  }

 private:
  std::vector<Node> nodes_;
  uint64_t epoch_ = 1;
};

}  // namespace dfa::ad
