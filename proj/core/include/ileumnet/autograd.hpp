#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "ileumnet/tensor.hpp"

namespace ileumnet {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

/// Reverse-mode tape for one forward pass. Nodes are appended in evaluation
/// order, so replaying them backwards is a valid topological order. A tape is
/// single-writer; separate samples use separate tapes.
template <typename T>
class Tape {
 public:
  // Called during backward with the node's accumulated output gradient; must
  // add contributions into its inputs through grad_buffer().
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<T> value) { return push(std::move(value), nullptr, false, {}); }
  Var variable(Tensor<T> value) { return push(std::move(value), nullptr, true, {}); }

  // Leaf that refers to externally owned storage (parameters) without copying.
  // The referenced tensor must outlive the tape.
  Var bind(const Tensor<T>& external, bool requires_grad) {
    return push(Tensor<T>(), &external, requires_grad, {});
  }

  // Records an op result. The backward closure is dropped when no input needs
  // a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  // Gradient reaching `v` during the last backward(); empty if none did.
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }

  // Zero-initialised on first use.
  Tensor<T>& grad_buffer(Var v);

  /// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, const Tensor<T>* external, bool requires_grad, BackwardFn fn);

  std::vector<Node> nodes_;
};

}  // namespace ileumnet
