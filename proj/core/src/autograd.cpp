#include "ileumnet/autograd.hpp"

namespace ileumnet {

template <typename T>
Var Tape<T>::push(Tensor<T> value, const Tensor<T>* external, bool requires_grad, BackwardFn fn) {
  require(nodes_.size() < Var::kInvalid, ErrorCode::kInvalidArgument, "tape overflow");
  Node node;
  node.value = std::move(value);
  node.external = external;
  node.requires_grad = requires_grad;
  node.backward = std::move(fn);
  const Tensor<T>& v = external ? *external : node.value;
  require(v.all_finite(), ErrorCode::kNonFinite, "non-finite value recorded on tape (node " +
                                                     std::to_string(nodes_.size()) + ", shape " +
                                                     to_string(v.shape()) + ")");
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (Var in : inputs) {
    if (in.valid() && nodes_.at(in.id).requires_grad) needs = true;
  }
  return push(std::move(value), nullptr, needs, needs ? std::move(fn) : BackwardFn{});
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor<T>((n.external ? *n.external : n.value).shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var root) {
  require(value(root).size() == 1, ErrorCode::kShapeMismatch, "backward root must be a single value");
  for (auto& n : nodes_) n.grad = Tensor<T>();
  if (!nodes_.at(root.id).requires_grad) return;
  grad_buffer(root).fill(T{1});
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    const Node& n = nodes_[i];
    require(n.grad.empty() || n.grad.all_finite(), ErrorCode::kNonFinite,
            "non-finite gradient at node " + std::to_string(i));
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace ileumnet
