// SPDX-License-Identifier: Apache-2.0
#include "serdarts/autograd.hpp"

#include <algorithm>
#include <unordered_set>
#include <utility>

namespace serdarts {

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  Tape tape;
  if (!root.tracked()) return tape;
  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::unordered_set<TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode<T>* child = node->inputs[next++].get();
      if (child->tracked && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    tape.entries_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
void Tape<T>::replay_backward() const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    TensorNode<T>* node = *it;
    if (node->is_leaf()) continue;
    if (node->grad.empty()) continue;  // no gradient reached this node
    if (node->grad_rule) node->grad_rule(*node);
    if (node == entries_.back()) continue;  // the root keeps its seed
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward expects a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.tracked()) throw Error("backward called on an untracked tensor");
  auto tape = Tape<T>::record(loss);
  loss.node()->ensure_grad()[0] += T(1);
  if (loss.is_leaf()) return;
  tape.replay_backward();
}

template <typename T>
void zero_grad(std::span<Tensor<T>> tensors) {
  for (auto& t : tensors) t.zero_grad();
}

template class Tape<float>;
template class Tape<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template void zero_grad(std::span<Tensor<float>>);
template void zero_grad(std::span<Tensor<double>>);

}  // namespace serdarts
