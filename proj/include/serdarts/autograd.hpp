// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "serdarts/tensor.hpp"

namespace serdarts {

/// Topologically ordered record of the operations that produced a tensor.
/// Every entry's inputs appear before it.
template <typename T>
class Tape {
 public:
  static Tape record(const Tensor<T>& root);

  std::size_t size() const { return entries_.size(); }
  std::span<TensorNode<T>* const> entries() const { return entries_; }

  /// Runs each entry's gradient rule in reverse order. Interior gradient
  /// buffers are released once consumed; leaves and the root keep theirs.
  void replay_backward() const;

 private:
  std::vector<TensorNode<T>*> entries_;
};

/// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tracked
/// leaf reachable from `loss`.
template <typename T>
void backward(const Tensor<T>& loss);

template <typename T>
void zero_grad(std::span<Tensor<T>> tensors);

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace serdarts
