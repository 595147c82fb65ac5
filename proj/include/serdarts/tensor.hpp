// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace serdarts {

/// Base exception for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Thread-local switch controlling whether new results are attached to the
/// autograd graph.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Digest of the discrete branches (ReLU signs, max-pool winners) taken by
/// forward passes on this thread while a trace is active. Two evaluations
/// with equal digests lie on the same smooth piece of a piecewise-smooth
/// function. Traces nest; only the innermost one records.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return digest_; }

  static bool active();
  static void record(std::uint64_t value);

 private:
  std::uint64_t digest_;
  BranchTrace* previous_;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool tracked = false;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Propagates this node's grad into its inputs' grads (accumulating).
  std::function<void(TensorNode&)> grad_rule;
  std::string_view op = "leaf";

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
  bool is_leaf() const { return inputs.empty(); }
};

/// Dense row-major tensor handle. Copies share the underlying node; use
/// `clone()` for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool tracked() const { return node_ && node_->tracked; }
  /// Marks a leaf as participating in differentiation.
  Tensor& set_tracked(bool tracked = true);

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  bool is_leaf() const { return node_->is_leaf(); }
  std::string_view op_name() const { return node_->op; }

  /// Deep copy of shape and data; the copy is an untracked leaf.
  Tensor clone() const;
  /// Same data, detached from the graph (shares nothing).
  Tensor detach() const { return clone(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

/// Attaches `out` to the graph when grad mode is on and any input is
/// tracked. `rule` is only stored in that case.
template <typename T>
void attach(Tensor<T>& out, std::initializer_list<Tensor<T>> inputs, std::string_view op,
            std::function<void(TensorNode<T>&)> rule);

template <typename T>
void attach(Tensor<T>& out, const std::vector<Tensor<T>>& inputs, std::string_view op,
            std::function<void(TensorNode<T>&)> rule);

void require(bool condition, const std::string& message);

}  // namespace detail

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace serdarts
