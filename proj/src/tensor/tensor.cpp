// SPDX-License-Identifier: Apache-2.0
#include "serdarts/tensor.hpp"

#include <algorithm>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace serdarts {

namespace {

// Tensor buffers are large and short-lived. Keeping freed blocks in the heap
// instead of returning them to the OS avoids re-faulting every page on the
// next allocation of the same size.
[[maybe_unused]] const bool heap_tuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) { grad_mode_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

namespace {
thread_local BranchTrace* current_trace = nullptr;
}

BranchTrace::BranchTrace() : digest_(0xcbf29ce484222325ULL), previous_(current_trace) { current_trace = this; }
BranchTrace::~BranchTrace() { current_trace = previous_; }

bool BranchTrace::active() { return current_trace != nullptr; }

void BranchTrace::record(std::uint64_t value) {
  if (!current_trace) return;
  std::uint64_t& h = current_trace->digest_;
  for (int byte = 0; byte < 8; ++byte) {
    h ^= (value >> (8 * byte)) & 0xffu;
    h *= 0x100000001b3ULL;  // FNV-1a
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<Node>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("index rank mismatch for " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) throw ShapeError("index out of range for " + shape_str(shape()));
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

template <typename T>
Tensor<T>& Tensor<T>::set_tracked(bool tracked) {
  if (!node_->is_leaf()) throw Error("set_tracked is only valid on leaf tensors");
  node_->tracked = tracked;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(node_->shape, node_->data);
}

namespace detail {

void require(bool condition, const std::string& message) {
  if (!condition) throw ShapeError(message);
}

template <typename T>
static void attach_range(Tensor<T>& out, const Tensor<T>* first, const Tensor<T>* last,
                         std::string_view op, std::function<void(TensorNode<T>&)>& rule) {
  auto* node = out.node();
  node->op = op;
  if (!GradMode::enabled()) return;
  bool any = std::any_of(first, last, [](const Tensor<T>& t) { return t.tracked(); });
  if (!any) return;
  node->tracked = true;
  node->inputs.reserve(static_cast<std::size_t>(last - first));
  for (auto* it = first; it != last; ++it) node->inputs.push_back(it->node_ptr());
  node->grad_rule = std::move(rule);
}

template <typename T>
void attach(Tensor<T>& out, std::initializer_list<Tensor<T>> inputs, std::string_view op,
            std::function<void(TensorNode<T>&)> rule) {
  attach_range(out, inputs.begin(), inputs.end(), op, rule);
}

template <typename T>
void attach(Tensor<T>& out, const std::vector<Tensor<T>>& inputs, std::string_view op,
            std::function<void(TensorNode<T>&)> rule) {
  attach_range(out, inputs.data(), inputs.data() + inputs.size(), op, rule);
}

template void attach(Tensor<float>&, std::initializer_list<Tensor<float>>, std::string_view,
                     std::function<void(TensorNode<float>&)>);
template void attach(Tensor<double>&, std::initializer_list<Tensor<double>>, std::string_view,
                     std::function<void(TensorNode<double>&)>);
template void attach(Tensor<float>&, const std::vector<Tensor<float>>&, std::string_view,
                     std::function<void(TensorNode<float>&)>);
template void attach(Tensor<double>&, const std::vector<Tensor<double>>&, std::string_view,
                     std::function<void(TensorNode<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace serdarts
