// SPDX-License-Identifier: Apache-2.0
#include "serdarts/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace serdarts {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

template <typename T>
bool wants_grad(const std::shared_ptr<TensorNode<T>>& node) {
  return node->tracked;
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  const std::size_t n = o.size();
  switch (op) {
    case BinaryOp::add: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + y[i]; break;
    case BinaryOp::sub: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - y[i]; break;
    case BinaryOp::mul: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * y[i]; break;
    case BinaryOp::div: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] / y[i]; break;
  }
  detail::attach<T>(out, {a, b}, "elementwise", [op](TensorNode<T>& self) {
    auto& lhs = self.inputs[0];
    auto& rhs = self.inputs[1];
    const auto& g = self.grad;
    const std::size_t n = g.size();
    if (wants_grad(lhs)) {
      auto& ga = lhs->ensure_grad();
      switch (op) {
        case BinaryOp::add:
        case BinaryOp::sub: for (std::size_t i = 0; i < n; ++i) ga[i] += g[i]; break;
        case BinaryOp::mul: for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * rhs->data[i]; break;
        case BinaryOp::div: for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / rhs->data[i]; break;
      }
    }
    if (wants_grad(rhs)) {
      auto& gb = rhs->ensure_grad();
      switch (op) {
        case BinaryOp::add: for (std::size_t i = 0; i < n; ++i) gb[i] += g[i]; break;
        case BinaryOp::sub: for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i]; break;
        case BinaryOp::mul: for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * lhs->data[i]; break;
        case BinaryOp::div:
          for (std::size_t i = 0; i < n; ++i) {
            const T d = rhs->data[i];
            gb[i] -= g[i] * lhs->data[i] / (d * d);
          }
          break;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, T b) {
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto x = a.data();
  const std::size_t n = o.size();
  switch (op) {
    case BinaryOp::add: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + b; break;
    case BinaryOp::sub: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - b; break;
    case BinaryOp::mul: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * b; break;
    case BinaryOp::div: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] / b; break;
  }
  detail::attach<T>(out, {a}, "elementwise_scalar", [op, b](TensorNode<T>& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    const auto& g = self.grad;
    T factor = T(1);
    if (op == BinaryOp::mul) factor = b;
    if (op == BinaryOp::div) factor = T(1) / b;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

template <typename T>
Tensor<T> unary(UnaryOp op, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto in = x.data();
  const std::size_t n = o.size();
  switch (op) {
    case UnaryOp::relu:
      for (std::size_t i = 0; i < n; ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
      if (BranchTrace::active()) {
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < n; ++i) {
          bits = (bits << 1) | (in[i] > T(0) ? 1u : 0u);
          if (i % 64 == 63 || i + 1 == n) BranchTrace::record(bits);
        }
      }
      break;
    case UnaryOp::sigmoid: for (std::size_t i = 0; i < n; ++i) o[i] = T(1) / (T(1) + std::exp(-in[i])); break;
    case UnaryOp::tanh: for (std::size_t i = 0; i < n; ++i) o[i] = std::tanh(in[i]); break;
    case UnaryOp::exp: for (std::size_t i = 0; i < n; ++i) o[i] = std::exp(in[i]); break;
    case UnaryOp::log: for (std::size_t i = 0; i < n; ++i) o[i] = std::log(in[i]); break;
    case UnaryOp::neg: for (std::size_t i = 0; i < n; ++i) o[i] = -in[i]; break;
  }
  detail::attach<T>(out, {x}, "unary", [op](TensorNode<T>& self) {
    auto& input = self.inputs[0];
    auto& gx = input->ensure_grad();
    const auto& g = self.grad;
    const auto& y = self.data;
    const auto& xv = input->data;
    const std::size_t n = g.size();
    switch (op) {
      case UnaryOp::relu: for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] > T(0) ? g[i] : T(0); break;
      case UnaryOp::sigmoid: for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]); break;
      case UnaryOp::tanh: for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]); break;
      case UnaryOp::exp: for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i]; break;
      case UnaryOp::log: for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / xv[i]; break;
      case UnaryOp::neg: for (std::size_t i = 0; i < n; ++i) gx[i] -= g[i]; break;
    }
  });
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " . " +
                     shape_str(b.shape()));
  }
  Tensor<T> out({m, n});
  using Index = Eigen::Index;
  MapMatrix<T>(out.data().data(), Index(m), Index(n)).noalias() =
      ConstMapMatrix<T>(a.data().data(), Index(m), Index(k)) *
      ConstMapMatrix<T>(b.data().data(), Index(k), Index(n));
  detail::attach<T>(out, {a, b}, "matmul", [m, k, n](TensorNode<T>& self) {
    auto& lhs = self.inputs[0];
    auto& rhs = self.inputs[1];
    ConstMapMatrix<T> g(self.grad.data(), Index(m), Index(n));
    if (wants_grad(lhs)) {
      MapMatrix<T>(lhs->ensure_grad().data(), Index(m), Index(k)).noalias() +=
          g * ConstMapMatrix<T>(rhs->data.data(), Index(k), Index(n)).transpose();
    }
    if (wants_grad(rhs)) {
      MapMatrix<T>(rhs->ensure_grad().data(), Index(k), Index(n)).noalias() +=
          ConstMapMatrix<T>(lhs->data.data(), Index(m), Index(k)).transpose() * g;
    }
  });
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects a 2-D tensor, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = x[i * n + j];
  detail::attach<T>(out, {a}, "transpose", [m, n](TensorNode<T>& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  detail::attach<T>(out, {x}, "reshape", [](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  std::vector<bool> used(rank, false);
  if (axes.size() != rank) throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for rank " + std::to_string(rank));
  for (std::size_t a : axes) {
    if (a >= rank || used[a]) throw ShapeError("permute: axes must be a permutation of 0.." + std::to_string(rank - 1));
    used[a] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * x.dim(i);
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = x.dim(axes[i]);
  // source offset of every output element, in output order
  std::vector<std::size_t> source(x.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < source.size(); ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * in_stride[axes[i]];
    source[o] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  Tensor<T> out(std::move(shape));
  auto o = out.data();
  auto src = x.data();
  for (std::size_t i = 0; i < source.size(); ++i) o[i] = src[source[i]];
  detail::attach<T>(out, {x}, "permute", [source = std::move(source)](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < source.size(); ++i) gx[source[i]] += self.grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total);
  detail::attach<T>(out, {x}, "sum", [](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    const T g = self.grad[0];
    for (auto& v : gx) v += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return elementwise(BinaryOp::mul, sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum_n(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("sum_n of an empty list");
  for (const auto& x : xs) {
    if (x.shape() != xs[0].shape()) {
      throw ShapeError("sum_n shape mismatch: " + shape_str(xs[0].shape()) + " vs " +
                       shape_str(x.shape()));
    }
  }
  Tensor<T> out = xs[0].clone();
  auto o = out.data();
  for (std::size_t k = 1; k < xs.size(); ++k) {
    auto x = xs[k].data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += x[i];
  }
  detail::attach<T>(out, xs, "sum_n", [](TensorNode<T>& self) {
    for (auto& input : self.inputs) {
      if (!wants_grad(input)) continue;
      auto& gx = input->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& xs, const Tensor<T>& weights, std::size_t row) {
  const std::size_t k = xs.size();
  if (weights.rank() != 2 || weights.dim(1) != k || row >= weights.dim(0)) {
    throw ShapeError("weighted_sum: weights " + shape_str(weights.shape()) + " incompatible with " +
                     std::to_string(k) + " operands at row " + std::to_string(row));
  }
  const Tensor<T>* reference = nullptr;
  for (const auto& x : xs) {
    if (!x.defined()) continue;
    if (reference && x.shape() != reference->shape()) {
      throw ShapeError("weighted_sum operand shape mismatch: " + shape_str(reference->shape()) +
                       " vs " + shape_str(x.shape()));
    }
    if (!reference) reference = &x;
  }
  if (!reference) throw ShapeError("weighted_sum needs at least one defined operand");
  Tensor<T> out(reference->shape());
  auto o = out.data();
  auto w = weights.data().subspan(row * k, k);
  for (std::size_t j = 0; j < k; ++j) {
    if (!xs[j].defined()) continue;
    auto x = xs[j].data();
    const T wj = w[j];
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += wj * x[i];
  }
  // Inputs: weights first, then every defined operand in order.
  std::vector<Tensor<T>> inputs{weights};
  std::vector<std::size_t> slots;
  for (std::size_t j = 0; j < k; ++j) {
    if (xs[j].defined()) {
      inputs.push_back(xs[j]);
      slots.push_back(j);
    }
  }
  detail::attach<T>(out, inputs, "weighted_sum", [k, row, slots](TensorNode<T>& self) {
    auto& wnode = self.inputs[0];
    const auto& g = self.grad;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      auto& xnode = self.inputs[s + 1];
      const std::size_t j = slots[s];
      if (wants_grad(wnode)) {
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += double(g[i]) * double(xnode->data[i]);
        wnode->ensure_grad()[row * k + j] += T(dot);
      }
      if (wants_grad(xnode)) {
        auto& gx = xnode->ensure_grad();
        const T wj = wnode->data[row * k + j];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += wj * g[i];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis);
  if (s.extent == 0) throw ShapeError("softmax over an empty axis");
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t a = 0; a < s.outer; ++a) {
    for (std::size_t c = 0; c < s.inner; ++c) {
      const std::size_t base = a * s.extent * s.inner + c;
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < s.extent; ++i) peak = std::max(peak, in[base + i * s.inner]);
      T total = T(0);
      for (std::size_t i = 0; i < s.extent; ++i) {
        const T e = std::exp(in[base + i * s.inner] - peak);
        o[base + i * s.inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < s.extent; ++i) o[base + i * s.inner] /= total;
    }
  }
  detail::attach<T>(out, {x}, "softmax", [s](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t c = 0; c < s.inner; ++c) {
        const std::size_t base = a * s.extent * s.inner + c;
        T dot = T(0);
        for (std::size_t i = 0; i < s.extent; ++i) dot += g[base + i * s.inner] * y[base + i * s.inner];
        for (std::size_t i = 0; i < s.extent; ++i) {
          const std::size_t idx = base + i * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis);
  if (s.extent == 0) throw ShapeError("log_softmax over an empty axis");
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t a = 0; a < s.outer; ++a) {
    for (std::size_t c = 0; c < s.inner; ++c) {
      const std::size_t base = a * s.extent * s.inner + c;
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < s.extent; ++i) peak = std::max(peak, in[base + i * s.inner]);
      T total = T(0);
      for (std::size_t i = 0; i < s.extent; ++i) total += std::exp(in[base + i * s.inner] - peak);
      const T lse = peak + std::log(total);
      for (std::size_t i = 0; i < s.extent; ++i) o[base + i * s.inner] = in[base + i * s.inner] - lse;
    }
  }
  detail::attach<T>(out, {x}, "log_softmax", [s](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t c = 0; c < s.inner; ++c) {
        const std::size_t base = a * s.extent * s.inner + c;
        T gsum = T(0);
        for (std::size_t i = 0; i < s.extent; ++i) gsum += g[base + i * s.inner];
        for (std::size_t i = 0; i < s.extent; ++i) {
          const std::size_t idx = base + i * s.inner;
          gx[idx] += g[idx] - std::exp(y[idx]) * gsum;
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects [B x K] logits, got " + shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  if (batch == 0) throw ShapeError("cross_entropy on an empty batch");
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw Error("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                  std::to_string(classes) + ")");
    }
  }
  // Softmax probabilities are kept for the gradient rule.
  std::vector<T> probs(batch * classes);
  T total = T(0);
  auto z = logits.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = z.data() + b * classes;
    const T peak = *std::max_element(row, row + classes);
    T denom = T(0);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = std::exp(row[c] - peak);
      denom += probs[b * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= denom;
    total += -(row[labels[b]] - peak - std::log(denom));
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(batch));
  std::vector<int> targets(labels.begin(), labels.end());
  detail::attach<T>(out, {logits}, "cross_entropy",
                    [probs = std::move(probs), targets = std::move(targets), batch, classes](TensorNode<T>& self) {
                      auto& gz = self.inputs[0]->ensure_grad();
                      const T scale = self.grad[0] / static_cast<T>(batch);
                      for (std::size_t b = 0; b < batch; ++b) {
                        for (std::size_t c = 0; c < classes; ++c) {
                          const T indicator = static_cast<int>(c) == targets[b] ? T(1) : T(0);
                          gz[b * classes + c] += scale * (probs[b * classes + c] - indicator);
                        }
                      }
                    });
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of an empty list");
  const Shape& first = xs[0].shape();
  auto s0 = split_axis(first, axis);
  std::vector<std::size_t> extents;
  std::size_t total_extent = 0;
  for (const auto& x : xs) {
    const Shape& sh = x.shape();
    bool compatible = sh.size() == first.size();
    for (std::size_t i = 0; compatible && i < sh.size(); ++i) {
      if (i != axis && sh[i] != first[i]) compatible = false;
    }
    if (!compatible) {
      throw ShapeError("concat shape mismatch along axis " + std::to_string(axis) + ": " +
                       shape_str(first) + " vs " + shape_str(sh));
    }
    extents.push_back(sh[axis]);
    total_extent += sh[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_extent;
  Tensor<T> out(out_shape);
  auto o = out.data();
  const std::size_t outer = s0.outer, inner = s0.inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    auto x = xs[k].data();
    const std::size_t chunk = extents[k] * inner;
    for (std::size_t a = 0; a < outer; ++a) {
      std::copy_n(x.data() + a * chunk, chunk, o.data() + a * total_extent * inner + offset * inner);
    }
    offset += extents[k];
  }
  detail::attach<T>(out, xs, "concat", [extents, total_extent, outer, inner](TensorNode<T>& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& input = self.inputs[k];
      const std::size_t chunk = extents[k] * inner;
      if (wants_grad(input)) {
        auto& gx = input->ensure_grad();
        for (std::size_t a = 0; a < outer; ++a) {
          const T* src = self.grad.data() + a * total_extent * inner + offset * inner;
          T* dst = gx.data() + a * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += extents[k];
    }
  });
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto s = split_axis(x.shape(), axis);
  if (start + length > s.extent) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  auto o = out.data();
  auto in = x.data();
  const std::size_t chunk = length * s.inner;
  for (std::size_t a = 0; a < s.outer; ++a) {
    std::copy_n(in.data() + a * s.extent * s.inner + start * s.inner, chunk, o.data() + a * chunk);
  }
  detail::attach<T>(out, {x}, "slice", [s, start, chunk](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t a = 0; a < s.outer; ++a) {
      T* dst = gx.data() + a * s.extent * s.inner + start * s.inner;
      const T* src = self.grad.data() + a * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
  return out;
}

#define SERDARTS_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, T);                               \
  template Tensor<T> unary(UnaryOp, const Tensor<T>&);                                         \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);               \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> sum_n(const std::vector<Tensor<T>>&);                                     \
  template Tensor<T> weighted_sum(const std::vector<Tensor<T>>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> log_softmax(const Tensor<T>&, std::size_t);                               \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                    \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                       \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);

SERDARTS_INSTANTIATE_OPS(float)
SERDARTS_INSTANTIATE_OPS(double)

#undef SERDARTS_INSTANTIATE_OPS

}  // namespace serdarts
