// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "serdarts/tensor.hpp"

namespace serdarts {

enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { relu, sigmoid, tanh, exp, log, neg };

/// Elementwise binary op. Shapes must match exactly.
template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise op against a scalar right-hand side.
template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, T b);

template <typename T>
Tensor<T> unary(UnaryOp op, const Tensor<T>& x);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::add, a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::sub, a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::mul, a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::div, a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) { return elementwise(BinaryOp::mul, a, s); }
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, T s) { return elementwise(BinaryOp::add, a, s); }

template <typename T>
Tensor<T> relu(const Tensor<T>& x) { return unary(UnaryOp::relu, x); }
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) { return unary(UnaryOp::sigmoid, x); }
template <typename T>
Tensor<T> tanh(const Tensor<T>& x) { return unary(UnaryOp::tanh, x); }
template <typename T>
Tensor<T> exp(const Tensor<T>& x) { return unary(UnaryOp::exp, x); }
template <typename T>
Tensor<T> log(const Tensor<T>& x) { return unary(UnaryOp::log, x); }

/// [M x K] . [K x N] -> [M x N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// 2-D transpose.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Axis permutation: output axis i is input axis `axes[i]`.
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Sum of equally shaped tensors, accumulated in argument order.
template <typename T>
Tensor<T> sum_n(const std::vector<Tensor<T>>& xs);

/// out = sum_k weights[row, k] * xs[k]; `weights` is [rows x xs.size()].
/// Undefined entries of `xs` are treated as zero maps of `shape`.
template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& xs, const Tensor<T>& weights, std::size_t row);

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis);

/// Mean negative log-likelihood of `labels` under softmax(logits) for
/// [B x K] logits.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);

/// Contiguous slice [start, start + length) along `axis`; rank preserved.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

}  // namespace serdarts
