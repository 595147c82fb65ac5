// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "serdarts/nn/layers.hpp"
#include "serdarts/search/op_kind.hpp"

namespace serdarts::search {

/// One concrete candidate at the given stride (1 or 2). Stride-1 candidates
/// preserve the spatial extent; stride-2 ones halve it (rounding up).
template <typename T>
std::unique_ptr<nn::Layer<T>> build_candidate(OpKind kind, std::size_t channels, std::size_t stride, RngState& rng);

/// All eight candidates of one edge, mixed by a row of softmaxed weights.
template <typename T>
class MixedOp {
 public:
  MixedOp(std::size_t channels, std::size_t stride, RngState& rng);

  /// sum_k weights[row, k] * o_k(x). `weights` is [edges x 8], already
  /// normalized. The `none` term is a zero map and is skipped.
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& weights, std::size_t row, nn::ForwardContext& ctx);

  /// Same, for a single raw alpha row [8]: the row is softmaxed first.
  Tensor<T> forward_alpha(const Tensor<T>& x, const Tensor<T>& alpha_row, nn::ForwardContext& ctx);

  /// Every candidate's output, in OpKind order.
  std::vector<Tensor<T>> candidate_outputs(const Tensor<T>& x, nn::ForwardContext& ctx);

  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn);

  nn::Layer<T>& candidate(OpKind kind) { return *candidates_[op_index(kind)]; }
  std::size_t stride() const { return stride_; }

 private:
  std::size_t stride_;
  std::vector<std::unique_ptr<nn::Layer<T>>> candidates_;
};

/// Architecture logits for one cell kind, [edges x 8], shared by every cell
/// of that kind. The handle shares storage on copy.
template <typename T>
struct AlphaTable {
  Tensor<T> logits;

  std::size_t edges() const { return logits.dim(0); }
  /// Row-wise softmax, differentiable in `logits`.
  Tensor<T> weights() const;
};

/// Entries i.i.d. Normal(0, scale), tracked.
template <typename T>
AlphaTable<T> alpha_init(RngState& rng, std::size_t num_edges, double scale = 1e-3);

/// Mean over rows of the Shannon entropy (nats) of each softmaxed row.
template <typename T>
double mean_row_entropy(const Tensor<T>& logits);

}  // namespace serdarts::search
