// SPDX-License-Identifier: Apache-2.0
#include "serdarts/search/mixed_op.hpp"

#include <cmath>

#include "serdarts/ops.hpp"

namespace serdarts::search {

template <typename T>
std::unique_ptr<nn::Layer<T>> build_candidate(OpKind kind, std::size_t channels, std::size_t stride, RngState& rng) {
  if (stride != 1 && stride != 2) throw Error("candidate stride must be 1 or 2, got " + std::to_string(stride));
  if (channels == 0) throw Error("candidate needs at least one channel");
  switch (kind) {
    case OpKind::max_pool_3x3:
      return std::make_unique<nn::Pool2d<T>>(nn::PoolKind::max, nn::Pool2dGeometry::square(3, stride, 1));
    case OpKind::avg_pool_3x3:
      return std::make_unique<nn::Pool2d<T>>(nn::PoolKind::avg, nn::Pool2dGeometry::square(3, stride, 1));
    case OpKind::sep_conv_3x3:
      return nn::sep_conv<T>(channels, 3, stride, 1, rng);
    case OpKind::sep_conv_5x5:
      return nn::sep_conv<T>(channels, 5, stride, 2, rng);
    case OpKind::dil_conv_3x3:
      return nn::dil_conv<T>(channels, 3, stride, 2, 2, rng);
    case OpKind::dil_conv_5x5:
      return nn::dil_conv<T>(channels, 5, stride, 4, 2, rng);
    case OpKind::skip_connect:
      if (stride == 1) return std::make_unique<nn::Identity<T>>();
      return std::make_unique<nn::FactorizedReduce<T>>(channels, channels, rng);
    case OpKind::none:
      return std::make_unique<nn::Zero<T>>(stride);
  }
  throw Error("unhandled operation kind");
}

template <typename T>
MixedOp<T>::MixedOp(std::size_t channels, std::size_t stride, RngState& rng) : stride_(stride) {
  for (OpKind kind : kAllOps) candidates_.push_back(build_candidate<T>(kind, channels, stride, rng));
}

template <typename T>
std::vector<Tensor<T>> MixedOp<T>::candidate_outputs(const Tensor<T>& x, nn::ForwardContext& ctx) {
  std::vector<Tensor<T>> outs;
  outs.reserve(kNumOps);
  for (auto& c : candidates_) outs.push_back(c->forward(x, ctx));
  for (const auto& o : outs) {
    if (o.shape() != outs.front().shape()) {
      throw ShapeError("mixed op candidates disagree on output shape: " + shape_str(outs.front().shape()) +
                       " vs " + shape_str(o.shape()));
    }
  }
  return outs;
}

template <typename T>
Tensor<T> MixedOp<T>::forward(const Tensor<T>& x, const Tensor<T>& weights, std::size_t row,
                              nn::ForwardContext& ctx) {
  std::vector<Tensor<T>> outs;
  outs.reserve(kNumOps);
  for (OpKind kind : kAllOps) {
    if (kind == OpKind::none) {
      outs.emplace_back();  // zero contribution
      continue;
    }
    outs.push_back(candidates_[op_index(kind)]->forward(x, ctx));
  }
  return weighted_sum(outs, weights, row);
}

template <typename T>
Tensor<T> MixedOp<T>::forward_alpha(const Tensor<T>& x, const Tensor<T>& alpha_row, nn::ForwardContext& ctx) {
  if (alpha_row.numel() != kNumOps) throw ShapeError("alpha row must have 8 entries, got " + shape_str(alpha_row.shape()));
  return forward(x, softmax(reshape(alpha_row, {1, kNumOps}), 1), 0, ctx);
}

template <typename T>
void MixedOp<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  for (OpKind kind : kAllOps) candidates_[op_index(kind)]->visit(nn::join_name(prefix, std::string(op_name(kind))), fn);
}

template <typename T>
Tensor<T> AlphaTable<T>::weights() const {
  return softmax(logits, 1);
}

template <typename T>
AlphaTable<T> alpha_init(RngState& rng, std::size_t num_edges, double scale) {
  if (num_edges == 0) throw Error("alpha table needs at least one edge");
  Tensor<T> logits({num_edges, kNumOps});
  for (auto& v : logits.data()) v = static_cast<T>(rng.normal(0.0, scale));
  logits.set_tracked(true);
  return AlphaTable<T>{logits};
}

template <typename T>
double mean_row_entropy(const Tensor<T>& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto v = logits.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double peak = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) peak = std::max(peak, double(v[r * cols + c]));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(double(v[r * cols + c]) - peak);
    double h = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = std::exp(double(v[r * cols + c]) - peak) / z;
      if (p > 0.0) h -= p * std::log(p);
    }
    total += h;
  }
  return rows == 0 ? 0.0 : total / double(rows);
}

#define SERDARTS_INSTANTIATE_SEARCH(T)                                                                       \
  template std::unique_ptr<nn::Layer<T>> build_candidate<T>(OpKind, std::size_t, std::size_t, RngState&); \
  template class MixedOp<T>;                                                                                 \
  template struct AlphaTable<T>;                                                                             \
  template AlphaTable<T> alpha_init<T>(RngState&, std::size_t, double);                                     \
  template double mean_row_entropy<T>(const Tensor<T>&);

SERDARTS_INSTANTIATE_SEARCH(float)
SERDARTS_INSTANTIATE_SEARCH(double)

#undef SERDARTS_INSTANTIATE_SEARCH

}  // namespace serdarts::search
