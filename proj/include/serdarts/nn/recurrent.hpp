// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "serdarts/nn/layers.hpp"

namespace serdarts::nn {

struct LstmSpec {
  std::size_t input_size = 1;
  std::size_t hidden_units = 1;
  bool bidirectional = false;

  std::size_t output_size() const { return hidden_units * (bidirectional ? 2 : 1); }
};

/// Gate weights for one direction. Rows are laid out as the input, forget,
/// cell and output gates, each `hidden_units` tall.
template <typename T>
struct LstmDirection {
  Tensor<T> input_weight;      // [4H x F]
  Tensor<T> recurrent_weight;  // [4H x H]
  Tensor<T> bias;              // [4H]
};

/// seq [B x T x F] -> [B x T x H'] with H' = spec.output_size(). The
/// reverse direction reads the sequence back to front and its outputs are
/// stored at their original time index.
template <typename T>
class Lstm : public Layer<T> {
 public:
  Lstm(const LstmSpec& spec, RngState& rng);
  Tensor<T> forward(const Tensor<T>& seq, ForwardContext& ctx) override;
  void visit(const std::string& prefix, const TensorVisitor<T>& fn) override;

  const LstmSpec& spec() const { return spec_; }
  LstmDirection<T>& direction(std::size_t i) { return directions_.at(i); }

 private:
  Tensor<T> run_direction(LstmDirection<T>& dir, const Tensor<T>& seq, bool reverse) const;

  LstmSpec spec_;
  std::vector<LstmDirection<T>> directions_;
};

/// Additive attention over time: score_t = v . tanh(W h_t), weights =
/// softmax over t, output = sum_t weight_t h_t. seq [B x T x H] -> [B x H].
template <typename T>
class AttentionPool : public Layer<T> {
 public:
  AttentionPool(std::size_t features, std::size_t attention_dim, RngState& rng);
  Tensor<T> forward(const Tensor<T>& seq, ForwardContext& ctx) override;
  void visit(const std::string& prefix, const TensorVisitor<T>& fn) override;

  /// Softmaxed attention weights [B x T].
  Tensor<T> weights(const Tensor<T>& seq) const;
  Tensor<T>& projection() { return projection_; }
  Tensor<T>& context() { return context_; }

 private:
  Tensor<T> projection_;  // W [A x H]
  Tensor<T> context_;     // v [1 x A]
};

/// seq [B x T x H] -> [B x H], the final time step.
template <typename T>
class LastStep : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& seq, ForwardContext& ctx) override;
};

}  // namespace serdarts::nn
