// SPDX-License-Identifier: Apache-2.0
#include "serdarts/nn/recurrent.hpp"

#include "serdarts/ops.hpp"

namespace serdarts::nn {

template <typename T>
Lstm<T>::Lstm(const LstmSpec& spec, RngState& rng) : spec_(spec) {
  if (spec.input_size == 0 || spec.hidden_units == 0) throw ShapeError("lstm needs positive input and hidden sizes");
  const std::size_t H = spec.hidden_units;
  for (std::size_t d = 0; d < (spec.bidirectional ? 2u : 1u); ++d) {
    LstmDirection<T> dir;
    dir.input_weight = uniform_parameter<T>({4 * H, spec.input_size}, H, rng);
    dir.recurrent_weight = uniform_parameter<T>({4 * H, H}, H, rng);
    dir.bias = uniform_parameter<T>({4 * H}, H, rng);
    directions_.push_back(std::move(dir));
  }
}

template <typename T>
Tensor<T> Lstm<T>::run_direction(LstmDirection<T>& dir, const Tensor<T>& seq, bool reverse) const {
  const std::size_t B = seq.dim(0), steps = seq.dim(1), F = seq.dim(2), H = spec_.hidden_units;
  // Input projections for every step at once.
  Tensor<T> projected =
      reshape(linear(reshape(seq, {B * steps, F}), dir.input_weight, dir.bias), {B, steps, 4 * H});
  Tensor<T> h = zeros<T>({B, H});
  Tensor<T> c = zeros<T>({B, H});
  std::vector<Tensor<T>> outputs(steps);
  const Tensor<T> no_bias;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    Tensor<T> gates = reshape(slice(projected, 1, t, 1), {B, 4 * H}) + linear(h, dir.recurrent_weight, no_bias);
    Tensor<T> input_gate = sigmoid(slice(gates, 1, 0, H));
    Tensor<T> forget_gate = sigmoid(slice(gates, 1, H, H));
    Tensor<T> candidate = tanh(slice(gates, 1, 2 * H, H));
    Tensor<T> output_gate = sigmoid(slice(gates, 1, 3 * H, H));
    c = forget_gate * c + input_gate * candidate;
    h = output_gate * tanh(c);
    outputs[t] = reshape(h, {B, 1, H});
  }
  return concat(outputs, 1);
}

template <typename T>
Tensor<T> Lstm<T>::forward(const Tensor<T>& seq, ForwardContext&) {
  if (seq.rank() != 3 || seq.dim(2) != spec_.input_size) {
    throw ShapeError("lstm expects [B x T x " + std::to_string(spec_.input_size) + "], got " + shape_str(seq.shape()));
  }
  if (seq.dim(1) == 0) throw ShapeError("lstm on an empty sequence");
  Tensor<T> forward_pass = run_direction(directions_[0], seq, false);
  if (!spec_.bidirectional) return forward_pass;
  Tensor<T> backward_pass = run_direction(directions_[1], seq, true);
  return concat<T>({forward_pass, backward_pass}, 2);
}

template <typename T>
void Lstm<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  for (std::size_t d = 0; d < directions_.size(); ++d) {
    const std::string base = join_name(prefix, d == 0 ? "forward" : "reverse");
    fn(join_name(base, "input_weight"), directions_[d].input_weight, TensorRole::parameter);
    fn(join_name(base, "recurrent_weight"), directions_[d].recurrent_weight, TensorRole::parameter);
    fn(join_name(base, "bias"), directions_[d].bias, TensorRole::parameter);
  }
}

template <typename T>
AttentionPool<T>::AttentionPool(std::size_t features, std::size_t attention_dim, RngState& rng)
    : projection_(uniform_parameter<T>({attention_dim, features}, features, rng)),
      context_(uniform_parameter<T>({1, attention_dim}, attention_dim, rng)) {}

template <typename T>
Tensor<T> AttentionPool<T>::weights(const Tensor<T>& seq) const {
  if (seq.rank() != 3 || seq.dim(2) != projection_.dim(1)) {
    throw ShapeError("attention expects [B x T x " + std::to_string(projection_.dim(1)) + "], got " +
                     shape_str(seq.shape()));
  }
  const std::size_t B = seq.dim(0), steps = seq.dim(1), H = seq.dim(2);
  if (steps == 0) throw ShapeError("attention over an empty sequence");
  const Tensor<T> no_bias;
  Tensor<T> hidden = tanh(linear(reshape(seq, {B * steps, H}), projection_, no_bias));
  Tensor<T> scores = reshape(linear(hidden, context_, no_bias), {B, steps});
  return softmax(scores, 1);
}

template <typename T>
Tensor<T> AttentionPool<T>::forward(const Tensor<T>& seq, ForwardContext&) {
  return weighted_time_sum(weights(seq), seq);
}

template <typename T>
void AttentionPool<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(join_name(prefix, "projection"), projection_, TensorRole::parameter);
  fn(join_name(prefix, "context"), context_, TensorRole::parameter);
}

template <typename T>
Tensor<T> LastStep<T>::forward(const Tensor<T>& seq, ForwardContext&) {
  if (seq.rank() != 3 || seq.dim(1) == 0) throw ShapeError("last step of " + shape_str(seq.shape()));
  return reshape(slice(seq, 1, seq.dim(1) - 1, 1), {seq.dim(0), seq.dim(2)});
}

template class Lstm<float>;
template class Lstm<double>;
template class AttentionPool<float>;
template class AttentionPool<double>;
template class LastStep<float>;
template class LastStep<double>;

}  // namespace serdarts::nn
