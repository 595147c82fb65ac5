// SPDX-License-Identifier: Apache-2.0
#include "serdarts/nn/layers.hpp"

#include <cmath>

#include "serdarts/ops.hpp"

namespace serdarts::nn {

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
std::vector<Tensor<T>> parameters_of(Layer<T>& layer, const std::string& prefix) {
  std::vector<Tensor<T>> out;
  layer.visit(prefix, [&out](const std::string&, Tensor<T>& t, TensorRole role) {
    if (role == TensorRole::parameter) out.push_back(t);
  });
  return out;
}

template <typename T>
Tensor<T> uniform_parameter(Shape shape, std::size_t fan_in, RngState& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  t.set_tracked(true);
  return t;
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const Conv2dSpec& spec, RngState& rng) : spec_(spec) {
  if (spec.groups == 0 || spec.in_channels % spec.groups != 0 || spec.out_channels % spec.groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(spec.in_channels) + "->" +
                     std::to_string(spec.out_channels) + " not divisible by groups " + std::to_string(spec.groups));
  }
  const std::size_t fan_in = spec.in_channels / spec.groups * spec.kernel * spec.kernel;
  weight_ = uniform_parameter<T>({spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel},
                                 fan_in, rng);
  if (spec.bias) bias_ = uniform_parameter<T>({spec.out_channels}, fan_in, rng);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, ForwardContext&) {
  if (x.rank() != 4 || x.dim(1) != spec_.in_channels) {
    throw ShapeError("conv2d expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                     shape_str(x.shape()));
  }
  return conv2d(x, weight_, bias_, spec_.geometry());
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(join_name(prefix, "weight"), weight_, TensorRole::parameter);
  if (bias_.defined()) fn(join_name(prefix, "bias"), bias_, TensorRole::parameter);
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, double momentum, double eps)
    : scale_(Shape{channels}, T(1)), shift_(Shape{channels}, T(0)), state_(channels) {
  scale_.set_tracked(true);
  shift_.set_tracked(true);
  state_.momentum = momentum;
  state_.eps = eps;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, ForwardContext& ctx) {
  return batchnorm2d(x, scale_, shift_, state_, ctx.training);
}

template <typename T>
void BatchNorm2d<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(join_name(prefix, "scale"), scale_, TensorRole::parameter);
  fn(join_name(prefix, "shift"), shift_, TensorRole::parameter);
  fn(join_name(prefix, "running_mean"), state_.running_mean, TensorRole::buffer);
  fn(join_name(prefix, "running_var"), state_.running_var, TensorRole::buffer);
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, RngState& rng, bool bias) {
  weight_ = uniform_parameter<T>({out_features, in_features}, in_features, rng);
  if (bias) bias_ = uniform_parameter<T>({out_features}, in_features, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, ForwardContext&) {
  return linear(x, weight_, bias_);
}

template <typename T>
void Linear<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(join_name(prefix, "weight"), weight_, TensorRole::parameter);
  if (bias_.defined()) fn(join_name(prefix, "bias"), bias_, TensorRole::parameter);
}

// ------------------------------------------------------ stateless layers

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, ForwardContext&) {
  return relu(x);
}

template <typename T>
Dropout<T>::Dropout(double p) : p_(p) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout probability must be in [0, 1), got " + std::to_string(p));
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, ForwardContext& ctx) {
  if (!ctx.training || p_ == 0.0) return x;
  if (!ctx.rng) throw Error("dropout in training mode needs an RNG in the forward context");
  return dropout(x, p_, true, *ctx.rng);
}

template <typename T>
Tensor<T> Pool2d<T>::forward(const Tensor<T>& x, ForwardContext&) {
  return pool2d(kind_, x, geometry_);
}

template <typename T>
Tensor<T> Identity<T>::forward(const Tensor<T>& x, ForwardContext&) {
  return x;
}

template <typename T>
Tensor<T> Zero<T>::forward(const Tensor<T>& x, ForwardContext&) {
  if (x.rank() != 4) throw ShapeError("zero op expects a 4-D input, got " + shape_str(x.shape()));
  if (stride_ == 1) return zeros<T>(x.shape());
  // Same extent as a stride-s 3x3 window with padding 1.
  return zeros<T>({x.dim(0), x.dim(1), conv_output_extent(x.dim(2), 3, stride_, 1),
                   conv_output_extent(x.dim(3), 3, stride_, 1)});
}

// ------------------------------------------------------------ Sequential

template <typename T>
Sequential<T>& Sequential<T>::add(std::unique_ptr<Layer<T>> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, ForwardContext& ctx) {
  Tensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, ctx);
  return h;
}

template <typename T>
void Sequential<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->visit(join_name(prefix, std::to_string(i)), fn);
}

// ------------------------------------------------------- composite ops

template <typename T>
std::unique_ptr<Sequential<T>> relu_conv_bn(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                            std::size_t stride, std::size_t padding, RngState& rng) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->add(std::make_unique<ReLU<T>>());
  seq->add(std::make_unique<Conv2d<T>>(Conv2dSpec{in_channels, out_channels, kernel, stride, padding, 1, 1, false}, rng));
  seq->add(std::make_unique<BatchNorm2d<T>>(out_channels));
  return seq;
}

template <typename T>
std::unique_ptr<Sequential<T>> dil_conv(std::size_t channels, std::size_t kernel, std::size_t stride,
                                        std::size_t padding, std::size_t dilation, RngState& rng) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->add(std::make_unique<ReLU<T>>());
  seq->add(std::make_unique<Conv2d<T>>(
      Conv2dSpec{channels, channels, kernel, stride, padding, dilation, channels, false}, rng));
  seq->add(std::make_unique<Conv2d<T>>(Conv2dSpec{channels, channels, 1, 1, 0, 1, 1, false}, rng));
  seq->add(std::make_unique<BatchNorm2d<T>>(channels));
  return seq;
}

template <typename T>
std::unique_ptr<Sequential<T>> sep_conv(std::size_t channels, std::size_t kernel, std::size_t stride,
                                        std::size_t padding, RngState& rng) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->add(dil_conv<T>(channels, kernel, stride, padding, 1, rng));
  seq->add(dil_conv<T>(channels, kernel, 1, padding, 1, rng));
  return seq;
}

template <typename T>
FactorizedReduce<T>::FactorizedReduce(std::size_t in_channels, std::size_t out_channels, RngState& rng)
    : even_(Conv2dSpec{in_channels, out_channels / 2, 1, 2, 0, 1, 1, false}, rng),
      odd_(Conv2dSpec{in_channels, out_channels - out_channels / 2, 1, 2, 0, 1, 1, false}, rng),
      bn_(out_channels) {
  if (out_channels < 2) throw ShapeError("factorized reduce needs at least 2 output channels");
}

template <typename T>
Tensor<T> FactorizedReduce<T>::forward(const Tensor<T>& x, ForwardContext& ctx) {
  Tensor<T> h = relu(x);
  Tensor<T> a = even_.forward(h, ctx);
  Tensor<T> b = odd_.forward(shift_one(h), ctx);
  return bn_.forward(concat<T>({a, b}, 1), ctx);
}

template <typename T>
void FactorizedReduce<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  even_.visit(join_name(prefix, "conv_even"), fn);
  odd_.visit(join_name(prefix, "conv_odd"), fn);
  bn_.visit(join_name(prefix, "bn"), fn);
}

#define SERDARTS_INSTANTIATE_LAYERS(T)                                                                    \
  template std::vector<Tensor<T>> parameters_of(Layer<T>&, const std::string&);                            \
  template Tensor<T> uniform_parameter(Shape, std::size_t, RngState&);                                     \
  template class Conv2d<T>;                                                                                \
  template class BatchNorm2d<T>;                                                                           \
  template class Linear<T>;                                                                                \
  template class ReLU<T>;                                                                                  \
  template class Dropout<T>;                                                                               \
  template class Pool2d<T>;                                                                                \
  template class Identity<T>;                                                                              \
  template class Zero<T>;                                                                                  \
  template class Sequential<T>;                                                                            \
  template class FactorizedReduce<T>;                                                                      \
  template std::unique_ptr<Sequential<T>> relu_conv_bn(std::size_t, std::size_t, std::size_t, std::size_t, \
                                                       std::size_t, RngState&);                            \
  template std::unique_ptr<Sequential<T>> dil_conv(std::size_t, std::size_t, std::size_t, std::size_t,     \
                                                   std::size_t, RngState&);                                \
  template std::unique_ptr<Sequential<T>> sep_conv(std::size_t, std::size_t, std::size_t, std::size_t, RngState&);

SERDARTS_INSTANTIATE_LAYERS(float)
SERDARTS_INSTANTIATE_LAYERS(double)

#undef SERDARTS_INSTANTIATE_LAYERS

}  // namespace serdarts::nn
