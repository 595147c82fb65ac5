// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "serdarts/nn/functional.hpp"
#include "serdarts/rng.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts::nn {

/// Per-call state threaded through forward passes.
struct ForwardContext {
  bool training = true;
  RngState* rng = nullptr;  // required by dropout in training mode
};

enum class TensorRole { parameter, buffer };

template <typename T>
using TensorVisitor = std::function<void(const std::string& name, Tensor<T>& tensor, TensorRole role)>;

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) = 0;
  /// Visits trainable parameters and persistent buffers with dotted names.
  virtual void visit(const std::string& /*prefix*/, const TensorVisitor<T>& /*fn*/) {}
};

/// Trainable tensors of a layer tree, in visit order.
template <typename T>
std::vector<Tensor<T>> parameters_of(Layer<T>& layer, const std::string& prefix = "");

std::string join_name(const std::string& prefix, const std::string& name);

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) fill of a tracked leaf.
template <typename T>
Tensor<T> uniform_parameter(Shape shape, std::size_t fan_in, RngState& rng);

struct Conv2dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  bool bias = false;

  Conv2dGeometry geometry() const { return Conv2dGeometry::square(kernel, stride, padding, dilation, groups); }
  /// Spatial output extent for an input extent, per the shape formula.
  std::size_t output_extent(std::size_t in) const { return conv_output_extent(in, kernel, stride, padding, dilation); }
};

template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(const Conv2dSpec& spec, RngState& rng);
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;
  void visit(const std::string& prefix, const TensorVisitor<T>& fn) override;
  const Conv2dSpec& spec() const { return spec_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Conv2dSpec spec_;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;
  void visit(const std::string& prefix, const TensorVisitor<T>& fn) override;
  Tensor<T>& scale() { return scale_; }
  Tensor<T>& shift() { return shift_; }
  BatchNormState<T>& state() { return state_; }

 private:
  Tensor<T> scale_;
  Tensor<T> shift_;
  BatchNormState<T> state_;
};

template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features, RngState& rng, bool bias = true);
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;
  void visit(const std::string& prefix, const TensorVisitor<T>& fn) override;
  Tensor<T>& weight() { return weight_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;
};

template <typename T>
class Dropout : public Layer<T> {
 public:
  explicit Dropout(double p);
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;

 private:
  double p_;
};

template <typename T>
class Pool2d : public Layer<T> {
 public:
  Pool2d(PoolKind kind, const Pool2dGeometry& geometry) : kind_(kind), geometry_(geometry) {}
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;

 private:
  PoolKind kind_;
  Pool2dGeometry geometry_;
};

template <typename T>
class Identity : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;
};

/// Zero map; at stride 2 the output takes the strided spatial extent.
template <typename T>
class Zero : public Layer<T> {
 public:
  explicit Zero(std::size_t stride) : stride_(stride) {}
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;

 private:
  std::size_t stride_;
};

template <typename T>
class Sequential : public Layer<T> {
 public:
  Sequential() = default;
  Sequential& add(std::unique_ptr<Layer<T>> layer);
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;
  void visit(const std::string& prefix, const TensorVisitor<T>& fn) override;
  std::size_t size() const { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// ReLU -> Conv -> BN
template <typename T>
std::unique_ptr<Sequential<T>> relu_conv_bn(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                            std::size_t stride, std::size_t padding, RngState& rng);

/// ReLU -> depthwise(k, stride, dilation) -> pointwise -> BN
template <typename T>
std::unique_ptr<Sequential<T>> dil_conv(std::size_t channels, std::size_t kernel, std::size_t stride,
                                        std::size_t padding, std::size_t dilation, RngState& rng);

/// Two stacked ReLU -> depthwise -> pointwise -> BN units; only the first is
/// strided.
template <typename T>
std::unique_ptr<Sequential<T>> sep_conv(std::size_t channels, std::size_t kernel, std::size_t stride,
                                        std::size_t padding, RngState& rng);

/// ReLU, then two 1x1 stride-2 convolutions (the second on the input shifted
/// by one pixel) concatenated along channels, then BN. Halves the spatial
/// extent (rounding up).
template <typename T>
class FactorizedReduce : public Layer<T> {
 public:
  FactorizedReduce(std::size_t in_channels, std::size_t out_channels, RngState& rng);
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) override;
  void visit(const std::string& prefix, const TensorVisitor<T>& fn) override;

 private:
  Conv2d<T> even_;
  Conv2d<T> odd_;
  BatchNorm2d<T> bn_;
};

}  // namespace serdarts::nn
