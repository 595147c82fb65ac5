// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "serdarts/rng.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts::nn {

/// floor((in + 2 pad - dilation (k - 1) - 1) / stride) + 1; throws when the
/// result would be < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t dilation = 1);

struct Conv2dGeometry {
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t dilation_h = 1, dilation_w = 1;
  std::size_t groups = 1;

  static Conv2dGeometry square(std::size_t kernel, std::size_t stride, std::size_t padding,
                               std::size_t dilation = 1, std::size_t groups = 1) {
    return {kernel, kernel, stride, stride, padding, padding, dilation, dilation, groups};
  }
};

/// x [B x Cin x H x W], weight [Cout x Cin/groups x kh x kw], bias [Cout]
/// (may be undefined).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dGeometry& geometry);

enum class PoolKind { max, avg };

struct Pool2dGeometry {
  std::size_t kernel_h = 2, kernel_w = 2;
  std::size_t stride_h = 2, stride_w = 2;
  std::size_t pad_h = 0, pad_w = 0;

  static Pool2dGeometry square(std::size_t kernel, std::size_t stride, std::size_t padding = 0) {
    return {kernel, kernel, stride, stride, padding, padding};
  }
};

/// Padded cells never win a max and are excluded from an average's count.
/// Max ties route the gradient to the lowest linear index in the window.
template <typename T>
Tensor<T> pool2d(PoolKind kind, const Tensor<T>& x, const Pool2dGeometry& geometry);

template <typename T>
struct BatchNormState {
  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
  Tensor<T> running_mean;  // untracked buffers
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel batch normalization over (B, H, W). Training mode normalizes
/// with batch statistics (biased variance) and folds them into the running
/// estimates (unbiased variance); eval mode uses the running estimates.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                      BatchNormState<T>& state, bool training);

/// y = x W^T + b for x [N x in], W [out x in], b [out] (may be undefined).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, RngState& rng);

/// [B x C x H x W] -> [B x W x (C*H)]: width becomes the sequence axis.
template <typename T>
Tensor<T> to_sequence(const Tensor<T>& x);

/// [B x C x H x W] -> [B x (C*H*W)]
template <typename T>
Tensor<T> flatten(const Tensor<T>& x);

/// out[b,c,h,w] = x[b,c,h+1,w+1], zero past the border.
template <typename T>
Tensor<T> shift_one(const Tensor<T>& x);

/// out[b,:] = sum_t weights[b,t] * seq[b,t,:]
template <typename T>
Tensor<T> weighted_time_sum(const Tensor<T>& weights, const Tensor<T>& seq);

/// Untracked zeros; used for the `none` candidate.
template <typename T>
Tensor<T> zeros(Shape shape) {
  return Tensor<T>(std::move(shape));
}

}  // namespace serdarts::nn
