// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "serdarts/tensor.hpp"

namespace serdarts::optim {

/// Raised when a gradient, loss or update turns non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

struct SgdConfig {
  double lr_max = 0.025;
  double lr_min = 1e-3;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  std::size_t total_epochs = 300;

  void validate() const;
};

/// lr_min + (lr_max - lr_min)(1 + cos(pi t / T)) / 2 for 0 <= t <= T.
double cosine_lr(const SgdConfig& cfg, std::size_t epoch);

/// SGD with momentum and L2 weight decay folded into the gradient:
/// v <- momentum v + (g + wd p); p <- p - lr v.
/// A parameter without a gradient buffer counts as having a zero gradient.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Tensor<T>> params, const SgdConfig& cfg);

  /// Throws NumericError, leaving every parameter untouched, if any gradient
  /// is non-finite.
  void step(double lr);
  void zero_grad();

  const std::vector<Tensor<T>>& params() const { return params_; }
  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

 private:
  std::vector<Tensor<T>> params_;
  SgdConfig cfg_;
  std::vector<std::vector<T>> velocity_;
};

struct AlphaOptConfig {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 1e-3;
  double eps = 1e-8;

  void validate() const;
};

/// Adaptive-moment update with bias correction; weight decay is added to
/// the gradient (L2) before the moments.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, const AlphaOptConfig& cfg);

  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }
  const AlphaOptConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  AlphaOptConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Global L2 norm of the gradients (missing buffers count as zero).
template <typename T>
double grad_norm(const std::vector<Tensor<T>>& params);

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Tensor<T>>& params, double max_norm);

template <typename T>
void zero_grads(const std::vector<Tensor<T>>& params);

/// True when no parameter holds a non-zero gradient entry.
template <typename T>
bool grads_are_zero(const std::vector<Tensor<T>>& params);

}  // namespace serdarts::optim
