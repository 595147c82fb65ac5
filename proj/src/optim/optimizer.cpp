// SPDX-License-Identifier: Apache-2.0
#include "serdarts/optim/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace serdarts::optim {

namespace {

template <typename T>
void require_finite_grads(const std::vector<Tensor<T>>& params, const char* who) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    for (T g : params[i].grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError(std::string(who) + ": non-finite gradient in parameter " + std::to_string(i) + " of shape " +
                           shape_str(params[i].shape()) + "; step aborted");
      }
    }
  }
}

}  // namespace

void SgdConfig::validate() const {
  if (!(lr_min >= 0.0 && lr_min <= lr_max)) {
    throw Error("sgd: need 0 <= lr_min <= lr_max, got lr_min=" + std::to_string(lr_min) +
                " lr_max=" + std::to_string(lr_max));
  }
  if (total_epochs < 1) throw Error("sgd: total_epochs must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error("sgd: weight_decay must be non-negative");
}

double cosine_lr(const SgdConfig& cfg, std::size_t epoch) {
  cfg.validate();
  if (epoch > cfg.total_epochs) {
    throw Error("cosine_lr: epoch " + std::to_string(epoch) + " exceeds the schedule length " +
                std::to_string(cfg.total_epochs));
  }
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(cfg.total_epochs);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
}

// ------------------------------------------------------------------ Sgd

template <typename T>
Sgd<T>::Sgd(std::vector<Tensor<T>> params, const SgdConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), T(0));
}

template <typename T>
void Sgd<T>::step(double lr) {
  if (!std::isfinite(lr) || lr < 0.0) throw NumericError("sgd: invalid learning rate " + std::to_string(lr));
  require_finite_grads(params_, "sgd");
  const double mu = cfg_.momentum, wd = cfg_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].data();
    auto& v = velocity_[i];
    const bool has = params_[i].has_grad();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = (has ? static_cast<double>(params_[i].grad()[k]) : 0.0) + wd * static_cast<double>(p[k]);
      v[k] = static_cast<T>(mu * static_cast<double>(v[k]) + g);
      p[k] = static_cast<T>(static_cast<double>(p[k]) - lr * static_cast<double>(v[k]));
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  zero_grads(params_);
}

// ----------------------------------------------------------------- Adam

void AlphaOptConfig::validate() const {
  if (!(lr >= 0.0)) throw Error("alpha optimizer: lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error("alpha optimizer: betas must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw Error("alpha optimizer: weight_decay must be non-negative");
  if (!(eps > 0.0)) throw Error("alpha optimizer: eps must be positive");
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, const AlphaOptConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  require_finite_grads(params_, "alpha optimizer");
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].data();
    const bool has = params_[i].has_grad();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g =
          (has ? static_cast<double>(params_[i].grad()[k]) : 0.0) + cfg_.weight_decay * static_cast<double>(p[k]);
      m_[i][k] = b1 * m_[i][k] + (1.0 - b1) * g;
      v_[i][k] = b2 * v_[i][k] + (1.0 - b2) * g * g;
      const double update = cfg_.lr * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + cfg_.eps);
      p[k] = static_cast<T>(static_cast<double>(p[k]) - update);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  zero_grads(params_);
}

// -------------------------------------------------------------- helpers

template <typename T>
double grad_norm(const std::vector<Tensor<T>>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

template <typename T>
double clip_grad_norm(const std::vector<Tensor<T>>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw Error("clip_grad_norm: max_norm must be positive");
  const double norm = grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("clip_grad_norm: gradient norm is non-finite");
  if (norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (auto p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g = static_cast<T>(static_cast<double>(g) * scale);
    }
  }
  return norm;
}

template <typename T>
void zero_grads(const std::vector<Tensor<T>>& params) {
  for (auto p : params) p.zero_grad();
}

template <typename T>
bool grads_are_zero(const std::vector<Tensor<T>>& params) {
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad())
      if (g != T(0)) return false;
  }
  return true;
}

#define SERDARTS_INSTANTIATE_OPTIM(T)                                           \
  template class Sgd<T>;                                                        \
  template class Adam<T>;                                                       \
  template double grad_norm(const std::vector<Tensor<T>>&);                     \
  template double clip_grad_norm(const std::vector<Tensor<T>>&, double);        \
  template void zero_grads(const std::vector<Tensor<T>>&);                      \
  template bool grads_are_zero(const std::vector<Tensor<T>>&);

SERDARTS_INSTANTIATE_OPTIM(float)
SERDARTS_INSTANTIATE_OPTIM(double)

#undef SERDARTS_INSTANTIATE_OPTIM

}  // namespace serdarts::optim
