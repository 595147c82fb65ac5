// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "serdarts/nn/layers.hpp"
#include "serdarts/optim/metrics.hpp"
#include "serdarts/optim/optimizer.hpp"
#include "serdarts/rng.hpp"

namespace serdarts::optim {

/// Labelled examples stacked along axis 0 of `features`.
template <typename T>
struct LabelledData {
  Tensor<T> features;
  std::vector<int> labels;
  std::size_t num_classes = 4;

  std::size_t size() const { return labels.size(); }
  /// Throws on an empty set, a row/label count mismatch or a label outside
  /// [0, num_classes).
  void validate(const char* what) const;
  /// Untracked copy of the listed examples.
  Tensor<T> gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  /// Examples at `indices` as a new set.
  LabelledData subset(std::span<const std::size_t> indices) const;
};

/// Shuffled partition of [0, n) into batches of `batch_size` (last one may
/// be short).
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, RngState& rng);
/// In-order partition of [0, n).
std::vector<std::vector<std::size_t>> ordered_batches(std::size_t n, std::size_t batch_size);

struct SearchLoopConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 16;
  double grad_clip = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One pass over `data` in training mode: cross-entropy, backward, clip,
/// SGD step. Metrics come from the predictions made during the pass.
template <typename T>
EpochMetrics train_epoch(nn::Layer<T>& model, const LabelledData<T>& data, Sgd<T>& opt, double lr,
                         std::size_t batch_size, double grad_clip, RngState& rng);

/// Loss, WA and UA in eval mode without touching parameters, buffers or
/// gradients.
template <typename T>
EpochMetrics evaluate(nn::Layer<T>& model, const LabelledData<T>& data, std::size_t batch_size = 16);

/// Loss, WA and UA in training mode (batch statistics) over ordered
/// batches, without gradients or parameter updates. Batch-norm running
/// statistics advance as in any training-mode pass.
template <typename T>
EpochMetrics probe_epoch(nn::Layer<T>& model, const LabelledData<T>& data, std::size_t batch_size, RngState& rng);

struct SearchEpochMetrics {
  EpochMetrics search;  // architecture steps
  EpochMetrics train;   // weight steps
  std::size_t steps = 0;
};

/// First-order alternation over paired batches; the shorter split is cycled
/// so every example of the longer one is visited once. Per pair: a
/// search-split batch updates only the architecture parameters held by
/// `alpha_opt`, then a train-split batch updates only the weights held by
/// `weight_opt` (gradient norm clipped at `cfg.grad_clip`). Each optimizer
/// steps with the other group's gradients zeroed.
template <typename T>
SearchEpochMetrics search_epoch(nn::Layer<T>& model, const LabelledData<T>& search_split,
                                const LabelledData<T>& train_split, Sgd<T>& weight_opt, double lr,
                                Adam<T>& alpha_opt, const SearchLoopConfig& cfg, RngState& rng);

}  // namespace serdarts::optim
