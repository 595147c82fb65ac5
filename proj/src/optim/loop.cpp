// SPDX-License-Identifier: Apache-2.0
#include "serdarts/optim/loop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "serdarts/autograd.hpp"
#include "serdarts/ops.hpp"

namespace serdarts::optim {

template <typename T>
void LabelledData<T>::validate(const char* what) const {
  if (labels.empty()) throw Error(std::string(what) + ": empty dataset");
  if (!features.defined() || features.rank() < 1 || features.dim(0) != labels.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for features of shape " +
                     (features.defined() ? shape_str(features.shape()) : std::string("<undefined>")));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error(std::string(what) + ": label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) +
                  ")");
    }
  }
}

template <typename T>
Tensor<T> LabelledData<T>::gather(std::span<const std::size_t> indices) const {
  Shape shape = features.shape();
  const std::size_t row = features.numel() / shape[0];
  shape[0] = indices.size();
  Tensor<T> out(shape);
  auto src = features.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= labels.size()) throw Error("gather: example index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * row), row,
                dst.begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  return out;
}

template <typename T>
std::vector<int> LabelledData<T>::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

template <typename T>
LabelledData<T> LabelledData<T>::subset(std::span<const std::size_t> indices) const {
  return {gather(indices), gather_labels(indices), num_classes};
}

std::vector<std::vector<std::size_t>> ordered_batches(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw Error("batch size must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> b(std::min(batch_size, n - start));
    std::iota(b.begin(), b.end(), start);
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, RngState& rng) {
  if (batch_size == 0) throw Error("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min(batch_size, n - start);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(start + len));
  }
  return out;
}

void SearchLoopConfig::validate() const {
  if (epochs < 1) throw Error("search: epochs must be at least 1");
  if (batch_size < 1) throw Error("search: batch_size must be at least 1");
  if (!(grad_clip > 0.0)) throw Error("search: grad_clip must be positive");
}

namespace {

// Accumulates example-weighted loss and the confusion tally over a pass.
struct PassAccumulator {
  explicit PassAccumulator(std::size_t classes) : tally(classes) {}

  template <typename T>
  void add(const Tensor<T>& logits, double loss, std::span<const int> labels) {
    loss_sum += loss * static_cast<double>(labels.size());
    tally.add(labels, argmax_rows(logits.data(), logits.dim(1)));
  }

  EpochMetrics finish() const {
    EpochMetrics m;
    m.examples = tally.total();
    m.loss = m.examples == 0 ? 0.0 : loss_sum / static_cast<double>(m.examples);
    m.wa = tally.weighted_accuracy();
    m.ua = tally.unweighted_accuracy();
    return m;
  }

  ClassificationTally tally;
  double loss_sum = 0.0;
};

template <typename T>
double checked_loss(const Tensor<T>& loss, const char* where, std::size_t step) {
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) {
    throw NumericError(std::string(where) + ": non-finite loss at step " + std::to_string(step) + "; epoch aborted");
  }
  return value;
}

template <typename T>
void check_logits(const Tensor<T>& logits, const LabelledData<T>& data) {
  if (logits.rank() != 2 || logits.dim(1) != data.num_classes) {
    throw ShapeError("model produced logits of shape " + shape_str(logits.shape()) + " for " +
                     std::to_string(data.num_classes) + " classes");
  }
}

}  // namespace

template <typename T>
EpochMetrics train_epoch(nn::Layer<T>& model, const LabelledData<T>& data, Sgd<T>& opt, double lr,
                         std::size_t batch_size, double grad_clip, RngState& rng) {
  data.validate("train_epoch");
  PassAccumulator acc(data.num_classes);
  nn::ForwardContext ctx{true, &rng};
  const auto batches = shuffled_batches(data.size(), batch_size, rng);
  for (std::size_t step = 0; step < batches.size(); ++step) {
    const auto& idx = batches[step];
    const std::vector<int> labels = data.gather_labels(idx);
    opt.zero_grad();
    Tensor<T> logits = model.forward(data.gather(idx), ctx);
    check_logits(logits, data);
    Tensor<T> loss = cross_entropy(logits, std::span<const int>(labels));
    const double value = checked_loss(loss, "train_epoch", step);
    backward(loss);
    clip_grad_norm(opt.params(), grad_clip);
    opt.step(lr);
    opt.zero_grad();
    acc.add(logits, value, labels);
  }
  return acc.finish();
}

template <typename T>
EpochMetrics evaluate(nn::Layer<T>& model, const LabelledData<T>& data, std::size_t batch_size) {
  data.validate("evaluate");
  NoGradGuard guard;
  PassAccumulator acc(data.num_classes);
  nn::ForwardContext ctx{false, nullptr};
  for (const auto& idx : ordered_batches(data.size(), batch_size)) {
    const std::vector<int> labels = data.gather_labels(idx);
    Tensor<T> logits = model.forward(data.gather(idx), ctx);
    check_logits(logits, data);
    const double value = static_cast<double>(cross_entropy(logits, std::span<const int>(labels)).item());
    acc.add(logits, value, labels);
  }
  return acc.finish();
}

template <typename T>
EpochMetrics probe_epoch(nn::Layer<T>& model, const LabelledData<T>& data, std::size_t batch_size, RngState& rng) {
  data.validate("probe_epoch");
  NoGradGuard guard;
  PassAccumulator acc(data.num_classes);
  nn::ForwardContext ctx{true, &rng};
  for (const auto& idx : ordered_batches(data.size(), batch_size)) {
    const std::vector<int> labels = data.gather_labels(idx);
    Tensor<T> logits = model.forward(data.gather(idx), ctx);
    check_logits(logits, data);
    acc.add(logits, checked_loss(cross_entropy(logits, std::span<const int>(labels)), "probe_epoch", 0), labels);
  }
  return acc.finish();
}

template <typename T>
SearchEpochMetrics search_epoch(nn::Layer<T>& model, const LabelledData<T>& search_split,
                                const LabelledData<T>& train_split, Sgd<T>& weight_opt, double lr,
                                Adam<T>& alpha_opt, const SearchLoopConfig& cfg, RngState& rng) {
  cfg.validate();
  search_split.validate("search_epoch (search split)");
  train_split.validate("search_epoch (train split)");
  PassAccumulator search_acc(search_split.num_classes), train_acc(train_split.num_classes);
  nn::ForwardContext ctx{true, &rng};

  const auto search_batches = shuffled_batches(search_split.size(), cfg.batch_size, rng);
  const auto train_batches = shuffled_batches(train_split.size(), cfg.batch_size, rng);
  const std::size_t steps = std::max(search_batches.size(), train_batches.size());

  auto forward_loss = [&](const LabelledData<T>& data, const std::vector<std::size_t>& idx,
                          const std::vector<int>& labels, Tensor<T>& logits) {
    logits = model.forward(data.gather(idx), ctx);
    check_logits(logits, data);
    return cross_entropy(logits, std::span<const int>(labels));
  };

  weight_opt.zero_grad();
  alpha_opt.zero_grad();
  for (std::size_t step = 0; step < steps; ++step) {
    {  // architecture step on the search split
      const auto& idx = search_batches[step % search_batches.size()];
      const std::vector<int> labels = search_split.gather_labels(idx);
      Tensor<T> logits;
      Tensor<T> loss = forward_loss(search_split, idx, labels, logits);
      const double value = checked_loss(loss, "search_epoch (search split)", step);
      backward(loss);
      weight_opt.zero_grad();
      if (!grads_are_zero(weight_opt.params())) throw Error("search_epoch: weight gradients leaked into the alpha step");
      alpha_opt.step();
      alpha_opt.zero_grad();
      search_acc.add(logits, value, labels);
    }
    {  // weight step on the train split
      const auto& idx = train_batches[step % train_batches.size()];
      const std::vector<int> labels = train_split.gather_labels(idx);
      Tensor<T> logits;
      Tensor<T> loss = forward_loss(train_split, idx, labels, logits);
      const double value = checked_loss(loss, "search_epoch (train split)", step);
      backward(loss);
      alpha_opt.zero_grad();
      if (!grads_are_zero(alpha_opt.params())) throw Error("search_epoch: alpha gradients leaked into the weight step");
      clip_grad_norm(weight_opt.params(), cfg.grad_clip);
      weight_opt.step(lr);
      weight_opt.zero_grad();
      train_acc.add(logits, value, labels);
    }
  }
  return {search_acc.finish(), train_acc.finish(), steps};
}

#define SERDARTS_INSTANTIATE_LOOP(T)                                                                        \
  template struct LabelledData<T>;                                                                          \
  template EpochMetrics train_epoch(nn::Layer<T>&, const LabelledData<T>&, Sgd<T>&, double, std::size_t,    \
                                    double, RngState&);                                                     \
  template EpochMetrics evaluate(nn::Layer<T>&, const LabelledData<T>&, std::size_t);                       \
  template EpochMetrics probe_epoch(nn::Layer<T>&, const LabelledData<T>&, std::size_t, RngState&);          \
  template SearchEpochMetrics search_epoch(nn::Layer<T>&, const LabelledData<T>&, const LabelledData<T>&,   \
                                           Sgd<T>&, double, Adam<T>&, const SearchLoopConfig&, RngState&);

SERDARTS_INSTANTIATE_LOOP(float)
SERDARTS_INSTANTIATE_LOOP(double)

#undef SERDARTS_INSTANTIATE_LOOP

}  // namespace serdarts::optim
