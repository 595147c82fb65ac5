// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "serdarts/cell/genotype.hpp"
#include "serdarts/cell/network.hpp"
#include "serdarts/nn/recurrent.hpp"

namespace serdarts::models {

inline constexpr std::size_t kOutputClasses = 4;

/// Recurrent head: LSTM, then attention pooling or the last step, then a
/// dense stack with ReLU between layers.
struct HeadSpec {
  std::size_t lstm_units = 256;
  bool bidirectional = false;
  bool use_attention = false;
  std::size_t attention_dim = 64;
  std::vector<std::size_t> dense_widths{256, kOutputClasses};

  void validate() const;
};

/// Hand-engineered baselines: one conv (k2, s2, p2) with ReLU, 2x2 max
/// pool, dropout, then either two dense layers or a bidirectional LSTM head.
struct BaselineSpec {
  std::size_t conv_channels = 16;
  double dropout = 0.3;
  std::size_t dense_hidden = 256;
  std::size_t lstm_units = 128;
  std::size_t attention_dim = 64;

  void validate() const;
};

enum class ModelKind { darts, cnn, cnn_lstm, cnn_lstm_attention };
std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Everything needed to rebuild a model's architecture.
struct ModelSpec {
  ModelKind kind = ModelKind::darts;
  cell::NetworkConfig network;
  std::optional<cell::Genotype> genotype;
  HeadSpec head;
  BaselineSpec baseline;
  std::size_t height = 128;
  std::size_t width = 128;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON, as 16 hex digits.
  std::string fingerprint() const;
};

/// [B x C x H x W] -> [B x W x (C*H)]: width is the time axis.
template <typename T>
Tensor<T> feature_map_to_sequence(const Tensor<T>& x);

template <typename T>
class RecurrentHead : public nn::Layer<T> {
 public:
  RecurrentHead(std::size_t input_features, const HeadSpec& spec, RngState& rng);
  /// [B x T x F] -> [B x classes]
  Tensor<T> forward(const Tensor<T>& seq, nn::ForwardContext& ctx) override;
  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) override;
  /// [B x T x H'] recurrent outputs before pooling.
  Tensor<T> recurrent_outputs(const Tensor<T>& seq, nn::ForwardContext& ctx);

 private:
  nn::Lstm<T> lstm_;
  std::unique_ptr<nn::AttentionPool<T>> attention_;
  std::vector<std::unique_ptr<nn::Linear<T>>> dense_;
};

/// Searched cell stack, a 1x1 ReLU-conv-BN projection of the concatenated
/// node outputs down to the last node width, then the recurrent head over
/// the width axis.
template <typename T>
class DartsModel : public nn::Layer<T> {
 public:
  DartsModel(const cell::NetworkConfig& cfg, const cell::Genotype& genotype, const HeadSpec& head,
             std::size_t height, std::size_t width, RngState& rng);
  Tensor<T> forward(const Tensor<T>& x, nn::ForwardContext& ctx) override;
  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) override;
  /// Projected feature map [B x C' x H' x W'] fed to the head.
  Tensor<T> features(const Tensor<T>& x, nn::ForwardContext& ctx);
  cell::DiscreteNetwork<T>& network() { return *network_; }

 private:
  std::unique_ptr<cell::DiscreteNetwork<T>> network_;
  std::unique_ptr<nn::Sequential<T>> projection_;
  std::unique_ptr<RecurrentHead<T>> head_;
};

/// The continuous counterpart of DartsModel used during architecture search:
/// same projection and head on top of the mixed-operation cell stack.
template <typename T>
class SearchModel : public nn::Layer<T> {
 public:
  SearchModel(const cell::NetworkConfig& cfg, const HeadSpec& head, std::size_t height, std::size_t width,
              RngState& rng, double alpha_scale = 1e-3);
  Tensor<T> forward(const Tensor<T>& x, nn::ForwardContext& ctx) override;
  /// Network weights only; the architecture logits are not visited.
  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) override;
  cell::SearchNetwork<T>& network() { return *network_; }
  std::vector<Tensor<T>> alphas() { return network_->alphas(); }
  cell::Genotype genotype() const { return network_->genotype(); }
  /// Mean softmax entropy over the rows of both architecture tables.
  double alpha_entropy() const;

 private:
  std::unique_ptr<cell::SearchNetwork<T>> network_;
  std::unique_ptr<nn::Sequential<T>> projection_;
  std::unique_ptr<RecurrentHead<T>> head_;
};

template <typename T>
class BaselineModel : public nn::Layer<T> {
 public:
  BaselineModel(ModelKind kind, const BaselineSpec& spec, std::size_t height, std::size_t width, RngState& rng);
  Tensor<T> forward(const Tensor<T>& x, nn::ForwardContext& ctx) override;
  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) override;
  /// Conv output [B x C x H1 x W1] and pooled output [B x C x H2 x W2].
  Tensor<T> conv_output(const Tensor<T>& x, nn::ForwardContext& ctx);
  Tensor<T> pooled(const Tensor<T>& x, nn::ForwardContext& ctx);

 private:
  ModelKind kind_;
  nn::Conv2d<T> conv_;
  nn::Pool2d<T> pool_;
  nn::Dropout<T> dropout_;
  std::unique_ptr<nn::Linear<T>> hidden_, output_;
  std::unique_ptr<RecurrentHead<T>> head_;
};

/// A built model with its architecture description.
struct ModelBundle {
  ModelSpec spec;
  std::unique_ptr<nn::Layer<float>> model;
  std::size_t parameter_count = 0;
  std::string fingerprint;

  Tensor<float> forward(const Tensor<float>& x, nn::ForwardContext& ctx) const;
};

ModelBundle build_model(const ModelSpec& spec, RngState& rng);
ModelBundle build_darts_model(const cell::Genotype& genotype, const cell::NetworkConfig& cfg, const HeadSpec& head,
                              RngState& rng);
ModelBundle build_cnn_baseline(RngState& rng, const BaselineSpec& spec = {});
ModelBundle build_cnn_lstm_baseline(bool attention, RngState& rng, const BaselineSpec& spec = {});

/// Number of trainable scalars.
template <typename T>
std::size_t count_parameters(nn::Layer<T>& layer);

struct Prediction {
  std::vector<int> classes;    // argmax, lowest index on ties
  Tensor<float> probabilities;  // [B x classes], softmax of the logits
};

/// Eval-mode, gradient-free forward on a [B x 1 x H x W] batch.
Prediction predict(const ModelBundle& bundle, const Tensor<float>& batch);
/// Softmax and argmax of precomputed logits.
Prediction predict_from_logits(const Tensor<float>& logits);

}  // namespace serdarts::models
