// SPDX-License-Identifier: Apache-2.0
#include "serdarts/models/models.hpp"

#include <cstdio>
#include <set>

#include "serdarts/autograd.hpp"
#include "serdarts/ops.hpp"
#include "serdarts/optim/metrics.hpp"
#include "serdarts/search/mixed_op.hpp"

namespace serdarts::models {

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Throws on keys outside `allowed`.
void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (!j.is_object()) throw Error(what + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw Error(what + ": unknown key '" + key + "'");
}

}  // namespace

void HeadSpec::validate() const {
  if (lstm_units == 0) throw Error("head: lstm_units must be positive");
  if (use_attention && attention_dim == 0) throw Error("head: attention_dim must be positive");
  if (dense_widths.empty() || dense_widths.back() != kOutputClasses) {
    throw Error("head: dense widths must end in " + std::to_string(kOutputClasses) + " output units");
  }
  for (std::size_t w : dense_widths)
    if (w == 0) throw Error("head: dense widths must be positive");
}

void BaselineSpec::validate() const {
  if (conv_channels == 0 || dense_hidden == 0 || lstm_units == 0 || attention_dim == 0) {
    throw Error("baseline: widths must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("baseline: dropout must lie in [0, 1)");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::darts: return "darts";
    case ModelKind::cnn: return "cnn";
    case ModelKind::cnn_lstm: return "cnn_lstm";
    case ModelKind::cnn_lstm_attention: return "cnn_lstm_attention";
  }
  throw Error("unknown model kind");
}

ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::darts, ModelKind::cnn, ModelKind::cnn_lstm, ModelKind::cnn_lstm_attention})
    if (model_kind_name(k) == name) return k;
  throw Error("unknown model kind '" + name + "' (expected darts, cnn, cnn_lstm or cnn_lstm_attention)");
}

void ModelSpec::validate() const {
  if (height == 0 || width == 0) throw Error("model: input extent must be positive");
  if (kind == ModelKind::darts) {
    network.validate();
    if (network.input_channels != 1) throw Error("model: spectrogram input has one channel");
    if (!genotype) throw Error("model: the searched model needs a genotype");
    genotype->validate();
    if (genotype->nodes != network.nodes) throw Error("model: genotype node count differs from the network config");
    head.validate();
  } else {
    baseline.validate();
  }
}

nlohmann::ordered_json ModelSpec::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = model_kind_name(kind);
  j["input"] = {1, height, width};
  if (kind == ModelKind::darts) {
    j["network"] = {{"cells", network.cells},
                    {"init_channels", network.init_channels},
                    {"nodes", network.nodes},
                    {"stem_multiplier", network.stem_multiplier}};
    j["genotype"] = nlohmann::ordered_json::parse(cell::export_genotype(*genotype));
    j["head"] = {{"lstm_units", head.lstm_units},
                 {"bidirectional", head.bidirectional},
                 {"use_attention", head.use_attention},
                 {"attention_dim", head.attention_dim},
                 {"dense_widths", head.dense_widths}};
  } else {
    j["baseline"] = {{"conv_channels", baseline.conv_channels},
                     {"dropout", baseline.dropout},
                     {"dense_hidden", baseline.dense_hidden},
                     {"lstm_units", baseline.lstm_units},
                     {"attention_dim", baseline.attention_dim}};
  }
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    check_keys(j, {"kind", "input", "network", "genotype", "head", "baseline"}, "model spec");
    s.kind = parse_model_kind(j.at("kind").get<std::string>());
    const auto input = j.at("input").get<std::vector<std::size_t>>();
    if (input.size() != 3 || input[0] != 1) throw Error("model spec: input must be [1, H, W]");
    s.height = input[1];
    s.width = input[2];
    if (s.kind == ModelKind::darts) {
      const auto& n = j.at("network");
      check_keys(n, {"cells", "init_channels", "nodes", "stem_multiplier"}, "model spec network");
      s.network.cells = n.at("cells").get<std::size_t>();
      s.network.init_channels = n.at("init_channels").get<std::size_t>();
      s.network.nodes = n.at("nodes").get<std::size_t>();
      s.network.stem_multiplier = n.at("stem_multiplier").get<std::size_t>();
      s.genotype = cell::import_genotype(j.at("genotype").dump());
      const auto& h = j.at("head");
      check_keys(h, {"lstm_units", "bidirectional", "use_attention", "attention_dim", "dense_widths"},
                 "model spec head");
      s.head.lstm_units = h.at("lstm_units").get<std::size_t>();
      s.head.bidirectional = h.at("bidirectional").get<bool>();
      s.head.use_attention = h.at("use_attention").get<bool>();
      s.head.attention_dim = h.at("attention_dim").get<std::size_t>();
      s.head.dense_widths = h.at("dense_widths").get<std::vector<std::size_t>>();
    } else {
      const auto& b = j.at("baseline");
      check_keys(b, {"conv_channels", "dropout", "dense_hidden", "lstm_units", "attention_dim"},
                 "model spec baseline");
      s.baseline.conv_channels = b.at("conv_channels").get<std::size_t>();
      s.baseline.dropout = b.at("dropout").get<double>();
      s.baseline.dense_hidden = b.at("dense_hidden").get<std::size_t>();
      s.baseline.lstm_units = b.at("lstm_units").get<std::size_t>();
      s.baseline.attention_dim = b.at("attention_dim").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string ModelSpec::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

template <typename T>
Tensor<T> feature_map_to_sequence(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("sequence view expects [B x C x H x W], got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  return reshape(permute(x, {0, 3, 1, 2}), {B, W, C * H});
}

// ------------------------------------------------------------ recurrent head

template <typename T>
RecurrentHead<T>::RecurrentHead(std::size_t input_features, const HeadSpec& spec, RngState& rng)
    : lstm_(nn::LstmSpec{input_features, spec.lstm_units, spec.bidirectional}, rng) {
  spec.validate();
  const std::size_t width = lstm_.spec().output_size();
  if (spec.use_attention) attention_ = std::make_unique<nn::AttentionPool<T>>(width, spec.attention_dim, rng);
  std::size_t in = width;
  for (std::size_t w : spec.dense_widths) {
    dense_.push_back(std::make_unique<nn::Linear<T>>(in, w, rng));
    in = w;
  }
}

template <typename T>
Tensor<T> RecurrentHead<T>::recurrent_outputs(const Tensor<T>& seq, nn::ForwardContext& ctx) {
  return lstm_.forward(seq, ctx);
}

template <typename T>
Tensor<T> RecurrentHead<T>::forward(const Tensor<T>& seq, nn::ForwardContext& ctx) {
  Tensor<T> outputs = lstm_.forward(seq, ctx);
  Tensor<T> y = attention_ ? attention_->forward(outputs, ctx) : nn::LastStep<T>().forward(outputs, ctx);
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    y = dense_[i]->forward(y, ctx);
    if (i + 1 < dense_.size()) y = relu(y);
  }
  return y;
}

template <typename T>
void RecurrentHead<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  lstm_.visit(nn::join_name(prefix, "lstm"), fn);
  if (attention_) attention_->visit(nn::join_name(prefix, "attention"), fn);
  for (std::size_t i = 0; i < dense_.size(); ++i) dense_[i]->visit(nn::join_name(prefix, "dense" + std::to_string(i)), fn);
}

// ------------------------------------------------------------ searched model

namespace {

// Node width and spatial extent after the cell stack.
struct StackGeometry {
  std::size_t channels, height, width;
};

StackGeometry stack_geometry(const cell::NetworkConfig& cfg, std::size_t concat, std::size_t h, std::size_t w) {
  const auto plan = cell::channel_plan(cfg, concat);
  for (const auto& p : plan)
    if (p.reduction) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
  return {plan.back().channels, h, w};
}

}  // namespace

template <typename T>
DartsModel<T>::DartsModel(const cell::NetworkConfig& cfg, const cell::Genotype& genotype, const HeadSpec& head,
                          std::size_t height, std::size_t width, RngState& rng) {
  head.validate();
  network_ = std::make_unique<cell::DiscreteNetwork<T>>(cfg, genotype, rng);
  const auto geo = stack_geometry(cfg, genotype.concat.size(), height, width);
  projection_ = nn::relu_conv_bn<T>(network_->output_channels(), geo.channels, 1, 1, 0, rng);
  head_ = std::make_unique<RecurrentHead<T>>(geo.channels * geo.height, head, rng);
}

template <typename T>
Tensor<T> DartsModel<T>::features(const Tensor<T>& x, nn::ForwardContext& ctx) {
  return projection_->forward(network_->forward(x, ctx), ctx);
}

template <typename T>
Tensor<T> DartsModel<T>::forward(const Tensor<T>& x, nn::ForwardContext& ctx) {
  return head_->forward(feature_map_to_sequence(features(x, ctx)), ctx);
}

template <typename T>
void DartsModel<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  network_->visit(nn::join_name(prefix, "cnn"), fn);
  projection_->visit(nn::join_name(prefix, "projection"), fn);
  head_->visit(nn::join_name(prefix, "head"), fn);
}

template <typename T>
SearchModel<T>::SearchModel(const cell::NetworkConfig& cfg, const HeadSpec& head, std::size_t height,
                            std::size_t width, RngState& rng, double alpha_scale) {
  head.validate();
  network_ = std::make_unique<cell::SearchNetwork<T>>(cfg, rng, alpha_scale);
  const auto geo = stack_geometry(cfg, cfg.nodes, height, width);
  projection_ = nn::relu_conv_bn<T>(network_->output_channels(), geo.channels, 1, 1, 0, rng);
  head_ = std::make_unique<RecurrentHead<T>>(geo.channels * geo.height, head, rng);
}

template <typename T>
Tensor<T> SearchModel<T>::forward(const Tensor<T>& x, nn::ForwardContext& ctx) {
  return head_->forward(feature_map_to_sequence(projection_->forward(network_->forward(x, ctx), ctx)), ctx);
}

template <typename T>
void SearchModel<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  network_->visit(nn::join_name(prefix, "cnn"), fn);
  projection_->visit(nn::join_name(prefix, "projection"), fn);
  head_->visit(nn::join_name(prefix, "head"), fn);
}

template <typename T>
double SearchModel<T>::alpha_entropy() const {
  auto& net = *network_;
  const auto& normal = net.alpha_normal().logits;
  const auto& reduce = net.alpha_reduce().logits;
  const double rows_n = static_cast<double>(normal.dim(0)), rows_r = static_cast<double>(reduce.dim(0));
  return (search::mean_row_entropy(normal) * rows_n + search::mean_row_entropy(reduce) * rows_r) / (rows_n + rows_r);
}

// ------------------------------------------------------------ baselines

namespace {

nn::Conv2dSpec baseline_conv(const BaselineSpec& spec) {
  nn::Conv2dSpec c;
  c.in_channels = 1;
  c.out_channels = spec.conv_channels;
  c.kernel = 2;
  c.stride = 2;
  c.padding = 2;
  c.bias = true;
  return c;
}

}  // namespace

template <typename T>
BaselineModel<T>::BaselineModel(ModelKind kind, const BaselineSpec& spec, std::size_t height, std::size_t width,
                                RngState& rng)
    : kind_(kind),
      conv_(baseline_conv(spec), rng),
      pool_(nn::PoolKind::max, nn::Pool2dGeometry::square(2, 2)),
      dropout_(spec.dropout) {
  spec.validate();
  if (kind == ModelKind::darts) throw Error("baseline model: kind must be a baseline");
  const auto conv = baseline_conv(spec);
  const std::size_t h = (conv.output_extent(height) - 2) / 2 + 1, w = (conv.output_extent(width) - 2) / 2 + 1;
  if (kind == ModelKind::cnn) {
    hidden_ = std::make_unique<nn::Linear<T>>(spec.conv_channels * h * w, spec.dense_hidden, rng);
    output_ = std::make_unique<nn::Linear<T>>(spec.dense_hidden, kOutputClasses, rng);
  } else {
    HeadSpec head;
    head.lstm_units = spec.lstm_units;
    head.bidirectional = true;
    head.use_attention = kind == ModelKind::cnn_lstm_attention;
    head.attention_dim = spec.attention_dim;
    head.dense_widths = {spec.dense_hidden, kOutputClasses};
    head_ = std::make_unique<RecurrentHead<T>>(spec.conv_channels * h, head, rng);
  }
}

template <typename T>
Tensor<T> BaselineModel<T>::conv_output(const Tensor<T>& x, nn::ForwardContext& ctx) {
  return relu(conv_.forward(x, ctx));
}

template <typename T>
Tensor<T> BaselineModel<T>::pooled(const Tensor<T>& x, nn::ForwardContext& ctx) {
  return pool_.forward(conv_output(x, ctx), ctx);
}

template <typename T>
Tensor<T> BaselineModel<T>::forward(const Tensor<T>& x, nn::ForwardContext& ctx) {
  Tensor<T> p = dropout_.forward(pooled(x, ctx), ctx);
  if (head_) return head_->forward(feature_map_to_sequence(p), ctx);
  Tensor<T> flat = reshape(p, {p.dim(0), p.numel() / p.dim(0)});
  return output_->forward(relu(hidden_->forward(flat, ctx)), ctx);
}

template <typename T>
void BaselineModel<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  conv_.visit(nn::join_name(prefix, "conv"), fn);
  if (hidden_) hidden_->visit(nn::join_name(prefix, "dense0"), fn);
  if (output_) output_->visit(nn::join_name(prefix, "dense1"), fn);
  if (head_) head_->visit(nn::join_name(prefix, "head"), fn);
}

// ------------------------------------------------------------ bundles

template <typename T>
std::size_t count_parameters(nn::Layer<T>& layer) {
  std::size_t n = 0;
  for (const auto& p : nn::parameters_of(layer)) n += p.numel();
  return n;
}

Tensor<float> ModelBundle::forward(const Tensor<float>& x, nn::ForwardContext& ctx) const {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != spec.height || x.dim(3) != spec.width) {
    throw ShapeError("model expects [B x 1 x " + std::to_string(spec.height) + " x " + std::to_string(spec.width) +
                     "], got " + shape_str(x.shape()));
  }
  return model->forward(x, ctx);
}

ModelBundle build_model(const ModelSpec& spec, RngState& rng) {
  spec.validate();
  ModelBundle b;
  b.spec = spec;
  if (spec.kind == ModelKind::darts) {
    b.model = std::make_unique<DartsModel<float>>(spec.network, *spec.genotype, spec.head, spec.height, spec.width, rng);
  } else {
    b.model = std::make_unique<BaselineModel<float>>(spec.kind, spec.baseline, spec.height, spec.width, rng);
  }
  b.parameter_count = count_parameters(*b.model);
  b.fingerprint = spec.fingerprint();
  return b;
}

ModelBundle build_darts_model(const cell::Genotype& genotype, const cell::NetworkConfig& cfg, const HeadSpec& head,
                              RngState& rng) {
  ModelSpec spec;
  spec.kind = ModelKind::darts;
  spec.network = cfg;
  spec.genotype = genotype;
  spec.head = head;
  return build_model(spec, rng);
}

ModelBundle build_cnn_baseline(RngState& rng, const BaselineSpec& baseline) {
  ModelSpec spec;
  spec.kind = ModelKind::cnn;
  spec.baseline = baseline;
  return build_model(spec, rng);
}

ModelBundle build_cnn_lstm_baseline(bool attention, RngState& rng, const BaselineSpec& baseline) {
  ModelSpec spec;
  spec.kind = attention ? ModelKind::cnn_lstm_attention : ModelKind::cnn_lstm;
  spec.baseline = baseline;
  return build_model(spec, rng);
}

Prediction predict_from_logits(const Tensor<float>& logits) {
  if (logits.rank() != 2 || logits.dim(1) == 0) throw ShapeError("predict: logits must be [B x K]");
  Prediction p;
  {
    NoGradGuard guard;
    p.probabilities = softmax(logits, 1);
  }
  p.classes = optim::argmax_rows(std::span<const float>(logits.data()), logits.dim(1));
  return p;
}

Prediction predict(const ModelBundle& bundle, const Tensor<float>& batch) {
  NoGradGuard guard;
  nn::ForwardContext ctx{false, nullptr};
  return predict_from_logits(bundle.forward(batch, ctx));
}

template Tensor<float> feature_map_to_sequence(const Tensor<float>&);
template Tensor<double> feature_map_to_sequence(const Tensor<double>&);
template class RecurrentHead<float>;
template class RecurrentHead<double>;
template class DartsModel<float>;
template class DartsModel<double>;
template class SearchModel<float>;
template class SearchModel<double>;
template class BaselineModel<float>;
template class BaselineModel<double>;
template std::size_t count_parameters(nn::Layer<float>&);
template std::size_t count_parameters(nn::Layer<double>&);

}  // namespace serdarts::models
