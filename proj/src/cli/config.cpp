// SPDX-License-Identifier: Apache-2.0
#include "serdarts/cli/config.hpp"

#include <fstream>
#include <set>

#include "serdarts/models/checkpoint.hpp"

namespace serdarts::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const char* type_word(const json& j) {
  if (j.is_boolean()) return "a boolean";
  if (j.is_number_unsigned()) return "a non-negative integer";
  if (j.is_number()) return "a number";
  if (j.is_string()) return "a string";
  if (j.is_array()) return "an array";
  if (j.is_object()) return "an object";
  return "null";
}

bool compatible(const json& def, const json& value) {
  if (def.is_number_unsigned()) return value.is_number_unsigned();
  if (def.is_number()) return value.is_number();
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_string()) return value.is_string();
  if (def.is_array()) return value.is_array();
  if (def.is_object()) return value.is_object();
  return false;
}

// Overlays `patch` on `base` in place; every patched key must exist in base
// with a compatible type.
void overlay(ordered_json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw Error("config" + path + ": expected an object, got " + type_word(patch));
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path + "." + key;
    if (!base.contains(key)) throw Error("config: unknown key '" + where.substr(1) + "'");
    auto& slot = base[key];
    if (!compatible(slot, value)) {
      throw Error("config: '" + where.substr(1) + "' must be " + type_word(slot) + ", got " + type_word(value));
    }
    if (slot.is_object()) {
      overlay(slot, value, where);
    } else {
      slot = value;
    }
  }
}

template <typename V>
V take(const ordered_json& j, const char* key) {
  return j.at(key).get<V>();
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["model"] = model;
  j["network"] = {{"cells", network.cells},
                  {"init_channels", network.init_channels},
                  {"nodes", network.nodes},
                  {"stem_multiplier", network.stem_multiplier}};
  j["search"] = {{"epochs", search.epochs},
                 {"batch_size", search.batch_size},
                 {"grad_clip", search.grad_clip},
                 {"alpha_init_scale", search.alpha_init_scale},
                 {"lr_max", search.weights.lr_max},
                 {"lr_min", search.weights.lr_min},
                 {"momentum", search.weights.momentum},
                 {"weight_decay", search.weights.weight_decay},
                 {"alpha_lr", search.alpha.lr},
                 {"alpha_beta1", search.alpha.beta1},
                 {"alpha_beta2", search.alpha.beta2},
                 {"alpha_weight_decay", search.alpha.weight_decay},
                 {"alpha_eps", search.alpha.eps}};
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"grad_clip", train.grad_clip},
                {"lr_max", train.weights.lr_max},
                {"lr_min", train.weights.lr_min},
                {"momentum", train.weights.momentum},
                {"weight_decay", train.weights.weight_decay}};
  j["head"] = {{"lstm_units", head.lstm_units},
               {"bidirectional", head.bidirectional},
               {"use_attention", head.use_attention},
               {"attention_dim", head.attention_dim},
               {"dense_widths", head.dense_widths}};
  j["baseline"] = {{"conv_channels", baseline.conv_channels},
                   {"dropout", baseline.dropout},
                   {"dense_hidden", baseline.dense_hidden},
                   {"lstm_units", baseline.lstm_units},
                   {"attention_dim", baseline.attention_dim}};
  j["folds"] = {{"search_fraction", folds.search_fraction}, {"run", folds.run}, {"parallel", folds.parallel}};
  j["eval_batch_size"] = eval_batch_size;
  j["features"] = {{"sample_rate", features.sample_rate},
                   {"n_fft", features.n_fft},
                   {"hop", features.hop},
                   {"n_mels", features.n_mels},
                   {"frames", features.frames},
                   {"log_floor", features.log_floor},
                   {"target_seconds", features.target_seconds}};
  j["paths"] = {{"data", data_path}, {"genotype", genotype_path}, {"out_dir", out_dir}};
  return j;
}

RunConfig parse_config(const json& overrides) {
  ordered_json merged = default_config().to_json();
  overlay(merged, overrides, "");
  RunConfig c;
  try {
    c.seed = take<std::uint64_t>(merged, "seed");
    c.model = take<std::string>(merged, "model");
    const auto& n = merged["network"];
    c.network.cells = take<std::size_t>(n, "cells");
    c.network.init_channels = take<std::size_t>(n, "init_channels");
    c.network.nodes = take<std::size_t>(n, "nodes");
    c.network.stem_multiplier = take<std::size_t>(n, "stem_multiplier");
    const auto& s = merged["search"];
    c.search.epochs = take<std::size_t>(s, "epochs");
    c.search.batch_size = take<std::size_t>(s, "batch_size");
    c.search.grad_clip = take<double>(s, "grad_clip");
    c.search.alpha_init_scale = take<double>(s, "alpha_init_scale");
    c.search.weights.lr_max = take<double>(s, "lr_max");
    c.search.weights.lr_min = take<double>(s, "lr_min");
    c.search.weights.momentum = take<double>(s, "momentum");
    c.search.weights.weight_decay = take<double>(s, "weight_decay");
    c.search.weights.total_epochs = c.search.epochs;
    c.search.alpha.lr = take<double>(s, "alpha_lr");
    c.search.alpha.beta1 = take<double>(s, "alpha_beta1");
    c.search.alpha.beta2 = take<double>(s, "alpha_beta2");
    c.search.alpha.weight_decay = take<double>(s, "alpha_weight_decay");
    c.search.alpha.eps = take<double>(s, "alpha_eps");
    const auto& t = merged["train"];
    c.train.epochs = take<std::size_t>(t, "epochs");
    c.train.batch_size = take<std::size_t>(t, "batch_size");
    c.train.grad_clip = take<double>(t, "grad_clip");
    c.train.weights.lr_max = take<double>(t, "lr_max");
    c.train.weights.lr_min = take<double>(t, "lr_min");
    c.train.weights.momentum = take<double>(t, "momentum");
    c.train.weights.weight_decay = take<double>(t, "weight_decay");
    c.train.weights.total_epochs = c.train.epochs;
    const auto& h = merged["head"];
    c.head.lstm_units = take<std::size_t>(h, "lstm_units");
    c.head.bidirectional = take<bool>(h, "bidirectional");
    c.head.use_attention = take<bool>(h, "use_attention");
    c.head.attention_dim = take<std::size_t>(h, "attention_dim");
    c.head.dense_widths = take<std::vector<std::size_t>>(h, "dense_widths");
    const auto& b = merged["baseline"];
    c.baseline.conv_channels = take<std::size_t>(b, "conv_channels");
    c.baseline.dropout = take<double>(b, "dropout");
    c.baseline.dense_hidden = take<std::size_t>(b, "dense_hidden");
    c.baseline.lstm_units = take<std::size_t>(b, "lstm_units");
    c.baseline.attention_dim = take<std::size_t>(b, "attention_dim");
    const auto& f = merged["folds"];
    c.folds.search_fraction = take<double>(f, "search_fraction");
    c.folds.run = take<std::vector<std::size_t>>(f, "run");
    c.folds.parallel = take<std::size_t>(f, "parallel");
    c.eval_batch_size = take<std::size_t>(merged, "eval_batch_size");
    const auto& fe = merged["features"];
    c.features.sample_rate = take<double>(fe, "sample_rate");
    c.features.n_fft = take<std::size_t>(fe, "n_fft");
    c.features.hop = take<std::size_t>(fe, "hop");
    c.features.n_mels = take<std::size_t>(fe, "n_mels");
    c.features.frames = take<std::size_t>(fe, "frames");
    c.features.log_floor = take<double>(fe, "log_floor");
    c.features.target_seconds = take<double>(fe, "target_seconds");
    const auto& p = merged["paths"];
    c.data_path = take<std::string>(p, "data");
    c.genotype_path = take<std::string>(p, "genotype");
    c.out_dir = take<std::string>(p, "out_dir");
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

void RunConfig::validate() const {
  network.validate();
  if (network.input_channels != 1) throw Error("config: network input is one channel");
  if (search.epochs == 0 || train.epochs == 0) throw Error("config: epochs must be at least 1");
  if (search.batch_size == 0 || train.batch_size == 0 || eval_batch_size == 0) {
    throw Error("config: batch sizes must be positive");
  }
  if (!(search.grad_clip > 0.0) || !(train.grad_clip > 0.0)) throw Error("config: grad_clip must be positive");
  if (!(search.alpha_init_scale > 0.0)) throw Error("config: alpha_init_scale must be positive");
  search.weights.validate();
  search.alpha.validate();
  train.weights.validate();
  head.validate();
  baseline.validate();
  models::parse_model_kind(model);
  if (!(folds.search_fraction > 0.0 && folds.search_fraction < 1.0)) {
    throw Error("config: folds.search_fraction must lie in (0, 1)");
  }
  if (folds.run.empty()) throw Error("config: folds.run lists no folds");
  std::set<std::size_t> seen;
  for (std::size_t f : folds.run) {
    if (f >= data::kNumFolds) throw Error("config: fold " + std::to_string(f) + " outside 0..4");
    if (!seen.insert(f).second) throw Error("config: fold " + std::to_string(f) + " listed twice");
  }
  if (folds.parallel == 0) throw Error("config: folds.parallel must be at least 1");
  features.validate();
}

std::string RunConfig::fingerprint() const {
  ordered_json j = to_json();
  j.erase("paths");  // where files live does not change the computation
  return models::fnv1a_hex(j.dump());
}

}  // namespace serdarts::cli
