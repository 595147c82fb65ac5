// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "serdarts/cell/topology.hpp"
#include "serdarts/data/features.hpp"
#include "serdarts/data/folds.hpp"
#include "serdarts/models/models.hpp"
#include "serdarts/optim/optimizer.hpp"

namespace serdarts::cli {

struct SearchSettings {
  std::size_t epochs = 300;
  std::size_t batch_size = 16;
  double grad_clip = 5.0;
  double alpha_init_scale = 1e-3;
  optim::SgdConfig weights;  // total_epochs follows `epochs`
  optim::AlphaOptConfig alpha;
};

struct TrainSettings {
  std::size_t epochs = 300;
  std::size_t batch_size = 16;
  double grad_clip = 5.0;
  optim::SgdConfig weights;
};

struct FoldSettings {
  double search_fraction = 0.7;
  std::vector<std::size_t> run{0, 1, 2, 3, 4};
  std::size_t parallel = 1;  // folds trained concurrently
};

/// Every tunable of a run. Parsed from JSON over a full set of defaults;
/// unknown keys and wrongly typed values are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  cell::NetworkConfig network;
  SearchSettings search;
  TrainSettings train;
  models::HeadSpec head;
  models::BaselineSpec baseline;
  std::string model = "darts";
  FoldSettings folds;
  std::size_t eval_batch_size = 16;
  data::MfccConfig features;
  std::string data_path;
  std::string genotype_path;
  std::string out_dir;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  std::string fingerprint() const;
};

RunConfig default_config();
/// Overlays `overrides` on the defaults.
RunConfig parse_config(const nlohmann::json& overrides);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace serdarts::cli
