// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "serdarts/models/models.hpp"

namespace serdarts::models {

/// Layout: "SERCK1\n", one JSON header line
/// {"model": spec, "fingerprint", "metadata", "tensors": [{"name","shape","role"}]},
/// then every tensor as float32 little-endian values in header order.
/// Parameters and persistent buffers are both stored.
void save_checkpoint(const ModelBundle& bundle, const nlohmann::ordered_json& metadata,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  ModelBundle bundle;
  nlohmann::json metadata;
};

/// Rebuilds the architecture from the stored spec and restores every tensor.
/// Throws on a fingerprint, name or shape mismatch or a truncated payload.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 of a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace serdarts::models
