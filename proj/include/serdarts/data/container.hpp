// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace serdarts::data {

struct SpectrogramRecord {
  std::vector<float> features;  // row-major height x width
  std::size_t height = 128;
  std::size_t width = 128;
  int label = 0;
  std::string speaker;

  /// Shape, finiteness and label range.
  void validate() const;
  bool operator==(const SpectrogramRecord&) const = default;
};

/// SERC1 layout: "SERC1\n", one JSON header line
/// {"count","height","width","classes","records":[{"label","speaker"}]},
/// then count * height * width float32 little-endian values in record order.
/// All records must share one shape.
void save_container(const std::vector<SpectrogramRecord>& records, const std::filesystem::path& path);
std::string encode_container(const std::vector<SpectrogramRecord>& records);
std::vector<SpectrogramRecord> load_container(const std::filesystem::path& path);
std::vector<SpectrogramRecord> decode_container(const std::string& bytes, const std::string& origin = "<memory>");

}  // namespace serdarts::data
