// SPDX-License-Identifier: Apache-2.0
#include "serdarts/data/container.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "serdarts/data/audio.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts::data {

namespace {

constexpr std::string_view kMagic = "SERC1\n";

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

void put_float(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_float(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

void SpectrogramRecord::validate() const {
  if (height == 0 || width == 0) throw ShapeError("record: empty feature shape");
  if (features.size() != height * width) {
    throw ShapeError("record: " + std::to_string(features.size()) + " values for a " + std::to_string(height) + "x" +
                     std::to_string(width) + " matrix");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= kNumClasses) {
    throw Error("record: label " + std::to_string(label) + " outside [0, 4)");
  }
  for (float v : features)
    if (!std::isfinite(v)) throw Error("record: non-finite feature value");
}

std::string encode_container(const std::vector<SpectrogramRecord>& records) {
  if (records.empty()) throw Error("container: at least one record is required");
  const std::size_t h = records.front().height, w = records.front().width;
  nlohmann::ordered_json header;
  header["count"] = records.size();
  header["height"] = h;
  header["width"] = w;
  header["classes"] = class_names();
  header["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    r.validate();
    if (r.height != h || r.width != w) throw ShapeError("container: records differ in shape");
    nlohmann::ordered_json entry;
    entry["label"] = r.label;
    entry["speaker"] = r.speaker;
    header["records"].push_back(std::move(entry));
  }
  std::string out(kMagic);
  out += header.dump();
  out += '\n';
  out.reserve(out.size() + records.size() * h * w * 4);
  for (const auto& r : records)
    for (float v : r.features) put_float(out, v);
  return out;
}

void save_container(const std::vector<SpectrogramRecord>& records, const std::filesystem::path& path) {
  const std::string bytes = encode_container(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write container " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing container " + path.string());
}

std::vector<SpectrogramRecord> decode_container(const std::string& bytes, const std::string& origin) {
  const std::string where = "container " + origin + ": ";
  if (bytes.compare(0, kMagic.size(), kMagic) != 0) throw Error(where + "bad magic (expected SERC1)");
  const std::size_t eol = bytes.find('\n', kMagic.size());
  if (eol == std::string::npos) throw Error(where + "unterminated header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(kMagic.size()),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(eol));
  } catch (const nlohmann::json::exception& e) {
    throw Error(where + "malformed header: " + e.what());
  }
  std::size_t count = 0, h = 0, w = 0;
  try {
    count = header.at("count").get<std::size_t>();
    h = header.at("height").get<std::size_t>();
    w = header.at("width").get<std::size_t>();
    if (header.at("classes").get<std::vector<std::string>>() != class_names()) {
      throw Error(where + "class list differs from happiness, sadness, anger, neutral");
    }
    if (!header.at("records").is_array() || header.at("records").size() != count) {
      throw Error(where + "header lists " + std::to_string(header.at("records").size()) + " records but count is " +
                  std::to_string(count));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(where + "malformed header: " + e.what());
  }
  if (count == 0 || h == 0 || w == 0) throw Error(where + "empty container");
  const std::size_t per = h * w;
  const std::size_t payload = bytes.size() - eol - 1;
  if (payload != count * per * 4) {
    throw Error(where + "length mismatch: header promises " + std::to_string(count * per * 4) +
                " payload bytes, file holds " + std::to_string(payload));
  }
  std::vector<SpectrogramRecord> out(count);
  const char* p = bytes.data() + eol + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& meta = header["records"][i];
    auto& r = out[i];
    try {
      r.label = meta.at("label").get<int>();
      r.speaker = meta.at("speaker").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + "record " + std::to_string(i) + ": " + e.what());
    }
    r.height = h;
    r.width = w;
    r.features.resize(per);
    for (std::size_t k = 0; k < per; ++k, p += 4) r.features[k] = get_float(p);
    try {
      r.validate();
    } catch (const Error& e) {
      throw Error(where + "record " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SpectrogramRecord> load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open container " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_container(ss.str(), path.string());
}

}  // namespace serdarts::data
