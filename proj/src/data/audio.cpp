// SPDX-License-Identifier: Apache-2.0
#include "serdarts/data/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "serdarts/tensor.hpp"

namespace serdarts::data {

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"happiness", "sadness", "anger", "neutral"};
  return names;
}

int parse_label(const std::string& text) {
  const auto& names = class_names();
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == text) return static_cast<int>(k);
  if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const int v = std::stoi(text);
    if (v >= 0 && static_cast<std::size_t>(v) < kNumClasses) return v;
  }
  throw Error("unknown emotion label '" + text + "' (expected happiness, sadness, anger, neutral or 0-3)");
}

void Utterance::validate() const {
  if (!(sample_rate > 0.0)) throw Error("utterance sample rate must be positive");
  if (label < 0 || static_cast<std::size_t>(label) >= kNumClasses) {
    throw Error("utterance label " + std::to_string(label) + " outside [0, 4)");
  }
}

Utterance pad_or_truncate(const Utterance& u, double target_seconds) {
  u.validate();
  if (u.waveform.empty()) throw Error("pad_or_truncate: empty waveform");
  if (!(target_seconds > 0.0)) throw Error("pad_or_truncate: target duration must be positive");
  const auto target = static_cast<std::size_t>(std::llround(target_seconds * u.sample_rate));
  Utterance out = u;
  out.waveform.resize(target, 0.0);
  return out;
}

// ------------------------------------------------------------------- WAV

namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

void put32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff), char(v >> 24 & 0xff)};
  out.write(b.data(), 4);
}
void put16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> b{char(v & 0xff), char(v >> 8 & 0xff)};
  out.write(b.data(), 2);
}

}  // namespace

Utterance read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "WAV " + path.string() + ": ";
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    throw Error(where + "not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  unsigned rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    const std::size_t size = le32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw Error(where + "chunk '" + id + "' runs past the end of the file");
    if (id == "fmt ") {
      if (size < 16) throw Error(where + "fmt chunk too short");
      const std::uint16_t format = le16(&bytes[body]), channels = le16(&bytes[body + 2]);
      const std::uint16_t bits = le16(&bytes[body + 14]);
      rate = le32(&bytes[body + 4]);
      if (format != 1) throw Error(where + "only PCM (format 1) is supported, got format " + std::to_string(format));
      if (channels != 1) throw Error(where + "only mono is supported, got " + std::to_string(channels) + " channels");
      if (bits != 16) throw Error(where + "only 16-bit samples are supported, got " + std::to_string(bits));
      if (rate == 0) throw Error(where + "sample rate is zero");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(where + "data chunk precedes fmt chunk");
      if (size % 2 != 0) throw Error(where + "data chunk holds a partial sample");
      Utterance u;
      u.sample_rate = rate;
      u.waveform.resize(size / 2);
      for (std::size_t i = 0; i < u.waveform.size(); ++i) {
        const auto s = static_cast<std::int16_t>(le16(&bytes[body + 2 * i]));
        u.waveform[i] = static_cast<double>(s) / 32768.0;
      }
      return u;
    }
    pos = body + size + (size & 1);
  }
  throw Error(where + (have_fmt ? "no data chunk" : "no fmt chunk"));
}

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, unsigned sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write WAV file " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, sample_rate);
  put32(out, sample_rate * 2);
  put16(out, 2);
  put16(out, 16);
  out.write("data", 4);
  put32(out, data_bytes);
  for (double s : samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  if (!out) throw Error("failed writing WAV file " + path.string());
}

// ------------------------------------------------------------------- CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<LabelledPath> read_labels_csv(const std::filesystem::path& csv, const std::filesystem::path& base_dir) {
  std::ifstream in(csv);
  if (!in) throw Error("cannot open label file " + csv.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"path", "label", "speaker"}) {
    throw Error(csv.string() + ": header must be 'path,label,speaker'");
  }
  std::vector<LabelledPath> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3 || fields[0].empty() || fields[2].empty()) {
      throw Error(csv.string() + ":" + std::to_string(lineno) + ": expected 'path,label,speaker'");
    }
    std::filesystem::path p = fields[0];
    if (p.is_relative()) p = (base_dir.empty() ? csv.parent_path() : base_dir) / p;
    out.push_back({p, parse_label(fields[1]), fields[2]});
  }
  if (out.empty()) throw Error(csv.string() + ": no utterances listed");
  return out;
}

}  // namespace serdarts::data
