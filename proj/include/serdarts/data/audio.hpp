// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace serdarts::data {

inline constexpr std::size_t kNumClasses = 4;
/// Class names in label order.
const std::vector<std::string>& class_names();
/// Index of a class name, or of a decimal label string; throws otherwise.
int parse_label(const std::string& text);

struct Utterance {
  std::vector<double> waveform;
  double sample_rate = 16000.0;
  int label = 0;
  std::string speaker;

  void validate() const;
};

/// Exactly `target_seconds * sample_rate` samples: zero-padded or cut at the end.
Utterance pad_or_truncate(const Utterance& u, double target_seconds = 8.0);

/// 16-bit PCM mono RIFF/WAVE, samples scaled to [-1, 1).
Utterance read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, unsigned sample_rate);

struct LabelledPath {
  std::filesystem::path path;
  int label;
  std::string speaker;
};

/// CSV with header "path,label,speaker"; labels by name or index. Relative
/// paths resolve against `base_dir`, or the CSV's directory when empty.
std::vector<LabelledPath> read_labels_csv(const std::filesystem::path& csv,
                                          const std::filesystem::path& base_dir = {});

}  // namespace serdarts::data
