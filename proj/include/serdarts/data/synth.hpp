// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "serdarts/data/container.hpp"
#include "serdarts/rng.hpp"

namespace serdarts::data {

struct SynthConfig {
  std::size_t n = 64;
  std::size_t classes = 4;
  std::size_t speakers = 8;
  std::size_t size = 128;  // height = width
  double snr_db = 10.0;
  bool noise = true;

  void validate() const;
};

/// Record i has label i % classes and speaker (i / classes) % speakers, so
/// every speaker sees every class. Class k is
///   sin(2 pi 2(k+1) r / size + phi) + sin(2 pi 3(k+1) c / size + phi)
/// with a fixed per-speaker phase phi, plus white Gaussian noise at the
/// configured signal-to-noise ratio.
std::vector<SpectrogramRecord> synth_dataset(const SynthConfig& cfg, RngState& rng);

/// Noiseless pattern for one label and speaker.
std::vector<float> synth_pattern(const SynthConfig& cfg, int label, std::size_t speaker);

/// "spk00", "spk01", ...
std::string synth_speaker_name(std::size_t speaker);

}  // namespace serdarts::data
