// SPDX-License-Identifier: Apache-2.0
#include "serdarts/data/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "serdarts/data/audio.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts::data {

void SynthConfig::validate() const {
  if (classes == 0 || classes > kNumClasses) throw Error("synth: classes must lie in [1, 4]");
  if (n < classes) {
    throw Error("synth: n = " + std::to_string(n) + " cannot be balanced over " + std::to_string(classes) + " classes");
  }
  if (speakers == 0) throw Error("synth: speakers must be positive");
  if (size == 0) throw Error("synth: size must be positive");
  if (!std::isfinite(snr_db)) throw Error("synth: snr_db must be finite");
}

std::string synth_speaker_name(std::size_t speaker) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spk%02zu", speaker);
  return buf;
}

std::vector<float> synth_pattern(const SynthConfig& cfg, int label, std::size_t speaker) {
  const double phase = 0.5 * static_cast<double>(speaker) / static_cast<double>(cfg.speakers);
  const double fr = 2.0 * (label + 1), fc = 3.0 * (label + 1), s = static_cast<double>(cfg.size);
  std::vector<float> out(cfg.size * cfg.size);
  for (std::size_t r = 0; r < cfg.size; ++r)
    for (std::size_t c = 0; c < cfg.size; ++c)
      out[r * cfg.size + c] = static_cast<float>(
          std::sin(2.0 * std::numbers::pi * fr * static_cast<double>(r) / s + phase) +
          std::sin(2.0 * std::numbers::pi * fc * static_cast<double>(c) / s + phase));
  return out;
}

std::vector<SpectrogramRecord> synth_dataset(const SynthConfig& cfg, RngState& rng) {
  cfg.validate();
  std::vector<SpectrogramRecord> out;
  out.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    SpectrogramRecord r;
    r.height = r.width = cfg.size;
    r.label = static_cast<int>(i % cfg.classes);
    const std::size_t speaker = (i / cfg.classes) % cfg.speakers;
    r.speaker = synth_speaker_name(speaker);
    r.features = synth_pattern(cfg, r.label, speaker);
    if (cfg.noise) {
      double power = 0.0;
      for (float v : r.features) power += static_cast<double>(v) * v;
      power /= static_cast<double>(r.features.size());
      const double sigma = std::sqrt(power / std::pow(10.0, cfg.snr_db / 10.0));
      for (float& v : r.features) v = static_cast<float>(v + rng.normal(0.0, sigma));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace serdarts::data
