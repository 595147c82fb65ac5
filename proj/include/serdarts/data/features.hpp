// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <vector>

#include "serdarts/data/audio.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts::data {

struct MfccConfig {
  double sample_rate = 16000.0;
  std::size_t n_fft = 2048;
  std::size_t hop = 250;
  std::size_t n_mels = 128;
  std::size_t frames = 512;
  double log_floor = 1e-10;
  double target_seconds = 8.0;

  void validate() const;
  std::size_t bins() const { return n_fft / 2 + 1; }
};

/// Slaney mel scale (linear below 1 kHz, logarithmic above).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// [n_mels x bins] triangular filters over 0 Hz .. sample_rate/2, each scaled
/// to unit area (2 / bandwidth). Throws if some filter covers no FFT bin.
std::vector<double> mel_filterbank(const MfccConfig& cfg);

/// Orthonormal DCT-II of each length-n column of a row-major [n x cols] block,
/// and its inverse (DCT-III).
std::vector<double> dct_ortho(std::span<const double> x, std::size_t n, std::size_t cols);
std::vector<double> idct_ortho(std::span<const double> x, std::size_t n, std::size_t cols);

/// Hann-windowed STFT (centered, zero-padded by n_fft/2 on each side), power
/// spectrum, mel filterbank, 10 log10(max(., floor)), orthonormal DCT-II
/// over the mel axis; time axis cut or zero-padded to `frames`.
class MfccExtractor {
 public:
  explicit MfccExtractor(const MfccConfig& cfg = {});
  ~MfccExtractor();
  MfccExtractor(const MfccExtractor&) = delete;
  MfccExtractor& operator=(const MfccExtractor&) = delete;

  const MfccConfig& config() const { return cfg_; }
  /// Number of centered STFT frames for a signal of `samples` samples.
  std::size_t stft_frames(std::size_t samples) const { return 1 + samples / cfg_.hop; }

  /// [bins x stft_frames] power spectrum.
  std::vector<double> power_spectrogram(std::span<const double> waveform) const;
  /// [n_mels x stft_frames] log mel energies (dB), before the DCT.
  std::vector<double> log_mel(std::span<const double> waveform) const;
  /// [n_mels x frames] cepstral coefficients. The utterance rate must equal
  /// the configured rate.
  Tensor<float> mfcc(const Utterance& u) const;

 private:
  struct Fft;
  MfccConfig cfg_;
  std::vector<double> window_;
  std::vector<double> filters_;
  std::vector<std::size_t> filter_lo_, filter_hi_;
  std::vector<double> dct_;
  std::unique_ptr<Fft> fft_;
};

/// Max pool with kernel = stride = (1, 4) on a [H x W] matrix; W must be a
/// multiple of 4 and the input exactly `expect_h` x `expect_w` when given.
Tensor<float> downsample_time(const Tensor<float>& m, std::size_t expect_h = 128, std::size_t expect_w = 512);

}  // namespace serdarts::data
