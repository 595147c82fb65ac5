// SPDX-License-Identifier: Apache-2.0
#include "serdarts/data/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

namespace serdarts::data {

void MfccConfig::validate() const {
  if (!(sample_rate > 0.0)) throw Error("mfcc: sample_rate must be positive");
  if (n_fft < 2 || n_fft % 2 != 0) throw Error("mfcc: n_fft must be an even number >= 2");
  if (hop == 0) throw Error("mfcc: hop must be positive");
  if (n_mels == 0) throw Error("mfcc: n_mels must be positive");
  if (frames == 0) throw Error("mfcc: frames must be positive");
  if (!(log_floor > 0.0)) throw Error("mfcc: log_floor must be positive");
  if (!(target_seconds > 0.0)) throw Error("mfcc: target_seconds must be positive");
}

namespace {

constexpr double kMinLogHz = 1000.0;
constexpr double kLinearSlope = 200.0 / 3.0;  // Hz per mel below 1 kHz
constexpr double kMinLogMel = kMinLogHz / kLinearSlope;
const double kLogStep = std::log(6.4) / 27.0;

// FFTW's planner is not thread-safe; execution with new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<double> dct_matrix(std::size_t n) {
  std::vector<double> m(n * n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n)), sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      m[k * n + i] = (k == 0 ? s0 : sk) * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) *
                                                    static_cast<double>(k) / static_cast<double>(n));
  return m;
}

// out[k, c] = sum_i m[k, i] x[i, c] (or m[i, k] when transposed).
std::vector<double> apply_square(const std::vector<double>& m, std::span<const double> x, std::size_t n,
                                 std::size_t cols, bool transpose) {
  if (x.size() != n * cols) throw ShapeError("dct: expected " + std::to_string(n * cols) + " values");
  std::vector<double> out(n * cols, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      const double w = transpose ? m[i * n + k] : m[k * n + i];
      const double* src = x.data() + i * cols;
      double* dst = out.data() + k * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
    }
  return out;
}

}  // namespace

double hz_to_mel(double hz) {
  if (hz < kMinLogHz) return hz / kLinearSlope;
  return kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMinLogMel) return mel * kLinearSlope;
  return kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
}

std::vector<double> mel_filterbank(const MfccConfig& cfg) {
  cfg.validate();
  const std::size_t bins = cfg.bins(), n = cfg.n_mels;
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> edges(n + 2);
  for (std::size_t m = 0; m < n + 2; ++m) edges[m] = mel_to_hz(top * static_cast<double>(m) / static_cast<double>(n + 1));
  std::vector<double> out(n * bins, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    bool any = false;
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
      out[m * bins + b] = w * norm;
      any = any || w > 0.0;
    }
    if (!any) {
      throw Error("mfcc: sample rate " + std::to_string(cfg.sample_rate) + " Hz with n_fft " + std::to_string(cfg.n_fft) + " is too coarse for " +
                  std::to_string(n) + " mel bands (mel band " +
                  std::to_string(m) + " covers no FFT bin)");
    }
  }
  return out;
}

std::vector<double> dct_ortho(std::span<const double> x, std::size_t n, std::size_t cols) {
  if (n == 0) throw Error("dct: length must be positive");
  return apply_square(dct_matrix(n), x, n, cols, false);
}

std::vector<double> idct_ortho(std::span<const double> x, std::size_t n, std::size_t cols) {
  if (n == 0) throw Error("dct: length must be positive");
  return apply_square(dct_matrix(n), x, n, cols, true);
}

struct MfccExtractor::Fft {
  explicit Fft(std::size_t n) : n(n) {
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    {
      std::lock_guard lock(planner_mutex());
      plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    }
    fftw_free(in);
    fftw_free(out);
    if (plan == nullptr) throw Error("mfcc: FFT planning failed");
  }
  ~Fft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  std::size_t n;
  fftw_plan plan = nullptr;
};

MfccExtractor::MfccExtractor(const MfccConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  filters_ = mel_filterbank(cfg_);
  const std::size_t bins = cfg_.bins();
  for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
    const double* row = filters_.data() + m * bins;
    std::size_t lo = 0, hi = bins;
    while (row[lo] == 0.0) ++lo;
    while (row[hi - 1] == 0.0) --hi;
    filter_lo_.push_back(lo);
    filter_hi_.push_back(hi);
  }
  // periodic Hann
  window_.resize(cfg_.n_fft);
  for (std::size_t i = 0; i < cfg_.n_fft; ++i)
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(cfg_.n_fft));
  dct_ = dct_matrix(cfg_.n_mels);
  fft_ = std::make_unique<Fft>(cfg_.n_fft);
}

MfccExtractor::~MfccExtractor() = default;

std::vector<double> MfccExtractor::power_spectrogram(std::span<const double> waveform) const {
  if (waveform.empty()) throw Error("mfcc: empty waveform");
  const std::size_t n = cfg_.n_fft, bins = cfg_.bins(), pad = n / 2;
  const std::size_t frames = stft_frames(waveform.size());
  std::vector<double> out(bins * frames);
  double* in = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    // frame t covers padded samples [t*hop, t*hop + n); the signal starts at `pad`
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * cfg_.hop) - static_cast<std::ptrdiff_t>(pad);
    for (std::size_t i = 0; i < n; ++i) {
      const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(i);
      const double v = s >= 0 && static_cast<std::size_t>(s) < waveform.size() ? waveform[static_cast<std::size_t>(s)] : 0.0;
      in[i] = v * window_[i];
    }
    fftw_execute_dft_r2c(fft_->plan, in, spec);
    for (std::size_t b = 0; b < bins; ++b) out[b * frames + t] = spec[b][0] * spec[b][0] + spec[b][1] * spec[b][1];
  }
  fftw_free(in);
  fftw_free(spec);
  return out;
}

std::vector<double> MfccExtractor::log_mel(std::span<const double> waveform) const {
  const std::vector<double> power = power_spectrogram(waveform);
  const std::size_t bins = cfg_.bins(), frames = stft_frames(waveform.size());
  std::vector<double> out(cfg_.n_mels * frames, 0.0);
  for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
    double* dst = out.data() + m * frames;
    for (std::size_t b = filter_lo_[m]; b < filter_hi_[m]; ++b) {
      const double w = filters_[m * bins + b];
      const double* src = power.data() + b * frames;
      for (std::size_t t = 0; t < frames; ++t) dst[t] += w * src[t];
    }
    for (std::size_t t = 0; t < frames; ++t) dst[t] = 10.0 * std::log10(std::max(dst[t], cfg_.log_floor));
  }
  return out;
}

Tensor<float> MfccExtractor::mfcc(const Utterance& u) const {
  u.validate();
  if (u.sample_rate != cfg_.sample_rate) {
    throw Error("mfcc: utterance sample rate " + std::to_string(u.sample_rate) + " Hz differs from the configured " +
                std::to_string(cfg_.sample_rate) + " Hz (resampling is not supported)");
  }
  const std::size_t frames = stft_frames(u.waveform.size());
  const std::vector<double> cep = apply_square(dct_, log_mel(u.waveform), cfg_.n_mels, frames, false);
  Tensor<float> out({cfg_.n_mels, cfg_.frames});
  auto dst = out.data();
  const std::size_t keep = std::min(frames, cfg_.frames);
  for (std::size_t m = 0; m < cfg_.n_mels; ++m)
    for (std::size_t t = 0; t < keep; ++t) dst[m * cfg_.frames + t] = static_cast<float>(cep[m * frames + t]);
  return out;
}

Tensor<float> downsample_time(const Tensor<float>& m, std::size_t expect_h, std::size_t expect_w) {
  if (!m.defined() || m.rank() != 2) throw ShapeError("downsample: expected a 2-D matrix");
  const std::size_t h = m.dim(0), w = m.dim(1);
  if ((expect_h != 0 && h != expect_h) || (expect_w != 0 && w != expect_w) || w % 4 != 0 || w == 0) {
    throw ShapeError("downsample: expected " + std::to_string(expect_h) + "x" + std::to_string(expect_w) +
                     " input with width a multiple of 4, got " + shape_str(m.shape()));
  }
  Tensor<float> out({h, w / 4});
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w / 4; ++c) {
      const float* g = src.data() + r * w + 4 * c;
      dst[r * (w / 4) + c] = std::max({g[0], g[1], g[2], g[3]});
    }
  return out;
}

}  // namespace serdarts::data
