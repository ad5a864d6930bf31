// SPDX-License-Identifier: Apache-2.0
//
// Log-mel feature extraction: Hann-windowed power STFT, HTK-style triangular
// mel filterbank, natural log with a 1e-10 floor.
#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "wsed/audio.hpp"

namespace wsed {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline constexpr double kLogFloor = 1e-10;

struct FeatureConfig {
  int sample_rate = kDefaultSampleRate;
  std::size_t window = 2048;
  std::size_t hop = 1024;
  std::size_t n_mels = 64;
  double fmin = 0.0;
  /// 0 selects the Nyquist frequency.
  double fmax = 0.0;

  double effective_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  /// Canonical description of every setting that affects feature values.
  std::string fingerprint() const;
};

/// 2595 * log10(1 + f / 700)
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Number of STFT frames for `samples` samples: 1 + floor((len - window) / hop).
std::size_t frame_count(std::size_t samples, std::size_t window, std::size_t hop);

/// Symmetric Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Power spectrum per frame: [T, window/2 + 1]. Frame t covers samples
/// [t*hop, t*hop + window).
Matrix stft_power(const AudioBuffer& audio, std::size_t window = 2048, std::size_t hop = 1024);

/// [n_mels, n_fft/2 + 1] triangular filters with centers uniformly spaced on
/// the mel scale between fmin and fmax. Throws if any filter covers no bin.
Matrix mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate, double fmin,
                      double fmax);

/// Center frequency (Hz) of each mel filter.
std::vector<double> mel_center_frequencies(std::size_t n_mels, double fmin, double fmax);

struct LogMelSpectrogram {
  Matrix values;  ///< [frames, n_mels]
  double frame_rate = 0.0;
  std::string fingerprint;

  std::size_t frames() const { return values.rows; }
  std::size_t bins() const { return values.cols; }
};

/// Reusable extractor holding the filterbank and FFT plan for one config.
/// Not thread-safe; use one instance per thread.
class LogMelExtractor {
 public:
  explicit LogMelExtractor(FeatureConfig config);
  ~LogMelExtractor();
  LogMelExtractor(const LogMelExtractor&) = delete;
  LogMelExtractor& operator=(const LogMelExtractor&) = delete;

  const FeatureConfig& config() const { return config_; }
  const Matrix& filterbank() const { return filterbank_; }

  Matrix power(const AudioBuffer& audio);
  /// Rejects audio whose sample rate differs from the configured one.
  LogMelSpectrogram operator()(const AudioBuffer& audio);

 private:
  struct Fft;
  FeatureConfig config_;
  Matrix filterbank_;
  std::vector<double> window_;
  std::unique_ptr<Fft> fft_;
};

LogMelSpectrogram log_mel(const AudioBuffer& audio, const FeatureConfig& config = {});

}  // namespace wsed
