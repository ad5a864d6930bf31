// SPDX-License-Identifier: Apache-2.0
#include "wsed/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

#include "wsed/error.hpp"

namespace wsed {

namespace {
// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

std::string FeatureConfig::fingerprint() const {
  std::ostringstream os;
  os << "hann;power;ln;floor=1e-10;mel=htk;sr=" << sample_rate << ";win=" << window << ";hop=" << hop
     << ";mels=" << n_mels << ";fmin=" << fmin << ";fmax=" << effective_fmax();
  return os.str();
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t frame_count(std::size_t samples, std::size_t window, std::size_t hop) {
  if (samples < window) return 0;
  return 1 + (samples - window) / hop;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return w;
}

std::vector<double> mel_center_frequencies(std::size_t n_mels, double fmin, double fmax) {
  const double lo = hz_to_mel(fmin);
  const double hi = hz_to_mel(fmax);
  std::vector<double> centers(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) {
    centers[m] = mel_to_hz(lo + (hi - lo) * static_cast<double>(m + 1) / static_cast<double>(n_mels + 1));
  }
  return centers;
}

Matrix mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate, double fmin,
                      double fmax) {
  if (n_mels == 0 || n_fft < 2) throw std::invalid_argument("mel_filterbank: empty configuration");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw std::invalid_argument("mel_filterbank: require 0 <= fmin < fmax <= sr/2");
  }
  const std::size_t n_bins = n_fft / 2 + 1;
  const double lo = hz_to_mel(fmin);
  const double hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  Matrix fb(n_mels, n_bins);
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb.at(m, k) = w;
      any = any || w > 0.0;
    }
    if (!any) {
      throw std::invalid_argument("mel_filterbank: filter " + std::to_string(m) +
                                  " covers no FFT bin; too many mel bands for n_fft=" +
                                  std::to_string(n_fft));
    }
  }
  return fb;
}

struct LogMelExtractor::Fft {
  explicit Fft(std::size_t n) : size(n) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~Fft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  std::size_t size;
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;
};

LogMelExtractor::LogMelExtractor(FeatureConfig config)
    : config_(config),
      filterbank_(mel_filterbank(config.n_mels, config.window, config.sample_rate, config.fmin,
                                 config.effective_fmax())),
      window_(hann_window(config.window)),
      fft_(std::make_unique<Fft>(config.window)) {
  if (config.hop == 0) throw std::invalid_argument("LogMelExtractor: hop must be positive");
}

LogMelExtractor::~LogMelExtractor() = default;

Matrix LogMelExtractor::power(const AudioBuffer& audio) {
  validate(audio);
  const std::size_t win = config_.window;
  const std::size_t frames = frame_count(audio.samples.size(), win, config_.hop);
  if (frames == 0) {
    throw DataError("audio of " + std::to_string(audio.samples.size()) +
                    " samples is shorter than one STFT window of " + std::to_string(win));
  }
  const std::size_t n_bins = win / 2 + 1;
  Matrix spec(frames, n_bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = audio.samples.data() + t * config_.hop;
    for (std::size_t i = 0; i < win; ++i) fft_->in[i] = src[i] * window_[i];
    fftw_execute(fft_->plan);
    for (std::size_t k = 0; k < n_bins; ++k) {
      spec.at(t, k) = fft_->out[k][0] * fft_->out[k][0] + fft_->out[k][1] * fft_->out[k][1];
    }
  }
  return spec;
}

LogMelSpectrogram LogMelExtractor::operator()(const AudioBuffer& audio) {
  if (audio.sample_rate != config_.sample_rate) {
    throw DataError("sample-rate mismatch: audio is " + std::to_string(audio.sample_rate) +
                    " Hz, features configured for " + std::to_string(config_.sample_rate) + " Hz");
  }
  const Matrix spec = power(audio);
  const std::size_t n_mels = config_.n_mels;
  LogMelSpectrogram out;
  out.values = Matrix(spec.rows, n_mels);
  for (std::size_t t = 0; t < spec.rows; ++t) {
    for (std::size_t m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < spec.cols; ++k) acc += filterbank_.at(m, k) * spec.at(t, k);
      out.values.at(t, m) = std::log(std::max(acc, kLogFloor));
    }
  }
  out.frame_rate = static_cast<double>(config_.sample_rate) / static_cast<double>(config_.hop);
  out.fingerprint = config_.fingerprint();
  return out;
}

Matrix stft_power(const AudioBuffer& audio, std::size_t window, std::size_t hop) {
  if (hop == 0 || window < 2) throw std::invalid_argument("stft_power: invalid window/hop");
  validate(audio);
  if (audio.samples.size() < window) {
    throw DataError("audio of " + std::to_string(audio.samples.size()) +
                    " samples is shorter than one STFT window of " + std::to_string(window));
  }
  FeatureConfig cfg;
  cfg.sample_rate = audio.sample_rate;
  cfg.window = window;
  cfg.hop = hop;
  // The filterbank is unused here; one band always fits.
  cfg.n_mels = 1;
  LogMelExtractor extractor(cfg);
  return extractor.power(audio);
}

LogMelSpectrogram log_mel(const AudioBuffer& audio, const FeatureConfig& config) {
  LogMelExtractor extractor(config);
  return extractor(audio);
}

}  // namespace wsed
