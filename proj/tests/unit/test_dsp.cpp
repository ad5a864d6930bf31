// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "wsed/dsp.hpp"
#include "wsed/error.hpp"

using namespace wsed;

namespace {

AudioBuffer sine(double hz, double seconds, int sr = 32000, double amp = 0.5) {
  AudioBuffer a;
  a.sample_rate = sr;
  a.samples.resize(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < a.samples.size(); ++i) a.samples[i] = amp * std::sin(2 * std::numbers::pi * hz * i / sr);
  return a;
}

AudioBuffer noise(std::size_t n, std::uint64_t seed) {
  AudioBuffer a;
  a.samples = oracle::uniform_values(n, seed, -0.5, 0.5);
  return a;
}

}  // namespace

TEST_CASE("frame count follows 1 + floor((len - window) / hop)") {
  CHECK(frame_count(320000, 2048, 1024) == 311);
  CHECK(frame_count(2048, 2048, 1024) == 1);
  CHECK(frame_count(2047, 2048, 1024) == 0);
  CHECK(frame_count(3072, 2048, 1024) == 2);
}

TEST_CASE("symmetric hann window") {
  const auto w = hann_window(2048);
  CHECK(w.front() == 0.0);
  CHECK(w.back() == doctest::Approx(0.0).epsilon(1e-15));
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i] == doctest::Approx(std::pow(std::sin(std::numbers::pi * i / 2047.0), 2)).epsilon(1e-12));
  }
}

TEST_CASE("zero audio gives zero power") {
  AudioBuffer a;
  a.samples.assign(5000, 0.0);
  const auto p = stft_power(a);
  CHECK(p.rows == frame_count(5000, 2048, 1024));
  CHECK(p.cols == 1025);
  for (double v : p.values) CHECK(v == 0.0);
}

TEST_CASE("short audio is rejected") {
  AudioBuffer a;
  a.samples.assign(2047, 0.1);
  CHECK_THROWS_AS(stft_power(a), DataError);
}

TEST_CASE("stft power matches a direct DFT of the windowed frame") {
  const auto a = noise(2048 + 3 * 1024, 5);
  const auto p = stft_power(a);
  const auto w = hann_window(2048);
  for (std::size_t t : {0u, 3u}) {
    std::vector<double> frame(2048);
    for (std::size_t i = 0; i < 2048; ++i) frame[i] = a.samples[t * 1024 + i] * w[i];
    const auto ref = oracle::dft_power(frame);
    double peak = *std::max_element(ref.begin(), ref.end());
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(std::abs(p.at(t, k) - ref[k]) < 1e-9 * peak);
  }
}

TEST_CASE("440 Hz sine peaks at bin 28") {
  const auto p = stft_power(sine(440.0, 1.0));
  for (std::size_t t = 0; t < p.rows; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.cols; ++k)
      if (p.at(t, k) > p.at(t, best)) best = k;
    CHECK(best == 28);
  }
}

TEST_CASE("parseval: windowed frame energy equals scaled spectrum energy") {
  const auto a = noise(4096, 9);
  const auto p = stft_power(a);
  const auto w = hann_window(2048);
  for (std::size_t t = 0; t < p.rows; ++t) {
    double time_energy = 0.0;
    for (std::size_t i = 0; i < 2048; ++i) time_energy += std::pow(a.samples[t * 1024 + i] * w[i], 2);
    double spec = p.at(t, 0) + p.at(t, 1024);
    for (std::size_t k = 1; k < 1024; ++k) spec += 2.0 * p.at(t, k);
    CHECK(spec / 2048.0 == doctest::Approx(time_energy).epsilon(1e-9));
  }
}

TEST_CASE("mel scale formula") {
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));
}

TEST_CASE("filterbank rows, centers and coverage") {
  const auto fb = mel_filterbank(64, 2048, 32000, 0.0, 16000.0);
  REQUIRE(fb.rows == 64);
  REQUIRE(fb.cols == 1025);
  const double bin_hz = 32000.0 / 2048.0;
  const double top = 2595.0 * std::log10(1.0 + 16000.0 / 700.0);
  const auto centers = mel_center_frequencies(64, 0.0, 16000.0);
  for (std::size_t m = 0; m < 64; ++m) {
    double row_max = 0.0;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < fb.cols; ++k) {
      CHECK(fb.at(m, k) >= 0.0);
      if (fb.at(m, k) > row_max) row_max = fb.at(m, k), arg = k;
    }
    CHECK(row_max > 0.0);
    const double expected = 700.0 * (std::pow(10.0, top * (m + 1) / 65.0 / 2595.0) - 1.0);
    CHECK(centers[m] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(arg * bin_hz - expected) <= bin_hz);
  }
  // Summed response is positive on every interior bin.
  for (std::size_t k = 1; k < 1024; ++k) {
    double s = 0.0;
    for (std::size_t m = 0; m < 64; ++m) s += fb.at(m, k);
    CHECK(s > 0.0);
  }
}

TEST_CASE("filterbank rejects empty filters and bad ranges") {
  CHECK_THROWS(mel_filterbank(512, 256, 32000, 0.0, 16000.0));
  CHECK_THROWS(mel_filterbank(64, 2048, 32000, 100.0, 100.0));
  CHECK_THROWS(mel_filterbank(64, 2048, 32000, 0.0, 17000.0));
}

TEST_CASE("ten seconds at 32 kHz give 311 frames of 64 bins") {
  const auto s = log_mel(sine(1000.0, 10.0));
  CHECK(s.frames() == 311);
  CHECK(s.bins() == 64);
  CHECK(s.frame_rate == doctest::Approx(32000.0 / 1024.0));
  for (double v : s.values.values) CHECK(std::isfinite(v));
}

TEST_CASE("zero audio hits the log floor") {
  AudioBuffer a;
  a.samples.assign(32000, 0.0);
  for (double v : log_mel(a).values.values) CHECK(v == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("doubling amplitude shifts log-mel by ln 4") {
  auto a = noise(40000, 3);
  auto b = a;
  for (auto& s : b.samples) s *= 2.0;
  const auto la = log_mel(a), lb = log_mel(b);
  for (std::size_t i = 0; i < la.values.values.size(); ++i) {
    if (la.values.values[i] > std::log(1e-10) + 1.0) {
      CHECK(lb.values.values[i] - la.values.values[i] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    }
  }
}

TEST_CASE("shifting audio by one hop shifts frames by one") {
  auto a = noise(2048 + 6 * 1024, 4);
  AudioBuffer b;
  b.samples.assign(a.samples.begin() + 1024, a.samples.end());
  const auto la = log_mel(a), lb = log_mel(b);
  REQUIRE(la.frames() == lb.frames() + 1);
  for (std::size_t t = 0; t < lb.frames(); ++t)
    for (std::size_t m = 0; m < 64; ++m) CHECK(lb.values.at(t, m) == la.values.at(t + 1, m));
}

TEST_CASE("extractor rejects a sample-rate mismatch") {
  LogMelExtractor ex(FeatureConfig{});
  auto a = sine(440.0, 1.0, 16000);
  CHECK_THROWS_AS(ex(a), DataError);
  FeatureConfig other;
  other.sample_rate = 16000;
  CHECK(other.fingerprint() != FeatureConfig{}.fingerprint());
}
