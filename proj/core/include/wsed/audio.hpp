// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

namespace wsed {

inline constexpr int kDefaultSampleRate = 32000;

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Throws DataError when empty or any sample is non-finite.
void validate(const AudioBuffer& audio);

/// Mean-square amplitude.
double mean_power(const std::vector<double>& samples);

/// Reads RIFF/WAVE: 16-bit PCM or 32-bit IEEE float, mono or multichannel
/// (channels are averaged to mono).
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM; samples are clipped to [-1, 1] and rounded.
void write_wav_pcm16(const std::filesystem::path& path, const AudioBuffer& audio);

/// Writes mono 32-bit float.
void write_wav_float32(const std::filesystem::path& path, const AudioBuffer& audio);

}  // namespace wsed
