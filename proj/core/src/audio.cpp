// SPDX-License-Identifier: Apache-2.0
#include "wsed/audio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "wsed/error.hpp"

namespace wsed {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

void validate(const AudioBuffer& audio) {
  if (audio.samples.empty()) throw DataError("audio buffer is empty");
  if (audio.sample_rate <= 0) throw DataError("audio sample rate must be positive");
  for (double s : audio.samples) {
    if (!std::isfinite(s)) throw DataError("audio buffer contains non-finite samples");
  }
}

double mean_power(const std::vector<double>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

namespace {

template <typename T>
T read_le(const std::vector<char>& bytes, std::size_t offset) {
  if (offset + sizeof(T) > bytes.size()) throw DataError("truncated WAV header");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

template <typename T>
void put_le(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio, std::uint16_t format,
               std::uint16_t bits) {
  const std::uint32_t bytes_per_sample = bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * bytes_per_sample);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_le<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, format);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate) * bytes_per_sample);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(bytes_per_sample));
  put_le<std::uint16_t>(out, bits);
  out += "data";
  put_le<std::uint32_t>(out, data_bytes);
  for (double s : audio.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    if (format == 1) {
      put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32767.0)));
    } else {
      put_le<float>(out, static_cast<float>(c));
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open WAV file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(path.string() + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_offset = 0, data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.data() + pos, 4);
    const auto size = read_le<std::uint32_t>(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = read_le<std::uint16_t>(bytes, body);
      channels = read_le<std::uint16_t>(bytes, body + 2);
      rate = read_le<std::uint32_t>(bytes, body + 4);
      bits = read_le<std::uint16_t>(bytes, body + 14);
      if (format == 0xFFFE && size >= 40) format = read_le<std::uint16_t>(bytes, body + 24);
    } else if (id == "data") {
      data_offset = body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw DataError(path.string() + ": missing fmt chunk");
  if (data_offset == 0) throw DataError(path.string() + ": missing data chunk");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    throw DataError(path.string() + ": unsupported WAV encoding (format " + std::to_string(format) +
                    ", " + std::to_string(bits) + " bits); expected 16-bit PCM or 32-bit float");
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;

  AudioBuffer audio;
  audio.sample_rate = static_cast<int>(rate);
  audio.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::size_t off = data_offset + i * frame_bytes + ch * (bits / 8);
      acc += pcm16 ? read_le<std::int16_t>(bytes, off) / 32768.0
                   : static_cast<double>(read_le<float>(bytes, off));
    }
    audio.samples[i] = acc / channels;
  }
  return audio;
}

void write_wav_pcm16(const std::filesystem::path& path, const AudioBuffer& audio) {
  write_wav(path, audio, 1, 16);
}

void write_wav_float32(const std::filesystem::path& path, const AudioBuffer& audio) {
  write_wav(path, audio, 3, 32);
}

}  // namespace wsed
