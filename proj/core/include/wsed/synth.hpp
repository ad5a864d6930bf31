// SPDX-License-Identifier: Apache-2.0
//
// Weak-label corpus construction: events are scaled to a target SNR against
// a background scene, placed at random onsets, summed, and peak-normalized.
// Only the clip-level label is exposed for training; placements are kept as
// hidden ground truth.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsed/audio.hpp"
#include "wsed/rng.hpp"

namespace wsed {

inline constexpr double kMinSnrDb = -40.0;
inline constexpr double kMaxSnrDb = 60.0;
inline constexpr double kPeakLimit = 0.99;
inline constexpr double kDefaultClipSeconds = 10.0;
inline constexpr std::size_t kEventsPerClip = 3;
inline constexpr std::size_t kMaxToyCategories = 8;

struct EventClip {
  AudioBuffer audio;
  std::size_t category = 0;

  double duration() const { return audio.duration(); }
};

struct Placement {
  std::size_t category = 0;
  std::size_t onset = 0;   ///< first sample
  std::size_t offset = 0;  ///< one past the last sample
  double gain = 1.0;       ///< applied to the event before summation
};

/// One bag: a mixed clip with its weak label.
struct MixedClip {
  AudioBuffer audio;
  std::vector<std::uint8_t> label;
  std::vector<Placement> placements;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  /// Factor applied to the summed mix so that its peak is <= 0.99.
  double normalization_gain = 1.0;
};

/// Mixes `events` into the first `clip_seconds` of `background`. Each event
/// is scaled so 10*log10(P_event / P_background) = snr_db, where P is the
/// mean-square amplitude over the event's own samples and over the whole
/// cropped background respectively.
MixedClip mix_at_snr(const AudioBuffer& background, const std::vector<EventClip>& events,
                     double snr_db, std::size_t num_categories, Rng& rng,
                     double clip_seconds = kDefaultClipSeconds);

enum class Split { train, val, test };

std::string split_name(Split split);
Split parse_split(const std::string& name);

/// Split for clip `index` of `n`: first 80% train, next 10% val, rest test.
Split split_for_index(std::size_t index, std::size_t n);

struct ManifestEntry {
  std::string path;  ///< relative to the corpus root; first component is the split
  std::vector<std::uint8_t> label;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  Split split = Split::train;
};

struct GroundTruthRow {
  std::string path;
  Placement placement;
  double normalization_gain = 1.0;
};

struct CorpusManifest {
  std::vector<std::string> categories;
  std::vector<ManifestEntry> entries;
  std::vector<GroundTruthRow> ground_truth;
  int sample_rate = kDefaultSampleRate;
  double clip_seconds = kDefaultClipSeconds;

  std::size_t num_categories() const { return categories.size(); }
  std::vector<const ManifestEntry*> split(Split s) const;
};

/// Writes manifest.csv, categories.csv, ground_truth.csv and corpus.txt.
void write_manifest(const std::filesystem::path& root, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& root);

/// "0101..." with one character per category.
std::string label_bits(const std::vector<std::uint8_t>& label);
std::vector<std::uint8_t> parse_label_bits(const std::string& bits);

// --- Synthetic toy corpus ---------------------------------------------------

enum class ToySignal { tone_complex, chirp, am_noise };

struct ToyCategory {
  std::string name;
  ToySignal signal = ToySignal::tone_complex;
  double low_hz = 0.0;
  double high_hz = 0.0;
};

/// Frequency-separated category designs; band edges scale with the Nyquist
/// frequency.
std::vector<ToyCategory> toy_categories(std::size_t count, int sample_rate);

struct ToyCorpusConfig {
  std::size_t n_clips = 200;
  std::size_t num_categories = 3;
  /// Clip i uses snr_db[i % size].
  std::vector<double> snr_db{20.0};
  std::uint64_t seed = 0;
  int sample_rate = kDefaultSampleRate;
  double clip_seconds = kDefaultClipSeconds;
};

/// Throws std::invalid_argument on an unusable configuration.
void validate(const ToyCorpusConfig& config);

EventClip synthesize_event(const ToyCategory& category, std::size_t category_id,
                           double seconds, int sample_rate, Rng& rng);
AudioBuffer synthesize_background(std::size_t samples, int sample_rate, Rng& rng);

/// Clip `index` of the toy corpus; depends only on (config, index).
MixedClip toy_clip(const ToyCorpusConfig& config, std::size_t index);

struct Corpus {
  CorpusManifest manifest;
  std::vector<MixedClip> clips;
};

/// Builds the whole toy corpus in memory.
Corpus make_toy_corpus(const ToyCorpusConfig& config);

/// Generates the toy corpus clip by clip into `root` (16-bit WAV + manifest).
CorpusManifest write_toy_corpus(const ToyCorpusConfig& config, const std::filesystem::path& root);

// --- External audio ---------------------------------------------------------

struct IngestConfig {
  std::filesystem::path events_dir;       ///< one subdirectory of WAVs per category
  std::filesystem::path backgrounds_dir;  ///< WAVs of at least clip_seconds
  std::vector<double> snr_db{20.0};
  std::size_t n_clips = 0;
  std::uint64_t seed = 0;
  int sample_rate = kDefaultSampleRate;
  double clip_seconds = kDefaultClipSeconds;
};

/// Mixes external event/background recordings into `root`. Categories are
/// the sorted subdirectory names of events_dir. Events longer than a clip are
/// truncated to the clip length; backgrounds are cropped at a random offset.
CorpusManifest ingest_external(const IngestConfig& config, const std::filesystem::path& root);

}  // namespace wsed
