// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "mix_oracle.hpp"
#include "oracles.hpp"
#include "scratch_dir.hpp"
#include "wsed/dsp.hpp"
#include "wsed/error.hpp"
#include "wsed/synth.hpp"
#include "wsed/text.hpp"

using namespace wsed;
namespace fs = std::filesystem;

namespace {

AudioBuffer tone(double hz, std::size_t n, double amp = 0.3) {
  AudioBuffer a;
  a.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.samples[i] = amp * std::sin(2 * 3.141592653589793 * hz * i / 32000.0);
  return a;
}

ToyCorpusConfig short_config(std::size_t clips, double snr = 20.0, std::uint64_t seed = 3) {
  ToyCorpusConfig c;
  c.n_clips = clips;
  c.snr_db = {snr};
  c.seed = seed;
  c.clip_seconds = 2.0;
  return c;
}

}  // namespace

TEST_CASE("mix_at_snr scales each event to the target SNR") {
  Rng rng(1);
  AudioBuffer bg = synthesize_background(64000, 32000, rng);
  std::vector<EventClip> events{{tone(500, 8000), 0}, {tone(3000, 12000, 0.01), 2}};
  for (double snr : {-10.0, 0.0, 10.0, 20.0}) {
    Rng r(5);
    const MixedClip clip = mix_at_snr(bg, events, snr, 3, r, 2.0);
    REQUIRE(clip.placements.size() == 2);
    const double bgp = oracle::mean_square(bg.samples, 0, 64000);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& p = clip.placements[k];
      CHECK(p.offset - p.onset == events[k].audio.samples.size());
      CHECK(p.offset <= 64000);
      const double evp = p.gain * p.gain * oracle::mean_square(events[k].audio.samples, 0, p.offset - p.onset);
      CHECK(10 * std::log10(evp / bgp) == doctest::Approx(snr).epsilon(1e-9));
    }
    CHECK(clip.label == std::vector<std::uint8_t>{1, 0, 1});
    double peak = 0.0;
    for (double s : clip.audio.samples) peak = std::max(peak, std::abs(s));
    CHECK(peak <= kPeakLimit + 1e-15);
  }
}

TEST_CASE("toy mixes re-measure to the target SNR from their components") {
  for (double snr : {0.0, 10.0, 20.0}) {
    const auto cfg = short_config(10, snr);
    for (std::size_t i = 0; i < 10; ++i) {
      const auto check = oracle::check_toy_mix(cfg, i);
      CHECK(check.event_snr_db.size() == kEventsPerClip);
      CHECK(check.max_mix_residual < 1e-12);
      for (double s : check.event_snr_db) CHECK(std::abs(s - snr) < 0.1);
    }
  }
}

TEST_CASE("empty event list returns the normalized background") {
  Rng rng(2);
  AudioBuffer bg = synthesize_background(32000, 32000, rng);
  for (auto& s : bg.samples) s *= 20.0;
  Rng r(0);
  const MixedClip clip = mix_at_snr(bg, {}, 10.0, 3, r, 1.0);
  CHECK(clip.label == std::vector<std::uint8_t>{0, 0, 0});
  CHECK(clip.normalization_gain < 1.0);
  for (std::size_t i = 0; i < 32000; ++i) CHECK(clip.audio.samples[i] == bg.samples[i] * clip.normalization_gain);
}

TEST_CASE("mix_at_snr rejects bad inputs") {
  Rng rng(3);
  AudioBuffer bg = synthesize_background(32000, 32000, rng);
  AudioBuffer silent;
  silent.samples.assign(100, 0.0);
  CHECK_THROWS_AS(mix_at_snr(bg, {{silent, 0}}, 10.0, 3, rng, 1.0), DataError);
  CHECK_THROWS_AS(mix_at_snr(silent, {}, 10.0, 3, rng, 1.0), DataError);
  CHECK_THROWS(mix_at_snr(bg, {}, 61.0, 3, rng, 1.0));
  CHECK_THROWS(mix_at_snr(bg, {}, -41.0, 3, rng, 1.0));
  CHECK_THROWS_AS(mix_at_snr(bg, {}, 10.0, 3, rng, 2.0), DataError);
}

TEST_CASE("toy clips are deterministic per seed and differ across seeds") {
  const auto cfg = short_config(10);
  const MixedClip a = toy_clip(cfg, 4), b = toy_clip(cfg, 4);
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(a.label == b.label);
  auto other = cfg;
  other.seed = 99;
  const MixedClip c = toy_clip(other, 4);
  CHECK(c.audio.samples.size() == a.audio.samples.size());
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.audio.samples.size(); ++i) same += a.audio.samples[i] == c.audio.samples[i];
  CHECK(same < a.audio.samples.size() / 100);
}

TEST_CASE("200 clips split 160/20/20 with labels matching placements") {
  ToyCorpusConfig cfg = short_config(200);
  cfg.clip_seconds = 1.0;
  const Corpus corpus = make_toy_corpus(cfg);
  CHECK(corpus.manifest.split(Split::train).size() == 160);
  CHECK(corpus.manifest.split(Split::val).size() == 20);
  CHECK(corpus.manifest.split(Split::test).size() == 20);
  for (const auto& clip : corpus.clips) {
    std::vector<std::uint8_t> expect(3, 0);
    for (const auto& p : clip.placements) expect[p.category] = 1;
    CHECK(clip.label == expect);
    const auto bits = std::count(clip.label.begin(), clip.label.end(), 1);
    CHECK(bits >= 1);
    CHECK(bits <= 3);
  }
  for (const auto* e : corpus.manifest.split(Split::val)) CHECK(e->path.rfind("val/", 0) == 0);
}

TEST_CASE("too few clips or categories are rejected") {
  CHECK_THROWS(validate(short_config(9)));
  auto cfg = short_config(20);
  cfg.num_categories = 9;
  CHECK_THROWS(validate(cfg));
}

TEST_CASE("each category's energy is concentrated in its band") {
  // Band energy of the mix over isolated event spans, compared against the
  // other categories' bands.
  const auto cfg = short_config(40);
  const auto cats = toy_categories(3, 32000);
  const double bin_hz = 32000.0 / 2048.0;
  auto band_energy = [&](const Matrix& p, const ToyCategory& c) {
    double e = 0.0;
    for (std::size_t t = 0; t < p.rows; ++t)
      for (std::size_t k = 0; k < p.cols; ++k) {
        const double f = k * bin_hz;
        if (f >= c.low_hz && f <= c.high_hz) e += p.at(t, k);
      }
    return e;
  };
  std::size_t measured = 0;
  for (std::size_t i = 0; i < cfg.n_clips; ++i) {
    const MixedClip clip = toy_clip(cfg, i);
    for (const auto& p : clip.placements) {
      bool isolated = true;
      for (const auto& q : clip.placements)
        if (q.category != p.category && q.onset < p.offset && p.onset < q.offset) isolated = false;
      if (!isolated || p.offset - p.onset < 4096) continue;
      AudioBuffer seg;
      seg.samples.assign(clip.audio.samples.begin() + p.onset, clip.audio.samples.begin() + p.offset);
      const Matrix power = stft_power(seg);
      const double own = band_energy(power, cats[p.category]);
      for (std::size_t c = 0; c < 3; ++c)
        if (c != p.category) CHECK(own > 2.0 * band_energy(power, cats[c]));
      ++measured;
    }
  }
  CHECK(measured > 30);
}

TEST_CASE("written corpus round-trips through the manifest") {
  test::ScratchDir dir("synth_roundtrip");
  const auto cfg = short_config(10);
  const CorpusManifest written = write_toy_corpus(cfg, dir.path() / "c");
  const CorpusManifest read = read_manifest(dir.path() / "c");
  CHECK(read.categories == written.categories);
  REQUIRE(read.entries.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(read.entries[i].path == written.entries[i].path);
    CHECK(read.entries[i].label == written.entries[i].label);
    CHECK(read.entries[i].split == split_for_index(i, 10));
    CHECK(fs::exists(dir.path() / "c" / read.entries[i].path));
  }
  const auto header = split(read_text_file(dir.path() / "c" / "manifest.csv").substr(0, 40), '\n')[0];
  CHECK(header == "path,snr_db,seed,label_bits");
  const AudioBuffer wav = read_wav(dir.path() / "c" / read.entries[0].path);
  CHECK(wav.samples.size() == 64000);
}

TEST_CASE("label bits round trip") {
  CHECK(label_bits({1, 0, 1}) == "101");
  CHECK(parse_label_bits("0110") == std::vector<std::uint8_t>{0, 1, 1, 0});
  CHECK_THROWS(parse_label_bits("012"));
}

TEST_CASE("external ingest builds categories from subdirectories") {
  test::ScratchDir dir("ingest");
  for (const char* name : {"bark", "bell", "siren"}) {
    fs::create_directories(dir.path() / "events" / name);
    write_wav_pcm16(dir.path() / "events" / name / "a.wav", tone(name[1] == 'a' ? 600 : 2500, 6000));
  }
  fs::create_directories(dir.path() / "bg");
  Rng rng(4);
  write_wav_pcm16(dir.path() / "bg" / "room.wav", synthesize_background(40000, 32000, rng));

  IngestConfig cfg;
  cfg.events_dir = dir.path() / "events";
  cfg.backgrounds_dir = dir.path() / "bg";
  cfg.n_clips = 1;
  cfg.clip_seconds = 1.0;
  const auto m = ingest_external(cfg, dir.path() / "out1");
  CHECK(m.categories == std::vector<std::string>{"bark", "bell", "siren"});
  REQUIRE(m.entries.size() == 1);
  const auto bits = std::count(m.entries[0].label.begin(), m.entries[0].label.end(), 1);
  CHECK(bits >= 1);
  CHECK(bits <= 3);
  ingest_external(cfg, dir.path() / "out2");
  CHECK(read_text_file(dir.path() / "out1" / "manifest.csv") == read_text_file(dir.path() / "out2" / "manifest.csv"));

  AudioBuffer slow = synthesize_background(40000, 16000, rng);
  slow.sample_rate = 16000;
  write_wav_pcm16(dir.path() / "bg" / "room.wav", slow);
  CHECK_THROWS_AS(ingest_external(cfg, dir.path() / "out3"), DataError);
}
