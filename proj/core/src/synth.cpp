// SPDX-License-Identifier: Apache-2.0
#include "wsed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "wsed/error.hpp"
#include "wsed/text.hpp"

namespace wsed {

namespace fs = std::filesystem;

namespace {

std::size_t clip_samples(double clip_seconds, int sample_rate) {
  return static_cast<std::size_t>(std::llround(clip_seconds * sample_rate));
}

void check_snr(double snr_db) {
  if (!(snr_db >= kMinSnrDb && snr_db <= kMaxSnrDb)) {
    throw std::invalid_argument("snr_db " + format_number(snr_db) + " outside [-40, 60] dB");
  }
}

}  // namespace

MixedClip mix_at_snr(const AudioBuffer& background, const std::vector<EventClip>& events,
                     double snr_db, std::size_t num_categories, Rng& rng, double clip_seconds) {
  check_snr(snr_db);
  validate(background);
  const std::size_t len = clip_samples(clip_seconds, background.sample_rate);
  if (background.samples.size() < len) {
    throw DataError("background of " + format_number(background.duration()) +
                    " s is shorter than the clip length of " + format_number(clip_seconds) + " s");
  }

  MixedClip clip;
  clip.snr_db = snr_db;
  clip.label.assign(num_categories, 0);
  clip.audio.sample_rate = background.sample_rate;
  clip.audio.samples.assign(background.samples.begin(),
                            background.samples.begin() + static_cast<std::ptrdiff_t>(len));
  const double bg_power = mean_power(clip.audio.samples);
  if (!(bg_power > 0.0)) throw DataError("background is silent");

  const double target_ratio = std::pow(10.0, snr_db / 10.0);
  for (const auto& ev : events) {
    validate(ev.audio);
    if (ev.audio.sample_rate != background.sample_rate) {
      throw DataError("event sample rate " + std::to_string(ev.audio.sample_rate) +
                      " Hz differs from background " + std::to_string(background.sample_rate) + " Hz");
    }
    if (ev.category >= num_categories) {
      throw std::invalid_argument("event category " + std::to_string(ev.category) +
                                  " outside [0, " + std::to_string(num_categories) + ")");
    }
    const std::size_t n = ev.audio.samples.size();
    if (n > len) throw DataError("event longer than the clip");
    const double ev_power = mean_power(ev.audio.samples);
    if (!(ev_power > 0.0)) throw DataError("event of category " + std::to_string(ev.category) + " is silent");

    Placement p;
    p.category = ev.category;
    p.gain = std::sqrt(target_ratio * bg_power / ev_power);
    p.onset = rng.index(len - n + 1);
    p.offset = p.onset + n;
    for (std::size_t i = 0; i < n; ++i) clip.audio.samples[p.onset + i] += p.gain * ev.audio.samples[i];
    clip.label[ev.category] = 1;
    clip.placements.push_back(p);
  }

  double peak = 0.0;
  for (double s : clip.audio.samples) peak = std::max(peak, std::abs(s));
  if (peak > kPeakLimit) {
    clip.normalization_gain = kPeakLimit / peak;
    for (double& s : clip.audio.samples) s *= clip.normalization_gain;
  }
  return clip;
}

std::string split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, val or test)");
}

Split split_for_index(std::size_t index, std::size_t n) {
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  if (index < n_train) return Split::train;
  if (index < n_train + n_val) return Split::val;
  return Split::test;
}

std::vector<const ManifestEntry*> CorpusManifest::split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

std::string label_bits(const std::vector<std::uint8_t>& label) {
  std::string bits;
  bits.reserve(label.size());
  for (auto b : label) bits.push_back(b ? '1' : '0');
  return bits;
}

std::vector<std::uint8_t> parse_label_bits(const std::string& bits) {
  std::vector<std::uint8_t> label;
  label.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') throw DataError("label bits must be 0/1, got '" + bits + "'");
    label.push_back(c == '1');
  }
  return label;
}

void write_manifest(const fs::path& root, const CorpusManifest& manifest) {
  fs::create_directories(root);
  std::ostringstream m;
  m << "path,snr_db,seed,label_bits\n";
  for (const auto& e : manifest.entries) {
    if (e.label.size() != manifest.num_categories()) {
      throw std::invalid_argument("manifest entry " + e.path + " has wrong label length");
    }
    m << e.path << ',' << format_number(e.snr_db) << ',' << e.seed << ',' << label_bits(e.label) << '\n';
  }
  write_text_file(root / "manifest.csv", m.str());

  std::ostringstream c;
  c << "id,name\n";
  for (std::size_t i = 0; i < manifest.categories.size(); ++i) {
    if (manifest.categories[i].find(',') != std::string::npos) {
      throw std::invalid_argument("category name contains a comma: " + manifest.categories[i]);
    }
    c << i << ',' << manifest.categories[i] << '\n';
  }
  write_text_file(root / "categories.csv", c.str());

  std::ostringstream gt;
  gt << "path,category,onset_s,offset_s,gain,norm_gain\n";
  const double sr = manifest.sample_rate;
  for (const auto& row : manifest.ground_truth) {
    gt << row.path << ',' << row.placement.category << ',' << format_number(row.placement.onset / sr)
       << ',' << format_number(row.placement.offset / sr) << ',' << format_number(row.placement.gain)
       << ',' << format_number(row.normalization_gain) << '\n';
  }
  write_text_file(root / "ground_truth.csv", gt.str());

  std::ostringstream info;
  info << "sample_rate=" << manifest.sample_rate << '\n'
       << "clip_seconds=" << format_number(manifest.clip_seconds) << '\n'
       << "categories=" << manifest.num_categories() << '\n'
       << "clips=" << manifest.entries.size() << '\n';
  write_text_file(root / "corpus.txt", info.str());
}

CorpusManifest read_manifest(const fs::path& root) {
  CorpusManifest manifest;
  for (const auto& row : read_csv(root / "categories.csv", {"id", "name"})) {
    if (parse_u64(row[0]) != manifest.categories.size()) {
      throw DataError("categories.csv: ids must be 0..C-1 in order");
    }
    manifest.categories.push_back(row[1]);
  }
  for (const auto& line : split(read_text_file(root / "corpus.txt"), '\n')) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "sample_rate") manifest.sample_rate = static_cast<int>(parse_u64(value));
    if (key == "clip_seconds") manifest.clip_seconds = parse_double(value);
  }
  for (const auto& row : read_csv(root / "manifest.csv", {"path", "snr_db", "seed", "label_bits"})) {
    ManifestEntry e;
    e.path = row[0];
    e.snr_db = parse_double(row[1]);
    e.seed = parse_u64(row[2]);
    e.label = parse_label_bits(row[3]);
    if (e.label.size() != manifest.num_categories()) {
      throw DataError("manifest.csv: label '" + row[3] + "' does not have " +
                      std::to_string(manifest.num_categories()) + " bits");
    }
    const auto slash = e.path.find('/');
    if (slash == std::string::npos) throw DataError("manifest path lacks a split directory: " + e.path);
    e.split = parse_split(e.path.substr(0, slash));
    manifest.entries.push_back(std::move(e));
  }
  const fs::path gt_path = root / "ground_truth.csv";
  if (fs::exists(gt_path)) {
    for (const auto& row :
         read_csv(gt_path, {"path", "category", "onset_s", "offset_s", "gain", "norm_gain"})) {
      GroundTruthRow g;
      g.path = row[0];
      g.placement.category = parse_u64(row[1]);
      g.placement.onset = static_cast<std::size_t>(std::llround(parse_double(row[2]) * manifest.sample_rate));
      g.placement.offset = static_cast<std::size_t>(std::llround(parse_double(row[3]) * manifest.sample_rate));
      g.placement.gain = parse_double(row[4]);
      g.normalization_gain = parse_double(row[5]);
      manifest.ground_truth.push_back(g);
    }
  }
  return manifest;
}

// --- toy corpus ---------------------------------------------------------------

std::vector<ToyCategory> toy_categories(std::size_t count, int sample_rate) {
  if (count == 0 || count > kMaxToyCategories) {
    throw std::invalid_argument("toy corpus supports 1..8 categories, got " + std::to_string(count));
  }
  // Band edges at 32 kHz; scaled with the Nyquist frequency.
  static constexpr double kBands[kMaxToyCategories][2] = {
      {300, 500},   {700, 1100},   {1500, 2200},  {2800, 3800},
      {4500, 5800}, {6800, 8500},  {9500, 11500}, {12500, 15000},
  };
  static constexpr ToySignal kSignals[] = {ToySignal::tone_complex, ToySignal::chirp,
                                           ToySignal::am_noise};
  static constexpr const char* kSignalNames[] = {"tone_complex", "chirp", "am_noise"};
  const double scale = sample_rate / 32000.0;
  std::vector<ToyCategory> out;
  for (std::size_t c = 0; c < count; ++c) {
    ToyCategory cat;
    cat.signal = kSignals[c % 3];
    cat.low_hz = kBands[c][0] * scale;
    cat.high_hz = kBands[c][1] * scale;
    cat.name = std::string(kSignalNames[c % 3]) + "_" + format_number(std::round(cat.low_hz)) + "-" +
               format_number(std::round(cat.high_hz)) + "Hz";
    out.push_back(std::move(cat));
  }
  return out;
}

void validate(const ToyCorpusConfig& config) {
  if (config.n_clips < 10) {
    throw std::invalid_argument("toy corpus needs at least 10 clips to form train/val/test splits");
  }
  if (config.num_categories == 0 || config.num_categories > kMaxToyCategories) {
    throw std::invalid_argument("toy corpus supports 1..8 categories");
  }
  if (config.snr_db.empty()) throw std::invalid_argument("toy corpus needs at least one SNR");
  for (double s : config.snr_db) check_snr(s);
  if (config.sample_rate < 8000) throw std::invalid_argument("toy corpus sample rate below 8 kHz");
  if (!(config.clip_seconds >= 1.0)) throw std::invalid_argument("toy clips must be at least 1 s");
}

EventClip synthesize_event(const ToyCategory& category, std::size_t category_id, double seconds,
                           int sample_rate, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  if (n < 2) throw std::invalid_argument("event too short");
  const double two_pi = 2.0 * std::numbers::pi;
  const double sr = sample_rate;
  const double lo = category.low_hz, hi = category.high_hz;
  EventClip ev;
  ev.category = category_id;
  ev.audio.sample_rate = sample_rate;
  ev.audio.samples.assign(n, 0.0);
  auto& s = ev.audio.samples;

  switch (category.signal) {
    case ToySignal::tone_complex: {
      for (double frac : {0.2, 0.5, 0.8}) {
        const double f = lo + (hi - lo) * frac;
        const double phase = rng.uniform(0.0, two_pi);
        for (std::size_t i = 0; i < n; ++i) s[i] += std::sin(two_pi * f * i / sr + phase);
      }
      break;
    }
    case ToySignal::chirp: {
      const double dur = n / sr;
      const double phase = rng.uniform(0.0, two_pi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = i / sr;
        s[i] = std::sin(two_pi * (lo * t + (hi - lo) * t * t / (2.0 * dur)) + phase);
      }
      break;
    }
    case ToySignal::am_noise: {
      for (int k = 0; k < 40; ++k) {
        const double f = rng.uniform(lo, hi);
        const double phase = rng.uniform(0.0, two_pi);
        for (std::size_t i = 0; i < n; ++i) s[i] += std::sin(two_pi * f * i / sr + phase);
      }
      const double rate = 6.0;
      for (std::size_t i = 0; i < n; ++i) s[i] *= 0.6 + 0.4 * std::sin(two_pi * rate * i / sr);
      break;
    }
  }

  // 20 ms raised-cosine fades.
  const std::size_t fade = std::min<std::size_t>(n / 2, static_cast<std::size_t>(0.02 * sr));
  for (std::size_t i = 0; i < fade; ++i) {
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * i / fade);
    s[i] *= w;
    s[n - 1 - i] *= w;
  }
  return ev;
}

AudioBuffer synthesize_background(std::size_t samples, int sample_rate, Rng& rng) {
  AudioBuffer bg;
  bg.sample_rate = sample_rate;
  bg.samples.resize(samples);
  // White floor plus a one-pole lowpassed rumble.
  double state = 0.0;
  for (auto& v : bg.samples) {
    const double w = rng.normal();
    state = 0.98 * state + 0.2 * w;
    v = 0.3 * rng.normal() + state;
  }
  const double rms = std::sqrt(mean_power(bg.samples));
  for (auto& v : bg.samples) v *= 0.1 / rms;
  return bg;
}

MixedClip toy_clip(const ToyCorpusConfig& config, std::size_t index) {
  const auto cats = toy_categories(config.num_categories, config.sample_rate);
  const std::uint64_t seed = derive_seed(config.seed, index);
  Rng rng(seed);
  const std::size_t len = clip_samples(config.clip_seconds, config.sample_rate);
  AudioBuffer bg = synthesize_background(len, config.sample_rate, rng);
  std::vector<EventClip> events;
  for (std::size_t k = 0; k < kEventsPerClip; ++k) {
    const std::size_t c = rng.index(config.num_categories);
    const double seconds = rng.uniform(0.1, 0.3) * config.clip_seconds;
    events.push_back(synthesize_event(cats[c], c, seconds, config.sample_rate, rng));
  }
  const double snr = config.snr_db[index % config.snr_db.size()];
  MixedClip clip = mix_at_snr(bg, events, snr, config.num_categories, rng, config.clip_seconds);
  clip.seed = seed;
  return clip;
}

namespace {

std::string clip_path(std::size_t index, std::size_t n) {
  char name[32];
  std::snprintf(name, sizeof(name), "clip_%05zu.wav", index);
  return split_name(split_for_index(index, n)) + "/" + name;
}

void append_clip(CorpusManifest& manifest, const MixedClip& clip, const std::string& path,
                 std::size_t index, std::size_t n) {
  ManifestEntry e;
  e.path = path;
  e.label = clip.label;
  e.snr_db = clip.snr_db;
  e.seed = clip.seed;
  e.split = split_for_index(index, n);
  manifest.entries.push_back(std::move(e));
  for (const auto& p : clip.placements) {
    manifest.ground_truth.push_back({path, p, clip.normalization_gain});
  }
}

void prepare_root(const fs::path& root) {
  for (const char* s : {"train", "val", "test"}) fs::create_directories(root / s);
}

}  // namespace

Corpus make_toy_corpus(const ToyCorpusConfig& config) {
  validate(config);
  Corpus corpus;
  corpus.manifest.sample_rate = config.sample_rate;
  corpus.manifest.clip_seconds = config.clip_seconds;
  for (const auto& c : toy_categories(config.num_categories, config.sample_rate)) {
    corpus.manifest.categories.push_back(c.name);
  }
  for (std::size_t i = 0; i < config.n_clips; ++i) {
    MixedClip clip = toy_clip(config, i);
    append_clip(corpus.manifest, clip, clip_path(i, config.n_clips), i, config.n_clips);
    corpus.clips.push_back(std::move(clip));
  }
  return corpus;
}

CorpusManifest write_toy_corpus(const ToyCorpusConfig& config, const fs::path& root) {
  validate(config);
  prepare_root(root);
  CorpusManifest manifest;
  manifest.sample_rate = config.sample_rate;
  manifest.clip_seconds = config.clip_seconds;
  for (const auto& c : toy_categories(config.num_categories, config.sample_rate)) {
    manifest.categories.push_back(c.name);
  }
  for (std::size_t i = 0; i < config.n_clips; ++i) {
    const MixedClip clip = toy_clip(config, i);
    const std::string path = clip_path(i, config.n_clips);
    write_wav_pcm16(root / path, clip.audio);
    append_clip(manifest, clip, path, i, config.n_clips);
  }
  write_manifest(root, manifest);
  return manifest;
}

namespace {

std::vector<fs::path> sorted_wavs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".wav") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

AudioBuffer load_checked(const fs::path& path, int sample_rate) {
  AudioBuffer a = read_wav(path);
  if (a.sample_rate != sample_rate) {
    throw DataError(path.string() + ": sample rate " + std::to_string(a.sample_rate) +
                    " Hz does not match configured " + std::to_string(sample_rate) + " Hz");
  }
  return a;
}

}  // namespace

CorpusManifest ingest_external(const IngestConfig& config, const fs::path& root) {
  if (config.n_clips == 0) throw std::invalid_argument("ingest: n_clips must be positive");
  if (config.snr_db.empty()) throw std::invalid_argument("ingest: need at least one SNR");
  for (double s : config.snr_db) check_snr(s);
  if (!fs::is_directory(config.events_dir)) {
    throw DataError("events directory not readable: " + config.events_dir.string());
  }
  if (!fs::is_directory(config.backgrounds_dir)) {
    throw DataError("backgrounds directory not readable: " + config.backgrounds_dir.string());
  }

  std::vector<std::string> categories;
  std::vector<std::vector<fs::path>> event_files;
  {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(config.events_dir)) {
      if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      auto files = sorted_wavs(d);
      if (files.empty()) throw DataError("event category directory has no WAV files: " + d.string());
      categories.push_back(d.filename().string());
      event_files.push_back(std::move(files));
    }
  }
  if (categories.empty()) throw DataError("no category subdirectories in " + config.events_dir.string());
  const auto backgrounds = sorted_wavs(config.backgrounds_dir);
  if (backgrounds.empty()) throw DataError("no background WAV files in " + config.backgrounds_dir.string());

  prepare_root(root);
  CorpusManifest manifest;
  manifest.categories = categories;
  manifest.sample_rate = config.sample_rate;
  manifest.clip_seconds = config.clip_seconds;
  const std::size_t len = clip_samples(config.clip_seconds, config.sample_rate);
  const std::size_t n_cat = categories.size();

  for (std::size_t i = 0; i < config.n_clips; ++i) {
    const std::uint64_t seed = derive_seed(config.seed, i);
    Rng rng(seed);
    const auto& bg_path = backgrounds[rng.index(backgrounds.size())];
    AudioBuffer bg = load_checked(bg_path, config.sample_rate);
    if (bg.samples.size() < len) {
      throw DataError(bg_path.string() + ": background shorter than " +
                      format_number(config.clip_seconds) + " s");
    }
    const std::size_t start = rng.index(bg.samples.size() - len + 1);
    bg.samples = std::vector<double>(bg.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                     bg.samples.begin() + static_cast<std::ptrdiff_t>(start + len));

    std::vector<EventClip> events;
    for (std::size_t k = 0; k < kEventsPerClip; ++k) {
      const std::size_t c = rng.index(n_cat);
      const auto& files = event_files[c];
      EventClip ev;
      ev.category = c;
      ev.audio = load_checked(files[rng.index(files.size())], config.sample_rate);
      if (ev.audio.samples.size() > len) ev.audio.samples.resize(len);
      events.push_back(std::move(ev));
    }
    const double snr = config.snr_db[i % config.snr_db.size()];
    MixedClip clip = mix_at_snr(bg, events, snr, n_cat, rng, config.clip_seconds);
    clip.seed = seed;
    const std::string path = clip_path(i, config.n_clips);
    write_wav_pcm16(root / path, clip.audio);
    append_clip(manifest, clip, path, i, config.n_clips);
  }
  write_manifest(root, manifest);
  return manifest;
}

}  // namespace wsed
