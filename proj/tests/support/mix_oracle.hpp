// SPDX-License-Identifier: Apache-2.0
//
// Re-measures the SNR of every event in a toy clip from its pre-sum
// components. The components are regenerated by replaying the toy recipe
// (background, then three events) from the clip's derived seed.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "wsed/synth.hpp"

namespace wsed::oracle {

struct MixCheck {
  std::vector<double> event_snr_db;  // one per placement
  double max_mix_residual = 0.0;     // |mix - g * (bg + sum gain * event)|
};

inline double mean_square(const std::vector<double>& v, std::size_t first, std::size_t last) {
  long double acc = 0.0L;
  for (std::size_t i = first; i < last; ++i) acc += static_cast<long double>(v[i]) * v[i];
  return static_cast<double>(acc / static_cast<long double>(last - first));
}

inline MixCheck check_toy_mix(const ToyCorpusConfig& config, std::size_t index) {
  const MixedClip clip = toy_clip(config, index);

  const auto cats = toy_categories(config.num_categories, config.sample_rate);
  Rng rng(derive_seed(config.seed, index));
  const std::size_t len = static_cast<std::size_t>(std::llround(config.clip_seconds * config.sample_rate));
  const AudioBuffer bg = synthesize_background(len, config.sample_rate, rng);
  std::vector<EventClip> events;
  for (std::size_t k = 0; k < kEventsPerClip; ++k) {
    const std::size_t c = rng.index(config.num_categories);
    const double seconds = rng.uniform(0.1, 0.3) * config.clip_seconds;
    events.push_back(synthesize_event(cats[c], c, seconds, config.sample_rate, rng));
  }

  MixCheck out;
  const double bg_power = mean_square(bg.samples, 0, len);
  std::vector<double> sum(bg.samples.begin(), bg.samples.begin() + static_cast<std::ptrdiff_t>(len));
  for (std::size_t k = 0; k < clip.placements.size(); ++k) {
    const Placement& p = clip.placements[k];
    const auto& ev = events[k].audio.samples;
    std::vector<double> scaled(ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i) scaled[i] = p.gain * ev[i];
    out.event_snr_db.push_back(10.0 * std::log10(mean_square(scaled, 0, scaled.size()) / bg_power));
    for (std::size_t i = 0; i < scaled.size(); ++i) sum[p.onset + i] += scaled[i];
  }
  for (std::size_t i = 0; i < len; ++i) {
    out.max_mix_residual =
        std::max(out.max_mix_residual, std::abs(clip.audio.samples[i] - clip.normalization_gain * sum[i]));
  }
  return out;
}

}  // namespace wsed::oracle
