// SPDX-License-Identifier: Apache-2.0
//
// Run configuration shared by every subcommand. The document is YAML with
// five sections; each key can also be set on the command line as
// --<section>.<key>.
//
//   dsp:   sample_rate window hop n_mels fmin fmax
//   data:  corpus clips categories snr seed clip_seconds events_dir backgrounds_dir
//   model: profile pooling gwrp_decay
//   train: alpha lr batch epochs seed conv_precision record_wall_time
//   eval:  split threshold batch alphas
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsed/dsp.hpp"
#include "wsed/model.hpp"
#include "wsed/synth.hpp"
#include "wsed/train.hpp"

namespace wsed::cli {

/// Bad flags, unknown configuration keys or unparsable values (exit code 1).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  FeatureConfig dsp;

  struct Data {
    std::string corpus;
    std::size_t clips = 200;
    std::size_t categories = 3;
    std::vector<double> snr{20.0};
    std::uint64_t seed = 0;
    double clip_seconds = kDefaultClipSeconds;
    std::string events_dir;
    std::string backgrounds_dir;
  } data;

  struct Model {
    std::string profile = "desk";
    PoolingKind pooling = PoolingKind::two_step_attention;
    double gwrp_decay = 0.9;
  } model;

  TrainConfig train;

  struct Eval {
    Split split = Split::test;
    double threshold = kDefaultThreshold;
    std::size_t batch = 8;
    std::vector<double> alphas = kAblationAlphas;
  } eval;

  /// Model layout for `num_classes` categories from the model section.
  ModelConfig model_config(std::size_t num_classes) const;
  ToyCorpusConfig toy_corpus() const;

  /// Throws UsageError for out-of-range values.
  void validate() const;
};

/// Every key as "section.key", in document order.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value; lists are comma separated.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

/// Applies a YAML document and returns the keys it set; unknown sections or
/// keys are rejected.
std::vector<std::string> apply_yaml(RunConfig& config, const std::string& text);
std::vector<std::string> apply_yaml_file(RunConfig& config, const std::filesystem::path& path);

/// The effective configuration as YAML, every key present.
std::string to_yaml(const RunConfig& config);

/// Writes config.yaml into `dir`.
void write_config_echo(const std::filesystem::path& dir, const RunConfig& config);

}  // namespace wsed::cli
