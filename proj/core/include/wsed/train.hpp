// SPDX-License-Identifier: Apache-2.0
//
// Joint optimization of the tagging loss and the weighted auxiliary
// reconstruction loss, L = BCE(P, y) + alpha * MSE(recon, input), plus
// feature preparation, evaluation and the alpha ablation harness.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wsed/adam.hpp"
#include "wsed/checkpoint.hpp"
#include "wsed/dsp.hpp"
#include "wsed/metrics.hpp"
#include "wsed/model.hpp"
#include "wsed/ops.hpp"
#include "wsed/rng.hpp"
#include "wsed/synth.hpp"

namespace wsed {

struct TrainConfig {
  double alpha = 0.001;
  double lr = 1e-3;
  std::size_t batch = 8;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  double threshold = kDefaultThreshold;
  /// When false the EpochReport CSV carries 0 in the seconds column so that
  /// repeated runs are byte-identical.
  bool record_wall_time = false;
  /// Precision of the convolution products during training steps;
  /// evaluation always runs in f64.
  ops::ConvPrecision conv_precision = ops::ConvPrecision::f32;

  /// Batch 24 as in the original experiments.
  static TrainConfig paper();
  void validate() const;
};

/// "f32" / "f64"
std::string conv_precision_name(ops::ConvPrecision precision);
ops::ConvPrecision parse_conv_precision(const std::string& name);

/// Auxiliary weights compared by the ablation harness by default.
inline const std::vector<double> kAblationAlphas{0.0, 0.001, 0.1};

// --- features -----------------------------------------------------------------

/// Per-mel-bin statistics of the training split.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Mean and (population) standard deviation per bin over every frame; the
/// deviation is floored at 1e-8.
Normalization compute_normalization(const std::vector<LogMelSpectrogram>& features);

/// Standardizes per bin and transposes to [F, T_pad]; padded frames hold the
/// per-bin training mean, i.e. 0 after standardization.
Matrix prepare_features(const LogMelSpectrogram& features, const Normalization& norm);

struct FeatureClip {
  std::string path;
  Matrix features;  ///< [F, T_pad], standardized
  std::vector<std::uint8_t> label;
  double snr_db = 0.0;
};

struct Dataset {
  std::vector<FeatureClip> clips;
  std::vector<std::string> categories;

  std::size_t size() const { return clips.size(); }
  bool empty() const { return clips.empty(); }
};

/// Throws DataError when the corpus cannot be read with `features` (sample
/// rate mismatch).
void check_corpus_compatible(const CorpusManifest& manifest, const FeatureConfig& features);

std::vector<LogMelSpectrogram> extract_split(const std::filesystem::path& root,
                                             const CorpusManifest& manifest, Split split,
                                             const FeatureConfig& features);

Dataset make_dataset(const CorpusManifest& manifest, Split split,
                     const std::vector<LogMelSpectrogram>& features, const Normalization& norm);

Dataset load_split(const std::filesystem::path& root, const CorpusManifest& manifest, Split split,
                   const FeatureConfig& features, const Normalization& norm);

struct CorpusData {
  CorpusManifest manifest;
  FeatureConfig features;
  Normalization norm;
  Dataset train, val, test;
};

/// Reads a corpus directory, extracts features for every split and
/// standardizes them with train-split statistics.
CorpusData load_corpus(const std::filesystem::path& root, const FeatureConfig& features);

/// Stacks clips [first, first+count) of `order` into [B, 1, F, T] and labels [B, C].
struct Batch {
  Tensor inputs;
  Tensor labels;
};
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t first,
                 std::size_t count);

// --- loss -----------------------------------------------------------------------

struct JointLoss {
  Tensor total;
  Tensor classification;  ///< BCE(P, y)
  Tensor reconstruction;  ///< MSE(recon, input), before weighting
};

/// classification + alpha * reconstruction. Pooling parameters only see the
/// classification term and decoder parameters only the reconstruction term.
JointLoss joint_loss(Graph& g, const Tensor& probs, const Tensor& labels, const Tensor& recon,
                     const Tensor& target, double alpha);

// --- training -------------------------------------------------------------------

struct ValidationSnapshot {
  Metric micro_p;
  Metric macro_p;
  Metric auc;
  Metric recon_mse;
};

struct EpochReport {
  std::size_t epoch = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double seconds = 0.0;
  ValidationSnapshot val;
};

/// `epoch,l1,l2,total,seconds,val_micro_p,val_macro_p,val_auc`
std::string epoch_csv_header();
std::string epoch_csv_row(const EpochReport& r, bool with_wall_time);
std::string epoch_csv(const std::vector<EpochReport>& reports, bool with_wall_time);

struct Predictions {
  EvalBatch batch;
  std::vector<double> snr_db;
  Metric recon_mse;
};

/// Eval-mode forward over `data` in order.
Predictions predict(SedModel& model, const Dataset& data, std::size_t batch_size,
                    bool with_decoder = true);

/// 64-bit FNV-1a of the parameter values, as 16 hex digits.
std::string parameter_hash(const SedModel& model);

class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train, FeatureConfig features, Normalization norm,
          std::vector<std::string> categories);

  /// Restores model, optimizer, epoch counter and shuffle RNG.
  static Trainer from_checkpoint(const Checkpoint& ckpt);

  /// One pass over `train`, then validation on `val` (skipped when empty).
  EpochReport run_epoch(const Dataset& train, const Dataset& val);

  Checkpoint checkpoint() const;

  std::size_t epoch() const { return epoch_; }
  SedModel& model() { return model_; }
  const SedModel& model() const { return model_; }
  const TrainConfig& config() const { return train_; }
  TrainConfig& config() { return train_; }
  const FeatureConfig& features() const { return features_; }
  const Normalization& normalization() const { return norm_; }
  const std::vector<std::string>& categories() const { return categories_; }

 private:
  ModelConfig model_config_;
  TrainConfig train_;
  FeatureConfig features_;
  Normalization norm_;
  std::vector<std::string> categories_;
  SedModel model_;
  AdamState adam_;
  Rng rng_;
  std::size_t epoch_ = 0;
};

using EpochCallback = std::function<void(const EpochReport&, const Trainer&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochReport> reports;
  std::string init_hash;
};

/// Runs epochs until trainer.epoch() reaches trainer.config().epochs.
TrainResult run_training(Trainer& trainer, const Dataset& train, const Dataset& val,
                         const EpochCallback& on_epoch = {});

TrainResult train(const CorpusData& corpus, const ModelConfig& model, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// --- checkpoint <-> configuration --------------------------------------------------

ModelConfig model_config_from(const Checkpoint& ckpt);
TrainConfig train_config_from(const Checkpoint& ckpt);
FeatureConfig feature_config_from(const Checkpoint& ckpt);
std::vector<std::string> categories_from(const Checkpoint& ckpt);
/// Model with the checkpoint's parameters and batch-norm statistics.
SedModel model_from_checkpoint(const Checkpoint& ckpt);

// --- evaluation and ablation ---------------------------------------------------------

struct SnrReport {
  double snr_db = 0.0;
  MetricReport report;
};

/// One report per distinct SNR, highest SNR first.
std::vector<SnrReport> evaluate_by_snr(const Predictions& predictions, double threshold);

struct AblationRow {
  double alpha = 0.0;
  std::string init_hash;
  std::vector<SnrReport> test;
  TrainResult result;
};

/// One training run per alpha from the same seed, evaluated on the test split.
std::vector<AblationRow> ablate(const CorpusData& corpus, const ModelConfig& model,
                                const TrainConfig& base, const std::vector<double>& alphas,
                                const EpochCallback& on_epoch = {});

/// `alpha,init_hash,micro_p_<snr>dB,macro_p_<snr>dB,auc_<snr>dB,...` with one
/// row per alpha and one column triple per SNR.
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace wsed
