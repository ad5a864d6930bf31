// SPDX-License-Identifier: Apache-2.0
#include "wsed/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "wsed/audio.hpp"
#include "wsed/error.hpp"
#include "wsed/ops.hpp"
#include "wsed/text.hpp"

namespace wsed {

namespace {

constexpr double kStdFloor = 1e-8;
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

// Disables gradient tracking on the model parameters for the guard's lifetime.
class NoGrad {
 public:
  explicit NoGrad(SedModel& model) : params_(model.parameters()) {
    for (auto& p : params_) p.tensor.set_requires_grad(false);
  }
  ~NoGrad() {
    for (auto& p : params_) p.tensor.set_requires_grad(true);
  }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  std::vector<NamedTensor>& params_;
};

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string channels_str(const std::array<std::size_t, 4>& ch) {
  return std::to_string(ch[0]) + "," + std::to_string(ch[1]) + "," + std::to_string(ch[2]) + "," +
         std::to_string(ch[3]);
}

// Activations of one training step are tens of megabytes each. Keeping them
// on the heap instead of fresh mmap pages avoids a page-fault storm per step.
void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.batch = 24;
  return c;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("train: alpha must be a finite value >= 0");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: learning rate must be > 0");
  if (batch == 0) throw std::invalid_argument("train: batch size must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("train: threshold must lie in [0, 1]");
  }
}

std::string conv_precision_name(ops::ConvPrecision precision) {
  return precision == ops::ConvPrecision::f32 ? "f32" : "f64";
}

ops::ConvPrecision parse_conv_precision(const std::string& name) {
  if (name == "f32") return ops::ConvPrecision::f32;
  if (name == "f64") return ops::ConvPrecision::f64;
  throw std::invalid_argument("unknown conv precision '" + name + "' (expected f32 or f64)");
}

// --- features -------------------------------------------------------------------

Normalization compute_normalization(const std::vector<LogMelSpectrogram>& features) {
  if (features.empty()) throw DataError("normalization: no training clips");
  const std::size_t bins = features.front().bins();
  std::vector<double> sum(bins, 0.0), sq(bins, 0.0);
  std::size_t frames = 0;
  for (const auto& f : features) {
    if (f.bins() != bins) throw DataError("normalization: clips disagree on the number of mel bins");
    for (std::size_t t = 0; t < f.frames(); ++t) {
      for (std::size_t b = 0; b < bins; ++b) sum[b] += f.values.at(t, b);
    }
    frames += f.frames();
  }
  if (frames == 0) throw DataError("normalization: training clips hold no frames");
  Normalization n;
  n.mean.resize(bins);
  n.std.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) n.mean[b] = sum[b] / static_cast<double>(frames);
  for (const auto& f : features) {
    for (std::size_t t = 0; t < f.frames(); ++t) {
      for (std::size_t b = 0; b < bins; ++b) {
        const double d = f.values.at(t, b) - n.mean[b];
        sq[b] += d * d;
      }
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    n.std[b] = std::max(kStdFloor, std::sqrt(sq[b] / static_cast<double>(frames)));
  }
  return n;
}

Matrix prepare_features(const LogMelSpectrogram& features, const Normalization& norm) {
  const std::size_t bins = features.bins();
  if (norm.mean.size() != bins || norm.std.size() != bins) {
    throw DataError("features have " + std::to_string(bins) + " mel bins, normalization has " +
                    std::to_string(norm.mean.size()));
  }
  const std::size_t frames = features.frames();
  Matrix out(bins, padded_frames(frames), 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t b = 0; b < bins; ++b) {
      out.at(b, t) = (features.values.at(t, b) - norm.mean[b]) / norm.std[b];
    }
  }
  return out;
}

void check_corpus_compatible(const CorpusManifest& manifest, const FeatureConfig& features) {
  if (manifest.sample_rate != features.sample_rate) {
    throw DataError("sample-rate mismatch: corpus is " + std::to_string(manifest.sample_rate) +
                    " Hz, features expect " + std::to_string(features.sample_rate) + " Hz");
  }
}

std::vector<LogMelSpectrogram> extract_split(const std::filesystem::path& root,
                                             const CorpusManifest& manifest, Split split,
                                             const FeatureConfig& features) {
  check_corpus_compatible(manifest, features);
  LogMelExtractor extract(features);
  std::vector<LogMelSpectrogram> out;
  for (const auto* entry : manifest.split(split)) {
    const AudioBuffer audio = read_wav(root / entry->path);
    if (audio.sample_rate != features.sample_rate) {
      throw DataError("sample-rate mismatch: " + entry->path + " is " + std::to_string(audio.sample_rate) +
                      " Hz, features expect " + std::to_string(features.sample_rate) + " Hz");
    }
    out.push_back(extract(audio));
  }
  return out;
}

Dataset make_dataset(const CorpusManifest& manifest, Split split,
                     const std::vector<LogMelSpectrogram>& features, const Normalization& norm) {
  const auto entries = manifest.split(split);
  if (entries.size() != features.size()) {
    throw std::invalid_argument("dataset: " + std::to_string(features.size()) + " feature maps for " +
                                std::to_string(entries.size()) + " clips");
  }
  Dataset d;
  d.categories = manifest.categories;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    FeatureClip clip;
    clip.path = entries[i]->path;
    clip.features = prepare_features(features[i], norm);
    clip.label = entries[i]->label;
    clip.snr_db = entries[i]->snr_db;
    d.clips.push_back(std::move(clip));
  }
  return d;
}

Dataset load_split(const std::filesystem::path& root, const CorpusManifest& manifest, Split split,
                   const FeatureConfig& features, const Normalization& norm) {
  return make_dataset(manifest, split, extract_split(root, manifest, split, features), norm);
}

CorpusData load_corpus(const std::filesystem::path& root, const FeatureConfig& features) {
  CorpusData c;
  c.manifest = read_manifest(root);
  c.features = features;
  const auto train_features = extract_split(root, c.manifest, Split::train, features);
  c.norm = compute_normalization(train_features);
  c.train = make_dataset(c.manifest, Split::train, train_features, c.norm);
  c.val = load_split(root, c.manifest, Split::val, features, c.norm);
  c.test = load_split(root, c.manifest, Split::test, features, c.norm);
  return c;
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t first,
                 std::size_t count) {
  if (count == 0 || first + count > order.size()) throw std::out_of_range("make_batch: range out of bounds");
  const std::size_t bins = data.clips[order[first]].features.rows;
  const std::size_t classes = data.categories.size();
  std::size_t frames = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& clip = data.clips[order[first + i]];
    if (clip.features.rows != bins) throw DataError("batch: clips disagree on the number of mel bins");
    if (clip.label.size() != classes) {
      throw DataError("batch: " + clip.path + " has " + std::to_string(clip.label.size()) +
                      " labels, expected " + std::to_string(classes));
    }
    frames = std::max(frames, clip.features.cols);
  }
  std::vector<double> x(count * bins * frames, 0.0);
  std::vector<double> y(count * classes, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& clip = data.clips[order[first + i]];
    for (std::size_t f = 0; f < bins; ++f) {
      std::copy_n(clip.features.values.begin() + static_cast<std::ptrdiff_t>(f * clip.features.cols),
                  clip.features.cols, x.begin() + static_cast<std::ptrdiff_t>((i * bins + f) * frames));
    }
    for (std::size_t c = 0; c < classes; ++c) y[i * classes + c] = clip.label[c];
  }
  return {Tensor::from({count, 1, bins, frames}, std::move(x)), Tensor::from({count, classes}, std::move(y))};
}

// --- loss --------------------------------------------------------------------------

JointLoss joint_loss(Graph& g, const Tensor& probs, const Tensor& labels, const Tensor& recon,
                     const Tensor& target, double alpha) {
  JointLoss l;
  l.classification = ops::bce_loss(g, probs, labels);
  l.reconstruction = ops::mse_loss(g, recon, target);
  l.total = ops::add(g, l.classification, ops::scale(g, l.reconstruction, alpha));
  return l;
}

// --- epoch reports ------------------------------------------------------------------

std::string epoch_csv_header() { return "epoch,l1,l2,total,seconds,val_micro_p,val_macro_p,val_auc"; }

std::string epoch_csv_row(const EpochReport& r, bool with_wall_time) {
  return std::to_string(r.epoch) + "," + format_number(r.l1) + "," + format_number(r.l2) + "," +
         format_number(r.total) + "," + format_number(with_wall_time ? r.seconds : 0.0) + "," +
         format_metric(r.val.micro_p) + "," + format_metric(r.val.macro_p) + "," + format_metric(r.val.auc);
}

std::string epoch_csv(const std::vector<EpochReport>& reports, bool with_wall_time) {
  std::string out = epoch_csv_header() + "\n";
  for (const auto& r : reports) out += epoch_csv_row(r, with_wall_time) + "\n";
  return out;
}

// --- prediction ---------------------------------------------------------------------

Predictions predict(SedModel& model, const Dataset& data, std::size_t batch_size, bool with_decoder) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch size must be >= 1");
  Predictions p;
  p.batch.num_clips = data.size();
  p.batch.num_categories = data.categories.size();
  p.batch.categories = data.categories;
  if (data.empty()) return p;

  NoGrad guard(model);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double sq = 0.0;
  std::size_t cells = 0;
  for (std::size_t first = 0; first < order.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - first);
    const Batch b = make_batch(data, order, first, count);
    Graph g;
    const ForwardResult out = model.forward(g, b.inputs, Mode::eval, with_decoder);
    for (double v : out.probs.data()) {
      if (!std::isfinite(v)) throw NumericError("predict: non-finite clip probability");
      p.batch.scores.push_back(std::clamp(v, 0.0, 1.0));
    }
    for (double v : b.labels.data()) p.batch.labels.push_back(static_cast<std::uint8_t>(v));
    if (with_decoder) {
      const auto r = out.recon.data();
      const auto x = b.inputs.data();
      for (std::size_t i = 0; i < r.size(); ++i) sq += (r[i] - x[i]) * (r[i] - x[i]);
      cells += r.size();
    }
  }
  for (const auto& clip : data.clips) p.snr_db.push_back(clip.snr_db);
  if (with_decoder && cells) p.recon_mse = sq / static_cast<double>(cells);
  return p;
}

std::string parameter_hash(const SedModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : model.parameters()) {
    for (double v : p.tensor.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- trainer ------------------------------------------------------------------------

Trainer::Trainer(ModelConfig model, TrainConfig train, FeatureConfig features, Normalization norm,
                 std::vector<std::string> categories)
    : model_config_(model),
      train_(train),
      features_(features),
      norm_(std::move(norm)),
      categories_(std::move(categories)),
      model_((train.validate(), model), train.seed),
      adam_(AdamConfig{train.lr, 0.9, 0.999, 1e-8}, model_.parameters()),
      rng_(derive_seed(train.seed, kShuffleStream)) {
  keep_large_blocks_on_heap();
  if (model_config_.num_classes != categories_.size()) {
    throw std::invalid_argument("trainer: model has " + std::to_string(model_config_.num_classes) +
                                " outputs for " + std::to_string(categories_.size()) + " categories");
  }
  if (model_config_.mel_bins != features_.n_mels) {
    throw std::invalid_argument("trainer: model expects " + std::to_string(model_config_.mel_bins) +
                                " mel bins, features produce " + std::to_string(features_.n_mels));
  }
}

EpochReport Trainer::run_epoch(const Dataset& train, const Dataset& val) {
  if (train.empty()) throw DataError("train: training split is empty");
  if (train.categories != categories_) throw DataError("train: dataset categories differ from the model's");
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const ops::ConvPrecisionScope precision(train_.conv_precision);
  rng_.shuffle(std::span<std::size_t>(order));

  double l1 = 0.0, l2 = 0.0, total = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t first = 0; first < order.size(); first += train_.batch, ++batch_index) {
    const std::size_t count = std::min(train_.batch, order.size() - first);
    const Batch b = make_batch(train, order, first, count);
    Graph g;
    const ForwardResult out = model_.forward(g, b.inputs, Mode::train, true);
    const JointLoss loss = joint_loss(g, out.probs, b.labels, out.recon, b.inputs, train_.alpha);
    const std::string where = "epoch " + std::to_string(epoch_ + 1) + ", batch " + std::to_string(batch_index);
    if (!std::isfinite(loss.total.item())) {
      g.backward(loss.total);
      std::string culprit = "none";
      for (const auto& p : model_.parameters()) {
        if (p.tensor.has_grad() && !all_finite(p.tensor.grad())) {
          culprit = p.name;
          break;
        }
      }
      model_.zero_grad();
      throw NumericError("non-finite loss at " + where + "; first non-finite gradient: " + culprit);
    }
    g.backward(loss.total);
    try {
      adam_step(model_.parameters(), adam_);
    } catch (const NumericError& e) {
      model_.zero_grad();
      throw NumericError(std::string(e.what()) + " at " + where);
    }
    model_.zero_grad();
    const double w = static_cast<double>(count);
    l1 += w * loss.classification.item();
    l2 += w * loss.reconstruction.item();
    total += w * loss.total.item();
  }
  ++epoch_;

  const ops::ConvPrecisionScope eval_precision(ops::ConvPrecision::f64);
  EpochReport r;
  r.epoch = epoch_;
  const double n = static_cast<double>(train.size());
  r.l1 = l1 / n;
  r.l2 = l2 / n;
  r.total = total / n;
  if (!val.empty()) {
    const Predictions p = predict(model_, val, train_.batch, true);
    const MetricReport m = evaluate(p.batch, train_.threshold);
    r.val = {m.micro_p, m.macro_p, m.auc, p.recon_mse};
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  const auto& m = model_config_;
  c.config = {
      {"model.profile", m.profile()},
      {"model.num_classes", std::to_string(m.num_classes)},
      {"model.mel_bins", std::to_string(m.mel_bins)},
      {"model.channels", channels_str(m.channels)},
      {"model.kernel", std::to_string(m.kernel)},
      {"model.padding", std::to_string(m.padding)},
      {"model.pooling", pooling_name(m.pooling)},
      {"model.gwrp_decay", format_number(m.gwrp_decay)},
      {"train.alpha", format_number(train_.alpha)},
      {"train.lr", format_number(train_.lr)},
      {"train.batch", std::to_string(train_.batch)},
      {"train.epochs", std::to_string(train_.epochs)},
      {"train.seed", std::to_string(train_.seed)},
      {"train.threshold", format_number(train_.threshold)},
      {"train.record_wall_time", train_.record_wall_time ? "true" : "false"},
      {"train.conv_precision", conv_precision_name(train_.conv_precision)},
      {"dsp.sample_rate", std::to_string(features_.sample_rate)},
      {"dsp.window", std::to_string(features_.window)},
      {"dsp.hop", std::to_string(features_.hop)},
      {"dsp.n_mels", std::to_string(features_.n_mels)},
      {"dsp.fmin", format_number(features_.fmin)},
      {"dsp.fmax", format_number(features_.fmax)},
      {"dsp.fingerprint", features_.fingerprint()},
      {"data.categories", join(categories_, ',')},
  };
  c.norm_mean = norm_.mean;
  c.norm_std = norm_.std;
  c.tensors = model_.state();
  c.adam_step = adam_.step;
  c.adam = adam_.config;
  const auto& params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.adam_moments.push_back({"adam.m." + params[i].name, params[i].tensor.shape(), adam_.m[i]});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.adam_moments.push_back({"adam.v." + params[i].name, params[i].tensor.shape(), adam_.v[i]});
  }
  c.epoch = epoch_;
  c.rng_state = rng_.state();
  return c;
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt) {
  Normalization norm{ckpt.norm_mean, ckpt.norm_std};
  Trainer t(model_config_from(ckpt), train_config_from(ckpt), feature_config_from(ckpt), std::move(norm),
            categories_from(ckpt));
  t.model_.load_state(ckpt.tensors);
  const auto& params = t.model_.parameters();
  if (ckpt.adam_moments.size() != 2 * params.size()) {
    throw DataError("checkpoint holds " + std::to_string(ckpt.adam_moments.size()) +
                    " optimizer moments, expected " + std::to_string(2 * params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = ckpt.adam_moments[i];
    const auto& v = ckpt.adam_moments[params.size() + i];
    if (m.name != "adam.m." + params[i].name || v.name != "adam.v." + params[i].name ||
        m.values.size() != params[i].tensor.numel() || v.values.size() != params[i].tensor.numel()) {
      throw DataError("checkpoint optimizer moments do not match parameter '" + params[i].name + "'");
    }
    t.adam_.m[i] = m.values;
    t.adam_.v[i] = v.values;
  }
  t.adam_.step = ckpt.adam_step;
  t.adam_.config = ckpt.adam;
  t.epoch_ = ckpt.epoch;
  t.rng_.set_state(ckpt.rng_state);
  return t;
}

TrainResult run_training(Trainer& trainer, const Dataset& train, const Dataset& val,
                         const EpochCallback& on_epoch) {
  TrainResult r;
  r.init_hash = parameter_hash(trainer.model());
  while (trainer.epoch() < trainer.config().epochs) {
    r.reports.push_back(trainer.run_epoch(train, val));
    if (on_epoch) on_epoch(r.reports.back(), trainer);
  }
  r.checkpoint = trainer.checkpoint();
  return r;
}

TrainResult train(const CorpusData& corpus, const ModelConfig& model, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  Trainer t(model, config, corpus.features, corpus.norm, corpus.manifest.categories);
  return run_training(t, corpus.train, corpus.val, on_epoch);
}

// --- checkpoint <-> configuration -----------------------------------------------------

namespace {

std::size_t config_size(const Checkpoint& c, const std::string& key) {
  try {
    return static_cast<std::size_t>(parse_u64(c.config_value(key)));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("checkpoint: malformed value for " + key);
  }
}

double config_double(const Checkpoint& c, const std::string& key) {
  try {
    return parse_double(c.config_value(key));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("checkpoint: malformed value for " + key);
  }
}

}  // namespace

ModelConfig model_config_from(const Checkpoint& ckpt) {
  ModelConfig m;
  m.num_classes = config_size(ckpt, "model.num_classes");
  m.mel_bins = config_size(ckpt, "model.mel_bins");
  const auto ch = split(ckpt.config_value("model.channels"), ',');
  if (ch.size() != 4) throw DataError("checkpoint: model.channels must list 4 widths");
  for (std::size_t i = 0; i < 4; ++i) m.channels[i] = static_cast<std::size_t>(parse_u64(ch[i]));
  m.kernel = config_size(ckpt, "model.kernel");
  m.padding = config_size(ckpt, "model.padding");
  try {
    m.pooling = parse_pooling(ckpt.config_value("model.pooling"));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  m.gwrp_decay = config_double(ckpt, "model.gwrp_decay");
  return m;
}

TrainConfig train_config_from(const Checkpoint& ckpt) {
  TrainConfig t;
  t.alpha = config_double(ckpt, "train.alpha");
  t.lr = config_double(ckpt, "train.lr");
  t.batch = config_size(ckpt, "train.batch");
  t.epochs = config_size(ckpt, "train.epochs");
  t.seed = parse_u64(ckpt.config_value("train.seed"));
  t.threshold = config_double(ckpt, "train.threshold");
  t.record_wall_time = ckpt.config_value("train.record_wall_time") == "true";
  try {
    t.conv_precision = parse_conv_precision(ckpt.config_value("train.conv_precision"));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return t;
}

FeatureConfig feature_config_from(const Checkpoint& ckpt) {
  FeatureConfig f;
  f.sample_rate = static_cast<int>(config_size(ckpt, "dsp.sample_rate"));
  f.window = config_size(ckpt, "dsp.window");
  f.hop = config_size(ckpt, "dsp.hop");
  f.n_mels = config_size(ckpt, "dsp.n_mels");
  f.fmin = config_double(ckpt, "dsp.fmin");
  f.fmax = config_double(ckpt, "dsp.fmax");
  if (f.fingerprint() != ckpt.config_value("dsp.fingerprint")) {
    throw DataError("checkpoint: feature fingerprint does not match its feature settings");
  }
  return f;
}

std::vector<std::string> categories_from(const Checkpoint& ckpt) {
  return split(ckpt.config_value("data.categories"), ',');
}

SedModel model_from_checkpoint(const Checkpoint& ckpt) {
  SedModel m(model_config_from(ckpt), 0);
  m.load_state(ckpt.tensors);
  return m;
}

// --- evaluation and ablation --------------------------------------------------------

std::vector<SnrReport> evaluate_by_snr(const Predictions& predictions, double threshold) {
  const EvalBatch& all = predictions.batch;
  if (predictions.snr_db.size() != all.num_clips) {
    throw std::invalid_argument("evaluate_by_snr: one SNR per clip required");
  }
  std::set<double, std::greater<>> levels(predictions.snr_db.begin(), predictions.snr_db.end());
  std::vector<SnrReport> out;
  const std::size_t c = all.num_categories;
  for (double snr : levels) {
    EvalBatch sub;
    sub.num_categories = c;
    sub.categories = all.categories;
    for (std::size_t i = 0; i < all.num_clips; ++i) {
      if (predictions.snr_db[i] != snr) continue;
      ++sub.num_clips;
      sub.scores.insert(sub.scores.end(), all.scores.begin() + static_cast<std::ptrdiff_t>(i * c),
                        all.scores.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
      sub.labels.insert(sub.labels.end(), all.labels.begin() + static_cast<std::ptrdiff_t>(i * c),
                        all.labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    }
    out.push_back({snr, evaluate(sub, threshold)});
  }
  return out;
}

std::vector<AblationRow> ablate(const CorpusData& corpus, const ModelConfig& model,
                                const TrainConfig& base, const std::vector<double>& alphas,
                                const EpochCallback& on_epoch) {
  if (alphas.empty()) throw std::invalid_argument("ablate: no alpha values");
  std::vector<AblationRow> rows;
  for (double alpha : alphas) {
    TrainConfig cfg = base;
    cfg.alpha = alpha;
    Trainer t(model, cfg, corpus.features, corpus.norm, corpus.manifest.categories);
    AblationRow row;
    row.alpha = alpha;
    row.result = run_training(t, corpus.train, corpus.val, on_epoch);
    row.init_hash = row.result.init_hash;
    row.test = evaluate_by_snr(predict(t.model(), corpus.test, cfg.batch, false), cfg.threshold);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::vector<double> levels;
  for (const auto& row : rows) {
    for (const auto& s : row.test) {
      if (std::find(levels.begin(), levels.end(), s.snr_db) == levels.end()) levels.push_back(s.snr_db);
    }
  }
  std::sort(levels.begin(), levels.end(), std::greater<>());
  std::string out = "alpha,init_hash";
  for (double snr : levels) {
    const std::string tag = format_number(snr) + "dB";
    out += ",micro_p_" + tag + ",macro_p_" + tag + ",auc_" + tag;
  }
  out += "\n";
  for (const auto& row : rows) {
    out += format_number(row.alpha) + "," + row.init_hash;
    for (double snr : levels) {
      const auto it = std::find_if(row.test.begin(), row.test.end(),
                                   [&](const SnrReport& s) { return s.snr_db == snr; });
      if (it == row.test.end()) {
        out += ",undefined,undefined,undefined";
      } else {
        out += "," + format_metric(it->report.micro_p) + "," + format_metric(it->report.macro_p) + "," +
               format_metric(it->report.auc);
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace wsed
