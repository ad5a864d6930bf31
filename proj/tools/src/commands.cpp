// SPDX-License-Identifier: Apache-2.0
#include "wsed_cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "wsed/audio.hpp"
#include "wsed/checkpoint.hpp"
#include "wsed/dsp.hpp"
#include "wsed/error.hpp"
#include "wsed/gradcheck_suite.hpp"
#include "wsed/metrics.hpp"
#include "wsed/model.hpp"
#include "wsed/synth.hpp"
#include "wsed/text.hpp"
#include "wsed/train.hpp"
#include "wsed_cli/run_config.hpp"

namespace fs = std::filesystem;

namespace wsed::cli {
namespace {

constexpr const char* kHistoryKey = "history.epochs";
constexpr const char* kCorpusKey = "data.corpus";

// --- flags --------------------------------------------------------------------

// Values captured by CLI11; applied to the RunConfig after parsing so that
// the config file is read first and flags override it.
struct Flags {
  std::string config_file;
  std::map<std::string, std::string> keys;  // "section.key" -> value
  std::deque<std::pair<std::string, std::string>> aliases;  // stable addresses for CLI11
  std::map<std::string, CLI::Option*> key_options;
  std::vector<std::pair<CLI::Option*, std::string>> alias_options;
};

void add_config_flags(CLI::App& sub, Flags& flags) {
  sub.add_option("--config", flags.config_file, "YAML run configuration")->check(CLI::ExistingFile);
  for (const auto& key : config_keys()) {
    auto* opt = sub.add_option("--" + key, flags.keys[key], "Override " + key)->group("Configuration keys");
    flags.key_options[key] = opt;
  }
}

void add_alias(CLI::App& sub, Flags& flags, const std::string& flag, const std::string& key,
               const std::string& help) {
  auto& slot = flags.aliases.emplace_back(key, std::string{});
  flags.alias_options.emplace_back(sub.add_option(flag, slot.second, help), key);
}

// Returns the effective configuration and the keys set explicitly.
RunConfig resolve(const Flags& flags, std::vector<std::string>* explicit_keys = nullptr) {
  RunConfig config;
  std::vector<std::string> set;
  if (!flags.config_file.empty()) set = apply_yaml_file(config, flags.config_file);
  for (const auto& [key, opt] : flags.key_options) {
    if (opt->count()) {
      set_config_value(config, key, flags.keys.at(key));
      set.push_back(key);
    }
  }
  for (std::size_t i = 0; i < flags.alias_options.size(); ++i) {
    const auto& [opt, key] = flags.alias_options[i];
    if (opt->count()) {
      set_config_value(config, key, flags.aliases[i].second);
      set.push_back(key);
    }
  }
  config.validate();
  if (explicit_keys) *explicit_keys = std::move(set);
  return config;
}

bool contains(const std::vector<std::string>& keys, const std::string& key) {
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

// --- history --------------------------------------------------------------------

Metric parse_metric(const std::string& s) {
  if (s == "undefined") return std::nullopt;
  return parse_double(s);
}

// --- checkpoint helpers ------------------------------------------------------------

std::string checkpoint_value_or(const Checkpoint& ckpt, const std::string& key, const std::string& fallback) {
  for (const auto& [k, v] : ckpt.config) {
    if (k == key) return v;
  }
  return fallback;
}

void set_checkpoint_value(Checkpoint& ckpt, const std::string& key, const std::string& value) {
  for (auto& [k, v] : ckpt.config) {
    if (k == key) {
      v = value;
      return;
    }
  }
  ckpt.config.emplace_back(key, value);
}

// Mirrors a checkpoint's settings into the run configuration for the echo.
void adopt_checkpoint(RunConfig& config, const Checkpoint& ckpt) {
  config.dsp = feature_config_from(ckpt);
  const ModelConfig m = model_config_from(ckpt);
  config.model.profile = m.profile();
  config.model.pooling = m.pooling;
  config.model.gwrp_decay = m.gwrp_decay;
  const TrainConfig t = train_config_from(ckpt);
  const std::size_t epochs = config.train.epochs;
  config.train = t;
  config.train.epochs = epochs;
  config.data.categories = m.num_classes;
}

// Refuses explicit dsp settings that disagree with the checkpoint.
void check_dsp_overrides(const RunConfig& requested, const std::vector<std::string>& explicit_keys,
                         const FeatureConfig& trained) {
  if (std::none_of(explicit_keys.begin(), explicit_keys.end(),
                   [](const std::string& k) { return k.starts_with("dsp."); })) {
    return;
  }
  FeatureConfig merged = trained;
  if (contains(explicit_keys, "dsp.sample_rate")) merged.sample_rate = requested.dsp.sample_rate;
  if (contains(explicit_keys, "dsp.window")) merged.window = requested.dsp.window;
  if (contains(explicit_keys, "dsp.hop")) merged.hop = requested.dsp.hop;
  if (contains(explicit_keys, "dsp.n_mels")) merged.n_mels = requested.dsp.n_mels;
  if (contains(explicit_keys, "dsp.fmin")) merged.fmin = requested.dsp.fmin;
  if (contains(explicit_keys, "dsp.fmax")) merged.fmax = requested.dsp.fmax;
  if (merged.fingerprint() != trained.fingerprint()) {
    throw DataError("feature fingerprint mismatch: checkpoint was trained with '" + trained.fingerprint() +
                    "' but '" + merged.fingerprint() + "' was requested");
  }
}

// Loads the corpus splits with the checkpoint's feature settings and
// normalization.
Dataset load_with_checkpoint(const fs::path& corpus, const Checkpoint& ckpt, Split split) {
  const CorpusManifest manifest = read_manifest(corpus);
  const FeatureConfig features = feature_config_from(ckpt);
  check_corpus_compatible(manifest, features);
  const auto categories = categories_from(ckpt);
  if (manifest.categories != categories) {
    throw DataError("corpus categories (" + std::to_string(manifest.categories.size()) +
                    ") differ from the checkpoint's (" + std::to_string(categories.size()) + ")");
  }
  return load_split(corpus, manifest, split, features, Normalization{ckpt.norm_mean, ckpt.norm_std});
}

fs::path require_corpus(const RunConfig& config) {
  if (config.data.corpus.empty()) throw UsageError("no corpus given (--corpus or data.corpus)");
  return config.data.corpus;
}

// --- output helpers ------------------------------------------------------------------

std::string metrics_csv(const MetricReport& all, const std::vector<SnrReport>& by_snr, Split split) {
  std::string out = "split,snr_db,clips,threshold,micro_p,macro_p,auc,macro_excluded,auc_excluded\n";
  auto row = [&](const std::string& snr, const MetricReport& r) {
    out += split_name(split) + "," + snr + "," + std::to_string(r.clips) + "," + format_number(r.threshold) + "," +
           format_metric(r.micro_p) + "," + format_metric(r.macro_p) + "," + format_metric(r.auc) + "," +
           std::to_string(r.macro_excluded) + "," + std::to_string(r.auc_excluded) + "\n";
  };
  row("all", all);
  for (const auto& s : by_snr) row(format_number(s.snr_db), s.report);
  return out;
}

std::string scores_csv(const Dataset& data, const EvalBatch& batch) {
  std::string out = "path";
  for (const auto& c : batch.categories) out += ",score_" + c;
  for (const auto& c : batch.categories) out += ",label_" + c;
  out += "\n";
  for (std::size_t i = 0; i < batch.num_clips; ++i) {
    out += data.clips[i].path;
    for (std::size_t c = 0; c < batch.num_categories; ++c) out += "," + format_number(batch.score(i, c));
    for (std::size_t c = 0; c < batch.num_categories; ++c) out += batch.label(i, c) ? ",1" : ",0";
    out += "\n";
  }
  return out;
}

std::string alpha_dir(double alpha) { return "alpha_" + format_number(alpha); }

// --- visualization ---------------------------------------------------------------------

struct Panel {
  std::string file;
  std::string description;
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;  // row-major
  std::vector<std::string> row_labels;
  std::string axes;            // header cell naming both axes
  bool flip_rows = false;      // low frequency at the bottom of the image
  bool absolute = false;       // values already in [0, 1]
};

std::string panel_csv(const Panel& p) {
  std::ostringstream os;
  os << p.axes;
  for (std::size_t c = 0; c < p.cols; ++c) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < p.rows; ++r) {
    os << (p.row_labels.empty() ? std::to_string(r) : p.row_labels[r]);
    for (std::size_t c = 0; c < p.cols; ++c) os << ',' << format_number(p.values[r * p.cols + c]);
    os << '\n';
  }
  return os.str();
}

std::string panel_pgm(const Panel& p) {
  double lo = 0.0, hi = 1.0;
  if (!p.absolute) {
    const auto [mn, mx] = std::minmax_element(p.values.begin(), p.values.end());
    lo = *mn;
    hi = *mx;
  }
  std::ostringstream os;
  os << "P2\n" << p.cols << ' ' << p.rows << "\n255\n";
  for (std::size_t i = 0; i < p.rows; ++i) {
    const std::size_t r = p.flip_rows ? p.rows - 1 - i : i;
    for (std::size_t c = 0; c < p.cols; ++c) {
      const double v = hi > lo ? (p.values[r * p.cols + c] - lo) / (hi - lo) : 0.0;
      os << (c ? " " : "") << static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
    os << '\n';
  }
  return os.str();
}

// Values of category `cat` in a [1, C, ...] trace tensor.
std::vector<double> category_slice(const Tensor& t, std::size_t cat) {
  const std::size_t per = t.numel() / t.dim(1);
  const auto d = t.data();
  return {d.begin() + static_cast<std::ptrdiff_t>(cat * per), d.begin() + static_cast<std::ptrdiff_t>((cat + 1) * per)};
}

// --- subcommands -------------------------------------------------------------------------

int cmd_synth(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  CorpusManifest manifest;
  if (config.data.events_dir.empty() != config.data.backgrounds_dir.empty()) {
    throw UsageError("--events-dir and --backgrounds-dir must be given together");
  }
  if (!config.data.events_dir.empty()) {
    IngestConfig ingest;
    ingest.events_dir = config.data.events_dir;
    ingest.backgrounds_dir = config.data.backgrounds_dir;
    ingest.snr_db = config.data.snr;
    ingest.n_clips = config.data.clips;
    ingest.seed = config.data.seed;
    ingest.sample_rate = config.dsp.sample_rate;
    ingest.clip_seconds = config.data.clip_seconds;
    manifest = ingest_external(ingest, out_dir);
  } else {
    const ToyCorpusConfig toy = config.toy_corpus();
    try {
      validate(toy);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    manifest = write_toy_corpus(toy, out_dir);
  }
  write_config_echo(out_dir, config);
  out << "wrote " << manifest.entries.size() << " clips (" << manifest.split(Split::train).size() << " train, "
      << manifest.split(Split::val).size() << " val, " << manifest.split(Split::test).size() << " test) to "
      << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_train(RunConfig config, const std::vector<std::string>& explicit_keys, const fs::path& out_dir,
              const std::string& resume, std::ostream& out) {
  std::optional<Trainer> trainer;
  std::vector<EpochReport> history;
  CorpusData corpus;
  if (!resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume);
    if (config.data.corpus.empty()) config.data.corpus = checkpoint_value_or(ckpt, kCorpusKey, "");
    check_dsp_overrides(config, explicit_keys, feature_config_from(ckpt));
    const std::size_t epochs =
        contains(explicit_keys, "train.epochs") ? config.train.epochs : train_config_from(ckpt).epochs;
    config.train.epochs = epochs;
    adopt_checkpoint(config, ckpt);
    corpus = load_corpus(require_corpus(config), feature_config_from(ckpt));
    if (corpus.norm.mean != ckpt.norm_mean || corpus.norm.std != ckpt.norm_std) {
      throw DataError("corpus " + config.data.corpus + " is not the corpus the checkpoint was trained on");
    }
    trainer.emplace(Trainer::from_checkpoint(ckpt));
    trainer->config().epochs = epochs;
    history = decode_history(checkpoint_value_or(ckpt, kHistoryKey, ""));
    if (history.size() != ckpt.epoch) history.clear();
  } else {
    corpus = load_corpus(require_corpus(config), config.dsp);
    config.data.categories = corpus.manifest.num_categories();
    TrainConfig t = config.train;
    t.threshold = config.eval.threshold;
    trainer.emplace(config.model_config(corpus.manifest.num_categories()), t, corpus.features, corpus.norm,
                    corpus.manifest.categories);
  }
  fs::create_directories(out_dir);
  write_config_echo(out_dir, config);
  const bool wall = trainer->config().record_wall_time;

  auto save = [&](const Trainer& t) {
    Checkpoint ckpt = t.checkpoint();
    set_checkpoint_value(ckpt, kCorpusKey, config.data.corpus);
    set_checkpoint_value(ckpt, kHistoryKey, encode_history(history, wall));
    save_checkpoint(out_dir / "checkpoint.bin", ckpt);
    write_text_file(out_dir / "epochs.csv", epoch_csv(history, wall));
    write_text_file(out_dir / "val_recon.csv", val_recon_csv(history));
  };
  out << "training " << corpus.train.size() << " clips, " << corpus.val.size() << " validation; alpha "
      << format_number(trainer->config().alpha) << ", epochs " << trainer->epoch() << " -> "
      << trainer->config().epochs << "\n";
  run_training(*trainer, corpus.train, corpus.val, [&](const EpochReport& r, const Trainer& t) {
    history.push_back(r);
    out << "epoch " << r.epoch << "  l1 " << format_number(r.l1) << "  l2 " << format_number(r.l2) << "  total "
        << format_number(r.total) << "  val micro-p " << format_metric(r.val.micro_p) << "  val recon "
        << format_metric(r.val.recon_mse) << "  (" << std::fixed << std::setprecision(1) << r.seconds << " s)\n";
    out << std::defaultfloat;
    out.flush();
    save(t);
  });
  save(*trainer);
  out << "checkpoint: " << (out_dir / "checkpoint.bin").string() << "\n";
  return kExitOk;
}

int cmd_eval(RunConfig config, const std::vector<std::string>& explicit_keys, const fs::path& ckpt_path,
             fs::path out_dir, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (config.data.corpus.empty()) config.data.corpus = checkpoint_value_or(ckpt, kCorpusKey, "");
  check_dsp_overrides(config, explicit_keys, feature_config_from(ckpt));
  adopt_checkpoint(config, ckpt);
  const Dataset data = load_with_checkpoint(require_corpus(config), ckpt, config.eval.split);
  if (data.empty()) throw DataError("split " + split_name(config.eval.split) + " of the corpus is empty");
  if (out_dir.empty()) out_dir = ckpt_path.parent_path() / ("eval_" + split_name(config.eval.split));

  SedModel model = model_from_checkpoint(ckpt);
  const Predictions p = predict(model, data, config.eval.batch, false);
  const MetricReport report = evaluate(p.batch, config.eval.threshold);
  const auto by_snr = evaluate_by_snr(p, config.eval.threshold);

  fs::create_directories(out_dir);
  write_config_echo(out_dir, config);
  write_text_file(out_dir / "metrics.csv", metrics_csv(report, by_snr, config.eval.split));
  write_text_file(out_dir / "per_category.csv", per_category_csv(report));
  write_text_file(out_dir / "scores.csv", scores_csv(data, p.batch));
  out << format_report_table(report, split_name(config.eval.split) + " split, all SNR");
  for (const auto& s : by_snr) out << format_report_table(s.report, format_number(s.snr_db) + " dB");
  out << "micro-p " << format_metric(report.micro_p) << "\n";
  return kExitOk;
}

int cmd_ablate(RunConfig config, const fs::path& out_dir, std::ostream& out) {
  const CorpusData corpus = load_corpus(require_corpus(config), config.dsp);
  config.data.categories = corpus.manifest.num_categories();
  TrainConfig base = config.train;
  base.threshold = config.eval.threshold;
  const ModelConfig model = config.model_config(corpus.manifest.num_categories());
  fs::create_directories(out_dir);
  write_config_echo(out_dir, config);

  std::size_t run = 0;
  const auto rows = ablate(corpus, model, base, config.eval.alphas, [&](const EpochReport& r, const Trainer&) {
    if (r.epoch == 1) ++run;
    out << "alpha " << format_number(config.eval.alphas[run - 1]) << "  epoch " << r.epoch << "  total "
        << format_number(r.total) << "  val recon " << format_metric(r.val.recon_mse) << "\n";
    out.flush();
  });
  std::string drift = "alpha,decoder_max_abs_change,encoder_max_abs_change\n";
  for (const auto& row : rows) {
    const fs::path dir = out_dir / alpha_dir(row.alpha);
    fs::create_directories(dir);
    Checkpoint ckpt = row.result.checkpoint;
    set_checkpoint_value(ckpt, kCorpusKey, config.data.corpus);
    set_checkpoint_value(ckpt, kHistoryKey, encode_history(row.result.reports, base.record_wall_time));
    save_checkpoint(dir / "checkpoint.bin", ckpt);
    write_text_file(dir / "epochs.csv", epoch_csv(row.result.reports, base.record_wall_time));
    write_text_file(dir / "val_recon.csv", val_recon_csv(row.result.reports));
    drift += format_number(row.alpha) + "," + format_number(max_parameter_drift(row.result.checkpoint, "dec.")) +
             "," + format_number(max_parameter_drift(row.result.checkpoint, "enc.")) + "\n";
  }
  write_text_file(out_dir / "ablation.csv", ablation_csv(rows));
  write_text_file(out_dir / "parameter_drift.csv", drift);
  out << ablation_csv(rows);
  return kExitOk;
}

int cmd_visualize(RunConfig config, const std::vector<std::string>& explicit_keys, const fs::path& ckpt_path,
                  const fs::path& clip, const fs::path& out_dir, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  check_dsp_overrides(config, explicit_keys, feature_config_from(ckpt));
  adopt_checkpoint(config, ckpt);
  const FeatureConfig features = feature_config_from(ckpt);
  const auto categories = categories_from(ckpt);
  SedModel model = model_from_checkpoint(ckpt);
  if (model.config().pooling != PoolingKind::two_step_attention) {
    throw DataError("visualize needs a two-step attention checkpoint, this one uses " +
                    pooling_name(model.config().pooling));
  }

  const AudioBuffer audio = read_wav(clip);
  if (audio.sample_rate != features.sample_rate) {
    throw DataError("sample-rate mismatch: " + clip.string() + " is " + std::to_string(audio.sample_rate) +
                    " Hz, the checkpoint expects " + std::to_string(features.sample_rate) + " Hz");
  }
  LogMelExtractor extract(features);
  const Matrix x = prepare_features(extract(audio), Normalization{ckpt.norm_mean, ckpt.norm_std});
  Graph g;
  const ForwardResult r =
      model.forward(g, Tensor::from({1, 1, x.rows, x.cols}, x.values), Mode::eval, true);
  const AttentionTrace& trace = *r.trace;
  const std::size_t c = categories.size(), fz = trace.za1.dim(2), tz = trace.za1.dim(3);

  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  const auto probs = trace.zp2.data();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

  std::vector<Panel> panels;
  panels.push_back({"panel1_input", "standardized log-mel input", x.rows, x.cols, x.values, {}, "mel_bin/frame", true});
  const auto recon = r.recon.data();
  panels.push_back({"panel2_reconstruction", "decoder reconstruction", x.rows, x.cols,
                    {recon.begin(), recon.end()}, {}, "mel_bin/frame", true});
  for (std::size_t k = 0; k < std::min<std::size_t>(3, c); ++k) {
    const std::size_t cat = order[k];
    panels.push_back({"panel" + std::to_string(3 + k) + "_za1_" + categories[cat],
                      "frequency attention Z_a1 for " + categories[cat] + " (P=" + format_number(probs[cat]) + ")",
                      fz, tz, category_slice(trace.za1, cat), {}, "freq/frame", true});
  }
  const auto zp1 = trace.zp1.data(), za2 = trace.za2.data();
  panels.push_back({"panel6_zp1", "frequency-pooled map Z_p1", c, tz, {zp1.begin(), zp1.end()}, categories,
                    "category/frame"});
  panels.push_back({"panel7_za2", "time attention Z_a2", c, tz, {za2.begin(), za2.end()}, categories,
                    "category/frame"});
  Panel p8{"panel8_zp2", "clip probabilities Z_p2", c, 1, {probs.begin(), probs.end()}, categories,
           "category/probability"};
  p8.absolute = true;
  panels.push_back(p8);

  fs::create_directories(out_dir);
  write_config_echo(out_dir, config);
  std::string index = "panel,file,rows,cols,description\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const Panel& p = panels[i];
    write_text_file(out_dir / (p.file + ".csv"), panel_csv(p));
    write_text_file(out_dir / (p.file + ".pgm"), panel_pgm(p));
    index += std::to_string(i + 1) + "," + p.file + ".csv," + std::to_string(p.rows) + "," + std::to_string(p.cols) +
             "," + p.description + "\n";
  }
  write_text_file(out_dir / "panels.csv", index);
  out << "wrote " << panels.size() << " panels to " << out_dir.string() << "\n";
  for (std::size_t k = 0; k < c; ++k) {
    out << "  " << categories[order[k]] << "  P=" << format_number(probs[order[k]]) << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, bool inject_fault, std::ostream& out) {
  const auto reports = run_gradcheck_suite(seed, inject_fault);
  std::size_t failed = 0;
  for (const auto& r : reports) {
    if (!r.passed()) ++failed;
    out << (r.passed() ? "PASS  " : "FAIL  ") << std::left << std::setw(28) << r.op << std::right
        << "  max rel err " << std::scientific << std::setprecision(2) << r.worst() << std::defaultfloat;
    if (r.kink_skipped) out << "  (" << r.kink_skipped << " of " << r.kink_skipped + r.checked << " at relu kinks)";
    out << "\n";
  }
  out << (failed ? "gradcheck FAILED: " : "gradcheck passed: ") << reports.size() - failed << " of "
      << reports.size() << " checks, seed " << seed << "\n";
  return failed ? kExitNumeric : kExitOk;
}

}  // namespace

std::string encode_history(const std::vector<EpochReport>& reports, bool with_wall_time) {
  std::string out;
  for (const auto& r : reports) {
    out += std::to_string(r.epoch) + "," + format_number(r.l1) + "," + format_number(r.l2) + "," +
           format_number(r.total) + "," + format_number(with_wall_time ? r.seconds : 0.0) + "," +
           format_metric(r.val.micro_p) + "," + format_metric(r.val.macro_p) + "," + format_metric(r.val.auc) +
           "," + format_metric(r.val.recon_mse) + ";";
  }
  return out;
}

std::vector<EpochReport> decode_history(const std::string& text) {
  std::vector<EpochReport> out;
  for (const auto& row : split(text, ';')) {
    if (row.empty()) continue;
    const auto f = split(row, ',');
    if (f.size() != 9) throw DataError("checkpoint: malformed epoch history");
    EpochReport r;
    r.epoch = static_cast<std::size_t>(parse_u64(f[0]));
    r.l1 = parse_double(f[1]);
    r.l2 = parse_double(f[2]);
    r.total = parse_double(f[3]);
    r.seconds = parse_double(f[4]);
    r.val = {parse_metric(f[5]), parse_metric(f[6]), parse_metric(f[7]), parse_metric(f[8])};
    out.push_back(r);
  }
  return out;
}

std::string val_recon_csv(const std::vector<EpochReport>& reports) {
  std::string out = "epoch,val_recon_mse\n";
  for (const auto& r : reports) out += std::to_string(r.epoch) + "," + format_metric(r.val.recon_mse) + "\n";
  return out;
}

double max_parameter_drift(const Checkpoint& ckpt, const std::string& prefix) {
  const SedModel init(model_config_from(ckpt), train_config_from(ckpt).seed);
  double drift = 0.0;
  for (const auto& p : init.parameters()) {
    if (!p.name.starts_with(prefix)) continue;
    const auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(),
                                 [&](const NamedArray& a) { return a.name == p.name; });
    if (it == ckpt.tensors.end()) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    const auto v = p.tensor.data();
    for (std::size_t i = 0; i < v.size(); ++i) drift = std::max(drift, std::abs(it->values[i] - v[i]));
  }
  return drift;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly labeled sound event detection with two-step attention pooling", "wsed"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "wsed 0.1.0");

  Flags synth_flags, train_flags, eval_flags, ablate_flags, vis_flags;
  std::string synth_out, train_out, train_resume, eval_ckpt, eval_out, ablate_out = "ablation", vis_ckpt, vis_clip,
                                                                       vis_out;
  std::uint64_t gc_seed = 1;
  bool gc_fault = false;

  auto* synth = app.add_subcommand("synth", "Generate a toy corpus or mix external recordings");
  synth->add_option("--out", synth_out, "Corpus directory")->required();
  add_alias(*synth, synth_flags, "--snr", "data.snr", "SNR in dB; a comma list cycles over clips");
  add_alias(*synth, synth_flags, "--clips", "data.clips", "Number of clips");
  add_alias(*synth, synth_flags, "--categories", "data.categories", "Toy categories");
  add_alias(*synth, synth_flags, "--seed", "data.seed", "Corpus seed");
  add_alias(*synth, synth_flags, "--events-dir", "data.events_dir", "One WAV subdirectory per category");
  add_alias(*synth, synth_flags, "--backgrounds-dir", "data.backgrounds_dir", "Background WAVs");
  add_config_flags(*synth, synth_flags);

  auto* train = app.add_subcommand("train", "Train the joint tagging / reconstruction model");
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_option("--resume", train_resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  add_alias(*train, train_flags, "--corpus", "data.corpus", "Corpus directory");
  add_alias(*train, train_flags, "--alpha", "train.alpha", "Reconstruction loss weight");
  add_alias(*train, train_flags, "--epochs", "train.epochs", "Epochs");
  add_alias(*train, train_flags, "--profile", "model.profile", "desk or paper");
  add_alias(*train, train_flags, "--pooling", "model.pooling", "2ap, gap, gmp or gwrp");
  add_alias(*train, train_flags, "--seed", "train.seed", "Initialization and shuffle seed");
  add_config_flags(*train, train_flags);

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a corpus split");
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "Output directory (default: next to the checkpoint)");
  add_alias(*eval, eval_flags, "--corpus", "data.corpus", "Corpus directory (default: the training corpus)");
  add_alias(*eval, eval_flags, "--corpus-split", "eval.split", "train, val or test");
  add_alias(*eval, eval_flags, "--threshold", "eval.threshold", "Decision threshold");
  add_config_flags(*eval, eval_flags);

  auto* abl = app.add_subcommand("ablate", "Train once per alpha and compare on the test split");
  abl->add_option("--out", ablate_out, "Output directory");
  add_alias(*abl, ablate_flags, "--corpus", "data.corpus", "Corpus directory");
  add_alias(*abl, ablate_flags, "--alphas", "eval.alphas", "Comma-separated alpha values");
  add_alias(*abl, ablate_flags, "--seed", "train.seed", "Initialization and shuffle seed");
  add_alias(*abl, ablate_flags, "--epochs", "train.epochs", "Epochs per run");
  add_config_flags(*abl, ablate_flags);

  auto* vis = app.add_subcommand("visualize", "Export attention and reconstruction panels for one clip");
  vis->add_option("--ckpt", vis_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  vis->add_option("--clip", vis_clip, "WAV file")->required();
  vis->add_option("--out", vis_out, "Output directory")->required();
  add_config_flags(*vis, vis_flags);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable operator");
  gc->add_option("--seed", gc_seed, "Seed for inputs and projections");
  gc->add_flag("--inject-fault", gc_fault, "Add a deliberately wrong operator")->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << "wsed 0.1.0\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "wsed: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) err << "run 'wsed " << sub->get_name() << " --help' for usage\n";
    if (app.get_subcommands().empty()) err << "run 'wsed --help' for usage\n";
    return kExitUsage;
  }

  try {
    std::vector<std::string> explicit_keys;
    if (synth->parsed()) return cmd_synth(resolve(synth_flags), synth_out, out);
    if (train->parsed()) {
      RunConfig c = resolve(train_flags, &explicit_keys);
      return cmd_train(c, explicit_keys, train_out, train_resume, out);
    }
    if (eval->parsed()) {
      RunConfig c = resolve(eval_flags, &explicit_keys);
      return cmd_eval(c, explicit_keys, eval_ckpt, eval_out, out);
    }
    if (abl->parsed()) return cmd_ablate(resolve(ablate_flags), ablate_out, out);
    if (vis->parsed()) {
      RunConfig c = resolve(vis_flags, &explicit_keys);
      return cmd_visualize(c, explicit_keys, vis_ckpt, vis_clip, vis_out, out);
    }
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_fault, out);
  } catch (const UsageError& e) {
    err << "wsed: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "wsed: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "wsed: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "wsed: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace wsed::cli
