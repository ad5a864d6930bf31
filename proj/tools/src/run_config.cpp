// SPDX-License-Identifier: Apache-2.0
#include "wsed_cli/run_config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <functional>

#include "wsed/error.hpp"
#include "wsed/text.hpp"

namespace wsed::cli {
namespace {

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(parse_u64(v)); }

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_number(values[i]);
  return out;
}

std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(parse_double(item));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true or false");
}

#define WSED_KEY(key, field, parse, format)                                      \
  Key {                                                                          \
    key, [](RunConfig& c, const std::string& v) { c.field = parse(v); },         \
        [](const RunConfig& c) -> std::string { return format(c.field); }        \
  }

std::string fmt_size(std::size_t v) { return std::to_string(v); }
std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }
std::string fmt_str(const std::string& v) { return v; }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }
std::string ident(const std::string& v) { return v; }
int to_int(const std::string& v) { return static_cast<int>(parse_u64(v)); }
std::string fmt_int(int v) { return std::to_string(v); }

const std::vector<Key>& keys() {
  static const std::vector<Key> table{
      WSED_KEY("dsp.sample_rate", dsp.sample_rate, to_int, fmt_int),
      WSED_KEY("dsp.window", dsp.window, to_size, fmt_size),
      WSED_KEY("dsp.hop", dsp.hop, to_size, fmt_size),
      WSED_KEY("dsp.n_mels", dsp.n_mels, to_size, fmt_size),
      WSED_KEY("dsp.fmin", dsp.fmin, parse_double, format_number),
      WSED_KEY("dsp.fmax", dsp.fmax, parse_double, format_number),
      WSED_KEY("data.corpus", data.corpus, ident, fmt_str),
      WSED_KEY("data.clips", data.clips, to_size, fmt_size),
      WSED_KEY("data.categories", data.categories, to_size, fmt_size),
      WSED_KEY("data.snr", data.snr, parse_list, join),
      WSED_KEY("data.seed", data.seed, parse_u64, fmt_u64),
      WSED_KEY("data.clip_seconds", data.clip_seconds, parse_double, format_number),
      WSED_KEY("data.events_dir", data.events_dir, ident, fmt_str),
      WSED_KEY("data.backgrounds_dir", data.backgrounds_dir, ident, fmt_str),
      WSED_KEY("model.profile", model.profile, ident, fmt_str),
      WSED_KEY("model.pooling", model.pooling, parse_pooling, pooling_name),
      WSED_KEY("model.gwrp_decay", model.gwrp_decay, parse_double, format_number),
      WSED_KEY("train.alpha", train.alpha, parse_double, format_number),
      WSED_KEY("train.lr", train.lr, parse_double, format_number),
      WSED_KEY("train.batch", train.batch, to_size, fmt_size),
      WSED_KEY("train.epochs", train.epochs, to_size, fmt_size),
      WSED_KEY("train.seed", train.seed, parse_u64, fmt_u64),
      WSED_KEY("train.conv_precision", train.conv_precision, parse_conv_precision, conv_precision_name),
      WSED_KEY("train.record_wall_time", train.record_wall_time, parse_bool, fmt_bool),
      WSED_KEY("eval.split", eval.split, parse_split, split_name),
      WSED_KEY("eval.threshold", eval.threshold, parse_double, format_number),
      WSED_KEY("eval.batch", eval.batch, to_size, fmt_size),
      WSED_KEY("eval.alphas", eval.alphas, parse_list, join),
  };
  return table;
}

#undef WSED_KEY

const Key& find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (k.name == name) return k;
  }
  throw UsageError("unknown configuration key '" + name + "'");
}

std::string scalar_text(const YAML::Node& node, const std::string& key) {
  if (node.IsScalar()) return node.Scalar();
  if (node.IsSequence()) {
    std::string out;
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (!node[i].IsScalar()) throw UsageError(key + ": list items must be scalars");
      out += (i ? "," : "") + node[i].Scalar();
    }
    return out;
  }
  if (node.IsNull()) return "";
  throw UsageError(key + ": expected a scalar or a list");
}

}  // namespace

ModelConfig RunConfig::model_config(std::size_t num_classes) const {
  ModelConfig m;
  if (model.profile == "desk") {
    m = ModelConfig::desk(num_classes);
  } else if (model.profile == "paper") {
    m = ModelConfig::paper(num_classes);
  } else {
    throw UsageError("model.profile must be desk or paper, got '" + model.profile + "'");
  }
  m.mel_bins = dsp.n_mels;
  m.pooling = model.pooling;
  m.gwrp_decay = model.gwrp_decay;
  return m;
}

ToyCorpusConfig RunConfig::toy_corpus() const {
  ToyCorpusConfig t;
  t.n_clips = data.clips;
  t.num_categories = data.categories;
  t.snr_db = data.snr;
  t.seed = data.seed;
  t.sample_rate = dsp.sample_rate;
  t.clip_seconds = data.clip_seconds;
  return t;
}

void RunConfig::validate() const {
  try {
    model_config(data.categories).validate();
    train.validate();
    if (dsp.sample_rate <= 0) throw std::invalid_argument("dsp.sample_rate must be positive");
    if (dsp.hop == 0 || dsp.window == 0 || dsp.n_mels == 0) {
      throw std::invalid_argument("dsp.window, dsp.hop and dsp.n_mels must be positive");
    }
    if (!(model.gwrp_decay >= 0.0 && model.gwrp_decay <= 1.0)) {
      throw std::invalid_argument("model.gwrp_decay must lie in [0, 1]");
    }
    if (!(eval.threshold >= 0.0 && eval.threshold <= 1.0)) {
      throw std::invalid_argument("eval.threshold must lie in [0, 1]");
    }
    if (eval.batch == 0) throw std::invalid_argument("eval.batch must be >= 1");
    for (double a : eval.alphas) {
      if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("eval.alphas must be finite and >= 0");
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
  }();
  return names;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Key& k = find_key(key);
  try {
    k.set(config, value);
  } catch (const std::exception& e) {
    throw UsageError(key + ": invalid value '" + value + "' (" + e.what() + ")");
  }
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  return find_key(key).get(config);
}

std::vector<std::string> apply_yaml(RunConfig& config, const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  std::vector<std::string> set;
  if (root.IsNull()) return set;
  if (!root.IsMap()) throw UsageError("config: top level must be a mapping of sections");
  for (const auto& section : root) {
    const std::string name = section.first.as<std::string>();
    if (!section.second.IsMap()) {
      if (section.second.IsNull()) continue;
      throw UsageError("config: section '" + name + "' must be a mapping");
    }
    for (const auto& entry : section.second) {
      const std::string key = name + "." + entry.first.as<std::string>();
      set_config_value(config, key, scalar_text(entry.second, key));
      set.push_back(key);
    }
  }
  return set;
}

std::vector<std::string> apply_yaml_file(RunConfig& config, const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw UsageError("config: cannot read " + path.string() + ": " + e.what());
  }
  return apply_yaml(config, text);
}

std::string to_yaml(const RunConfig& config) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  std::string section;
  for (const auto& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << YAML::EndMap;
      out << YAML::Key << s << YAML::Value << YAML::BeginMap;
      section = s;
    }
    const std::string value = k.get(config);
    out << YAML::Key << k.name.substr(dot + 1) << YAML::Value;
    if (k.name == "data.snr" || k.name == "eval.alphas") {
      out << YAML::Flow << YAML::BeginSeq;
      for (const auto& item : split(value, ',')) out << item;
      out << YAML::EndSeq;
    } else {
      out << value;
    }
  }
  out << YAML::EndMap << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void write_config_echo(const std::filesystem::path& dir, const RunConfig& config) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "config.yaml", to_yaml(config));
}

}  // namespace wsed::cli
