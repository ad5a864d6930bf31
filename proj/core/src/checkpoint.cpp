// SPDX-License-Identifier: Apache-2.0
#include "wsed/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "wsed/error.hpp"
#include "wsed/text.hpp"

namespace wsed {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

const std::string& Checkpoint::config_value(const std::string& key) const {
  for (const auto& [k, v] : config) {
    if (k == key) return v;
  }
  throw DataError("checkpoint lacks configuration key '" + key + "'");
}

namespace {

class Writer {
 public:
  template <typename T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void doubles(const std::vector<double>& v) {
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  void record(const NamedArray& a) {
    if (a.values.size() != shape_numel(a.shape)) {
      throw ShapeError("checkpoint: tensor '" + a.name + "' payload does not match its shape");
    }
    str(a.name);
    put<std::uint8_t>(kDtypeF64);
    put<std::uint32_t>(static_cast<std::uint32_t>(a.shape.size()));
    for (auto e : a.shape) put<std::uint64_t>(e);
    doubles(a.values);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw DataError("checkpoint truncated");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  NamedArray record() {
    NamedArray a;
    a.name = str();
    const auto dtype = get<std::uint8_t>();
    if (dtype != kDtypeF64) {
      throw DataError("checkpoint: tensor '" + a.name + "' has unsupported dtype tag " + std::to_string(dtype));
    }
    const auto rank = get<std::uint32_t>();
    for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(get<std::uint64_t>());
    a.values = doubles(shape_numel(a.shape));
    return a;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.norm_mean.size() != ckpt.norm_std.size()) {
    throw ShapeError("checkpoint: normalization mean/std length mismatch");
  }
  Writer w;
  w.put<char>('W');
  w.put<char>('S');
  w.put<char>('E');
  w.put<char>('D');
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.config.size()));
  for (const auto& [k, v] : ckpt.config) {
    w.str(k);
    w.str(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.norm_mean.size()));
  w.doubles(ckpt.norm_mean);
  w.doubles(ckpt.norm_std);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) w.record(t);
  w.put<std::uint64_t>(ckpt.adam_step);
  w.put<double>(ckpt.adam.lr);
  w.put<double>(ckpt.adam.beta1);
  w.put<double>(ckpt.adam.beta2);
  w.put<double>(ckpt.adam.eps);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.adam_moments.size()));
  for (const auto& t : ckpt.adam_moments) w.record(t);
  w.put<std::uint64_t>(ckpt.epoch);
  w.str(ckpt.rng_state);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != "WSED") throw DataError("not a checkpoint (bad magic)");
  Reader r(bytes.substr(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  const auto n_config = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_config; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    ckpt.config.emplace_back(std::move(k), std::move(v));
  }
  const auto n_bins = r.get<std::uint32_t>();
  ckpt.norm_mean = r.doubles(n_bins);
  ckpt.norm_std = r.doubles(n_bins);
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) ckpt.tensors.push_back(r.record());
  ckpt.adam_step = r.get<std::uint64_t>();
  ckpt.adam.lr = r.get<double>();
  ckpt.adam.beta1 = r.get<double>();
  ckpt.adam.beta2 = r.get<double>();
  ckpt.adam.eps = r.get<double>();
  const auto n_moments = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_moments; ++i) ckpt.adam_moments.push_back(r.record());
  ckpt.epoch = r.get<std::uint64_t>();
  ckpt.rng_state = r.str();
  if (!r.done()) throw DataError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_text_file(path));
}

}  // namespace wsed
