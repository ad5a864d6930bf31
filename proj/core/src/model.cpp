// SPDX-License-Identifier: Apache-2.0
#include "wsed/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wsed/error.hpp"
#include "wsed/rng.hpp"

namespace wsed {

ModelConfig ModelConfig::paper(std::size_t num_classes) {
  ModelConfig c;
  c.num_classes = num_classes;
  c.channels = {64, 128, 256, 512};
  return c;
}

ModelConfig ModelConfig::desk(std::size_t num_classes) {
  ModelConfig c;
  c.num_classes = num_classes;
  c.channels = {16, 32, 64, 128};
  return c;
}

std::string ModelConfig::profile() const {
  if (channels == std::array<std::size_t, 4>{64, 128, 256, 512}) return "paper";
  if (channels == std::array<std::size_t, 4>{16, 32, 64, 128}) return "desk";
  return "custom";
}

void ModelConfig::validate() const {
  if (num_classes == 0) throw std::invalid_argument("model: num_classes must be positive");
  if (mel_bins == 0 || mel_bins % kTimeMultiple != 0) {
    throw std::invalid_argument("model: mel_bins must be a positive multiple of 16");
  }
  for (auto c : channels) {
    if (c == 0) throw std::invalid_argument("model: channel counts must be positive");
  }
  if (kernel == 0 || kernel % 2 == 0 || padding * 2 + 1 != kernel) {
    throw std::invalid_argument("model: kernel must be odd with 'same' padding (kernel = 2*pad+1)");
  }
  if (!(gwrp_decay >= 0.0 && gwrp_decay <= 1.0)) {
    throw std::invalid_argument("model: gwrp_decay must lie in [0, 1]");
  }
}

std::size_t padded_frames(std::size_t frames) {
  return (frames + kTimeMultiple - 1) / kTimeMultiple * kTimeMultiple;
}

std::size_t SedModel::add_param(std::string name, Shape shape) {
  params_.push_back({std::move(name), Tensor::zeros(std::move(shape), true)});
  return params_.size() - 1;
}

SedModel::ConvBn SedModel::make_conv_bn(const std::string& block, std::size_t index, std::size_t cin,
                                        std::size_t cout) {
  const std::size_t k = config_.kernel;
  const std::string conv = block + ".conv" + std::to_string(index);
  ConvBn layer;
  layer.name = block + ".bn" + std::to_string(index);
  layer.weight = add_param(conv + ".weight", {cout, cin, k, k});
  layer.bias = add_param(conv + ".bias", {cout});
  layer.gamma = add_param(layer.name + ".weight", {cout});
  layer.beta = add_param(layer.name + ".bias", {cout});
  layer.stats = BatchNormStats(cout);
  return layer;
}

SedModel::SedModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& ch = config_.channels;
  const std::size_t c = config_.num_classes;

  std::size_t in = 1;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string prefix = "enc.block" + std::to_string(b + 1);
    enc_layers_.push_back(make_conv_bn(prefix, 1, in, ch[b]));
    enc_layers_.push_back(make_conv_bn(prefix, 2, ch[b], ch[b]));
    in = ch[b];
  }
  class_conv_ = {add_param("enc.class_conv.weight", {c, in, 1, 1}), add_param("enc.class_conv.bias", {c})};

  in = c;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t out = ch[3 - b];
    const std::string prefix = "dec.block" + std::to_string(b + 1);
    dec_layers_.push_back(make_conv_bn(prefix, 1, in, out));
    dec_layers_.push_back(make_conv_bn(prefix, 2, out, out));
    in = out;
  }
  reverse_conv_ = {add_param("dec.reverse_conv.weight", {1, in, 1, 1}), add_param("dec.reverse_conv.bias", {1})};

  for (auto* layers : {&enc_layers_, &dec_layers_}) {
    for (auto& l : *layers) {
      auto gamma = params_[l.gamma].tensor.data();
      std::fill(gamma.begin(), gamma.end(), 1.0);
    }
  }
  Rng rng(seed);
  for (auto& p : params_) {
    auto values = p.tensor.data();
    if (p.tensor.rank() == 4) {
      const auto& s = p.tensor.shape();
      const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
      const double bound = std::sqrt(6.0 / fan_in);
      for (auto& v : values) v = rng.uniform(-bound, bound);
    }
  }

  if (config_.pooling == PoolingKind::two_step_attention) {
    attention_ = TwoStepAttentionParams::init(c, rng);
    for (auto& nt : attention_->named()) params_.push_back(nt);
  }
}

std::vector<NamedTensor> SedModel::parameters_with_prefix(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (const auto& p : params_) {
    if (p.name.starts_with(prefix)) out.push_back(p);
  }
  return out;
}

Tensor SedModel::conv_bn_relu(Graph& g, const Tensor& x, ConvBn& layer, Mode mode) {
  const ops::Padding pad{config_.padding, config_.padding};
  Tensor y = ops::conv2d(g, x, params_[layer.weight].tensor, params_[layer.bias].tensor, pad);
  y = ops::batchnorm2d(g, y, params_[layer.gamma].tensor, params_[layer.beta].tensor, mode, layer.stats);
  return ops::relu(g, y);
}

Tensor SedModel::encode(Graph& g, const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != 1) {
    throw ShapeError("encoder: expected input [N,1,F,T], got " + shape_str(x.shape()));
  }
  if (x.dim(2) != config_.mel_bins) {
    throw ShapeError("encoder: input has " + std::to_string(x.dim(2)) + " mel bins, model expects " +
                     std::to_string(config_.mel_bins));
  }
  if (x.dim(3) % kTimeMultiple != 0) {
    throw ShapeError("encoder: time extent " + std::to_string(x.dim(3)) +
                     " is not a multiple of 16; pad the input first");
  }
  Tensor h = x;
  for (std::size_t b = 0; b < 4; ++b) {
    h = conv_bn_relu(g, h, enc_layers_[2 * b], mode);
    h = conv_bn_relu(g, h, enc_layers_[2 * b + 1], mode);
    h = ops::avgpool2d(g, h);
  }
  return ops::conv2d(g, h, params_[class_conv_.weight].tensor, params_[class_conv_.bias].tensor, {});
}

Tensor SedModel::decode(Graph& g, const Tensor& z, Mode mode) {
  if (z.rank() != 4 || z.dim(1) != config_.num_classes) {
    throw ShapeError("decoder: expected Z [N," + std::to_string(config_.num_classes) + ",F',T'], got " +
                     shape_str(z.shape()));
  }
  Tensor h = z;
  for (std::size_t b = 0; b < 4; ++b) {
    h = ops::upsample2x_nearest(g, h);
    h = conv_bn_relu(g, h, dec_layers_[2 * b], mode);
    h = conv_bn_relu(g, h, dec_layers_[2 * b + 1], mode);
  }
  return ops::conv2d(g, h, params_[reverse_conv_.weight].tensor, params_[reverse_conv_.bias].tensor, {});
}

Tensor SedModel::pool(Graph& g, const Tensor& z, std::optional<AttentionTrace>* trace) {
  switch (config_.pooling) {
    case PoolingKind::two_step_attention: {
      auto result = two_step_attention(g, z, *attention_);
      if (trace) *trace = std::move(result.trace);
      return result.probs;
    }
    case PoolingKind::gap: return ops::sigmoid(g, gap(g, z));
    case PoolingKind::gmp: return ops::sigmoid(g, gmp(g, z));
    case PoolingKind::gwrp: return ops::sigmoid(g, gwrp(g, z, config_.gwrp_decay));
  }
  throw std::logic_error("unreachable pooling kind");
}

ForwardResult SedModel::forward(Graph& g, const Tensor& x, Mode mode, bool with_decoder) {
  ForwardResult out;
  out.z = encode(g, x, mode);
  out.probs = pool(g, out.z, &out.trace);
  if (with_decoder) out.recon = decode(g, out.z, mode);
  return out;
}

std::vector<NamedArray> SedModel::state() const {
  std::vector<NamedArray> out;
  for (const auto& p : params_) {
    out.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  auto add_stats = [&](const std::vector<ConvBn>& layers) {
    for (const auto& l : layers) {
      const std::size_t c = l.stats.running_mean.size();
      out.push_back({l.name + ".running_mean", {c}, l.stats.running_mean});
      out.push_back({l.name + ".running_var", {c}, l.stats.running_var});
      out.push_back({l.name + ".initialized", {1}, {l.stats.initialized ? 1.0 : 0.0}});
    }
  };
  add_stats(enc_layers_);
  add_stats(dec_layers_);
  return out;
}

void SedModel::load_state(const std::vector<NamedArray>& state) {
  const auto expected = this->state();
  if (state.size() != expected.size()) {
    throw DataError("model state has " + std::to_string(state.size()) + " entries, expected " +
                    std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i].name != expected[i].name || state[i].shape != expected[i].shape) {
      throw DataError("model state entry " + std::to_string(i) + " is '" + state[i].name + "' " +
                      shape_str(state[i].shape) + ", expected '" + expected[i].name + "' " +
                      shape_str(expected[i].shape));
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].tensor.data();
    std::copy(state[i].values.begin(), state[i].values.end(), dst.begin());
  }
  std::size_t idx = params_.size();
  auto restore = [&](std::vector<ConvBn>& layers) {
    for (auto& l : layers) {
      l.stats.running_mean = state[idx++].values;
      l.stats.running_var = state[idx++].values;
      l.stats.initialized = state[idx++].values[0] != 0.0;
    }
  };
  restore(enc_layers_);
  restore(dec_layers_);
}

void SedModel::bind_parameters(const std::vector<Tensor>& tensors) {
  if (tensors.size() != params_.size()) {
    throw ShapeError("bind_parameters: " + std::to_string(tensors.size()) + " tensors for " +
                     std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].shape() != params_[i].tensor.shape()) {
      throw ShapeError("bind_parameters: '" + params_[i].name + "' expects " +
                       shape_str(params_[i].tensor.shape()) + ", got " + shape_str(tensors[i].shape()));
    }
    params_[i].tensor = tensors[i];
  }
  if (attention_) {
    const std::size_t base = params_.size() - 8;
    attention_->att1_weight = tensors[base];
    attention_->att1_bias = tensors[base + 1];
    attention_->cls1_weight = tensors[base + 2];
    attention_->cls1_bias = tensors[base + 3];
    attention_->att2_weight = tensors[base + 4];
    attention_->att2_bias = tensors[base + 5];
    attention_->cls2_weight = tensors[base + 6];
    attention_->cls2_bias = tensors[base + 7];
  }
}

void SedModel::zero_grad() {
  for (auto& p : params_) p.tensor.clear_grad();
}

void SedModel::set_unit_batchnorm_stats() {
  for (auto* layers : {&enc_layers_, &dec_layers_}) {
    for (auto& l : *layers) {
      const std::size_t c = l.stats.running_mean.size();
      l.stats.set(std::vector<double>(c, 0.0), std::vector<double>(c, 1.0));
    }
  }
}

}  // namespace wsed
