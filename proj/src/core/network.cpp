#include "abunet/network.hpp"

#include "abunet/error.hpp"

#include <cmath>

namespace abunet {

std::string_view variant_name(Variant variant) {
  switch (variant) {
  case Variant::SMCN: return "smcn";
  case Variant::SMCN10: return "smcn10";
  case Variant::SMCN_S: return "smcn_s";
  case Variant::SMCN_BN: return "smcn_bn";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::SMCN, Variant::SMCN10, Variant::SMCN_S, Variant::SMCN_BN})
    if (name == variant_name(v))
      return v;
  throw ConfigError("unknown architecture '" + std::string(name) + "' (expected smcn, smcn10, smcn_s, smcn_bn)");
}

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
  case LayerKind::Conv2D: return "conv2d";
  case LayerKind::Dense: return "dense";
  case LayerKind::MaxPool: return "max_pool";
  case LayerKind::AvgPool: return "avg_pool";
  case LayerKind::Dropout: return "dropout";
  case LayerKind::BatchNorm: return "batch_norm";
  case LayerKind::Activation: return "activation";
  case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

std::vector<double> he_init(std::size_t count, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0)
    throw ConfigError("he_init: fan_in must be positive");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> out(count);
  for (auto& v : out)
    v = dist(rng);
  return out;
}

namespace {

constexpr double kDropoutRate = 0.5;
constexpr std::size_t kPoolWindow = 3;
constexpr std::size_t kPoolStride = 2;

std::size_t pooled(std::size_t n) { return (n + kPoolStride - 1) / kPoolStride; }

} // namespace

Network Network::build_smcn(Variant variant, const ActivationConfig& activation, int num_classes,
                            std::uint64_t seed, const ArchDims& dims) {
  if (num_classes < 2)
    throw ConfigError("num_classes must be at least 2");
  if (dims.input_hw == 0 || dims.input_channels == 0 || dims.conv_channels == 0 || dims.dense1 == 0 ||
      dims.dense2 == 0)
    throw ConfigError("network extents must be positive");

  Network net;
  net.variant_ = variant;
  net.activation_ = activation;
  net.num_classes_ = num_classes;
  net.dims_ = dims;

  Rng rng(seed);
  const bool use_dropout = variant == Variant::SMCN || variant == Variant::SMCN10;
  const bool use_bn = variant == Variant::SMCN_BN;
  const LayerKind pool_kind = variant == Variant::SMCN_S ? LayerKind::AvgPool : LayerKind::MaxPool;
  const std::size_t repeats = variant == Variant::SMCN10 ? 3 : 1;

  int hidden = 0;
  int convs = 0;
  int drops = 0;
  int pools = 0;

  auto activate = [&](std::size_t width) {
    ++hidden;
    const auto bn = [&] {
      const std::string name = "bn" + std::to_string(hidden);
      net.params_.add(name + "/gamma", Tensor(Shape{width}, std::vector<double>(width, 1.0)));
      net.params_.add(name + "/beta", Tensor(Shape{width}));
      net.layers_.push_back({LayerKind::BatchNorm, name, 0, width, width, 0.0,
                             static_cast<int>(net.batch_norms_.size())});
      net.batch_norms_.emplace_back(width);
    };
    if (use_bn && !dims.bn_after_activation)
      bn();
    net.layers_.push_back({LayerKind::Activation, "act" + std::to_string(hidden), 0, width, width, 0.0,
                           static_cast<int>(net.activations_.size())});
    net.activations_.push_back(Activation::make(activation, hidden, net.params_));
    if (use_bn && dims.bn_after_activation)
      bn();
  };
  auto conv = [&](std::size_t k, std::size_t in, std::size_t out) {
    const std::string name = "conv" + std::to_string(++convs);
    Shape shape{k, k, in, out};
    net.params_.add(name + "/kernel", Tensor(shape, he_init(shape_size(shape), k * k * in, rng)));
    const double bias = convs == 1 ? 0.0 : 0.1;
    net.params_.add(name + "/bias", Tensor(Shape{out}, std::vector<double>(out, bias)));
    net.layers_.push_back({LayerKind::Conv2D, name, k, in, out});
    activate(out);
  };
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out, bool hidden_layer) {
    net.params_.add(name + "/weight", Tensor(Shape{in, out}, he_init(in * out, in, rng)));
    net.params_.add(name + "/bias", Tensor(Shape{out}, std::vector<double>(out, 0.1)));
    net.layers_.push_back({LayerKind::Dense, name, 0, in, out});
    if (hidden_layer)
      activate(out);
  };
  auto dropout = [&] {
    if (use_dropout)
      net.layers_.push_back({LayerKind::Dropout, "drop" + std::to_string(++drops), 0, 0, 0, kDropoutRate});
  };
  auto pool = [&] { net.layers_.push_back({pool_kind, "pool" + std::to_string(++pools)}); };

  const std::size_t c = dims.conv_channels;
  conv(5, dims.input_channels, c);
  dropout();
  conv(3, c, c);
  pool();
  for (std::size_t r = 0; r < repeats; ++r) {
    conv(1, c, c);
    dropout();
    conv(5, c, c);
  }
  pool();
  const std::size_t side = pooled(pooled(dims.input_hw));
  const std::size_t flat = side * side * c;
  net.layers_.push_back({LayerKind::Flatten, "flatten", 0, flat, flat});
  dense("dense1", flat, dims.dense1, true);
  dropout();
  dense("dense2", dims.dense1, dims.dense2, true);
  dense("logits", dims.dense2, static_cast<std::size_t>(num_classes), false);
  return net;
}

std::size_t Network::count_layers(LayerKind kind) const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    n += l.kind == kind ? 1 : 0;
  return n;
}

void Network::zero_grad() {
  for (auto& p : params_.all())
    p.tensor.zero_grad();
}

Tensor Network::forward(Tape& tape, const Tensor& batch, const ForwardOptions& options) {
  if (batch.rank() != 4 || batch.dim(1) != dims_.input_hw || batch.dim(2) != dims_.input_hw ||
      batch.dim(3) != dims_.input_channels)
    throw ShapeError("network input must be [B," + std::to_string(dims_.input_hw) + "," +
                     std::to_string(dims_.input_hw) + "," + std::to_string(dims_.input_channels) + "], got " +
                     shape_str(batch.shape()));
  const bool training = options.mode == Mode::Train;
  const std::size_t b = batch.dim(0);
  std::size_t mask_slot = 0;

  Tensor h = batch;
  for (const auto& layer : layers_) {
    switch (layer.kind) {
    case LayerKind::Conv2D:
      h = ops::conv2d(tape, h, params_.at(layer.name + "/kernel").tensor, params_.at(layer.name + "/bias").tensor);
      break;
    case LayerKind::Dense:
      h = ops::matmul(tape, h, params_.at(layer.name + "/weight").tensor);
      h = ops::add_bias(tape, h, params_.at(layer.name + "/bias").tensor);
      break;
    case LayerKind::MaxPool:
      h = ops::pool2d(tape, h, ops::PoolKind::Max, kPoolWindow, kPoolStride);
      break;
    case LayerKind::AvgPool:
      h = ops::pool2d(tape, h, ops::PoolKind::Average, kPoolWindow, kPoolStride);
      break;
    case LayerKind::Dropout: {
      if (!training)
        break;
      std::vector<double> fresh;
      const std::vector<double>* mask = nullptr;
      if (options.frozen_masks && mask_slot < options.frozen_masks->size()) {
        mask = &(*options.frozen_masks)[mask_slot];
      } else {
        if (!options.rng)
          throw ConfigError("training-mode forward with dropout needs an rng or frozen masks");
        fresh.resize(h.size());
        const double keep = 1.0 - layer.rate;
        for (auto& m : fresh)
          m = uniform01(*options.rng) < keep ? 1.0 : 0.0;
        if (options.frozen_masks) {
          options.frozen_masks->push_back(std::move(fresh));
          mask = &options.frozen_masks->back();
        } else {
          mask = &fresh;
        }
      }
      ++mask_slot;
      h = ops::dropout(tape, h, *mask, layer.rate);
      break;
    }
    case LayerKind::BatchNorm:
      h = ops::batch_norm(tape, h, params_.at(layer.name + "/gamma").tensor, params_.at(layer.name + "/beta").tensor,
                          batch_norms_[static_cast<std::size_t>(layer.index)], training);
      break;
    case LayerKind::Activation: {
      const auto& act = activations_[static_cast<std::size_t>(layer.index)];
      if (options.probe)
        (*options.probe)(act.layer_index(), h.values());
      h = act.apply(tape, h);
      break;
    }
    case LayerKind::Flatten:
      h = ops::reshape(tape, h, Shape{b, h.size() / b});
      break;
    }
    if (!h.all_finite())
      throw NumericError("non-finite values after layer '" + layer.name + "'");
  }
  return h;
}

} // namespace abunet
