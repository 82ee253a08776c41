#include "abunet/activations.hpp"

#include "abunet/error.hpp"
#include "abunet/ops.hpp"

#include <array>

namespace abunet {

namespace {

constexpr std::array<BaseKind, 6> kBaseKinds = {BaseKind::Identity, BaseKind::Tanh, BaseKind::ReLU,
                                                BaseKind::ELU, BaseKind::SELU, BaseKind::Swish};
constexpr std::array<NormMode, 5> kNormModes = {NormMode::None, NormMode::Nrm, NormMode::Abs, NormMode::Pos,
                                                NormMode::Soft};

} // namespace

ActivationConfig ActivationConfig::parse(std::string_view name) {
  for (auto kind : kBaseKinds) {
    if (name == base_name(kind))
      return {Family::Fixed, kind, NormMode::None};
    if (name.starts_with("a_") && name.substr(2) == base_name(kind))
      return {Family::Scaled, kind, NormMode::None};
  }
  if (name == "abu")
    return {Family::Blend, BaseKind::Identity, NormMode::None};
  for (auto mode : kNormModes)
    if (mode != NormMode::None && name.starts_with("abu_") && name.substr(4) == norm_name(mode))
      return {Family::Blend, BaseKind::Identity, mode};
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string ActivationConfig::name() const {
  switch (family) {
  case Family::Fixed: return std::string(base_name(base));
  case Family::Scaled: return "a_" + std::string(base_name(base));
  case Family::Blend: return norm == NormMode::None ? "abu" : "abu_" + std::string(norm_name(norm));
  }
  return "?";
}

const std::vector<std::string>& ActivationConfig::all_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (auto kind : kBaseKinds)
      out.emplace_back(base_name(kind));
    for (auto kind : kBaseKinds)
      out.push_back("a_" + std::string(base_name(kind)));
    for (auto mode : kNormModes)
      out.push_back(ActivationConfig{Family::Blend, BaseKind::Identity, mode}.name());
    return out;
  }();
  return names;
}

Activation Activation::make(const ActivationConfig& config, int layer_index, ParameterSet& params) {
  Activation act;
  act.config_ = config;
  act.layer_index_ = layer_index;
  const std::string prefix = act.context() + "/";
  switch (config.family) {
  case ActivationConfig::Family::Fixed:
    break;
  case ActivationConfig::Family::Scaled:
    act.alphas_.push_back(params.add(prefix + "alpha", Tensor::scalar(1.0), true));
    break;
  case ActivationConfig::Family::Blend:
    for (std::size_t j = 0; j < kAbuSize; ++j)
      act.alphas_.push_back(params.add(prefix + "alpha" + std::to_string(j + 1),
                                       Tensor::scalar(1.0 / static_cast<double>(kAbuSize)), true));
    break;
  }
  const bool has_swish = config.family == ActivationConfig::Family::Blend || config.base == BaseKind::Swish;
  if (has_swish)
    act.beta_ = params.add(prefix + "beta", Tensor::scalar(1.0), true);
  return act;
}

Tensor Activation::apply(Tape& tape, const Tensor& x) const {
  switch (config_.family) {
  case ActivationConfig::Family::Fixed:
    if (config_.base == BaseKind::Swish)
      return ops::swish(tape, x, beta_);
    return config_.base == BaseKind::Identity ? x : ops::unary(tape, config_.base, x);
  case ActivationConfig::Family::Scaled: {
    Tensor f = config_.base == BaseKind::Swish ? ops::swish(tape, x, beta_)
               : config_.base == BaseKind::Identity ? x
                                                     : ops::unary(tape, config_.base, x);
    return ops::scale(tape, f, alphas_[0]);
  }
  case ActivationConfig::Family::Blend: {
    Tensor raw = ops::stack(tape, alphas_);
    Tensor weights = ops::normalize_weights(tape, raw, config_.norm, context());
    return ops::blend(tape, x, weights, beta_);
  }
  }
  return x;
}

std::vector<double> Activation::raw_weights() const {
  std::vector<double> out;
  for (const auto& a : alphas_)
    out.push_back(a.item());
  return out;
}

std::vector<double> Activation::effective_weights() const {
  const auto raw = raw_weights();
  if (config_.family != ActivationConfig::Family::Blend)
    return raw;
  return abunet::effective_weights(raw, config_.norm, context());
}

std::optional<double> Activation::beta() const {
  if (!beta_.defined())
    return std::nullopt;
  return beta_.item();
}

double Activation::eval(double x) const {
  const double b = beta_.defined() ? beta_.item() : 1.0;
  switch (config_.family) {
  case ActivationConfig::Family::Fixed:
    return eval_base(config_.base, x, b);
  case ActivationConfig::Family::Scaled:
    return alphas_[0].item() * eval_base(config_.base, x, b);
  case ActivationConfig::Family::Blend: {
    const auto w = effective_weights();
    double acc = 0.0;
    for (std::size_t j = 0; j < kAbuSize; ++j)
      acc += w[j] * eval_base(kAbuMembers[j], x, b);
    return acc;
  }
  }
  return x;
}

} // namespace abunet
