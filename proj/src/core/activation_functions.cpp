#include "abunet/activation_functions.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <numeric>

namespace abunet {

std::string_view base_name(BaseKind kind) {
  switch (kind) {
  case BaseKind::Identity: return "identity";
  case BaseKind::Tanh: return "tanh";
  case BaseKind::ReLU: return "relu";
  case BaseKind::ELU: return "elu";
  case BaseKind::SELU: return "selu";
  case BaseKind::Swish: return "swish";
  }
  return "?";
}

std::string_view norm_name(NormMode mode) {
  switch (mode) {
  case NormMode::None: return "none";
  case NormMode::Nrm: return "nrm";
  case NormMode::Abs: return "abs";
  case NormMode::Pos: return "pos";
  case NormMode::Soft: return "soft";
  }
  return "?";
}

namespace {

void require_beta(BaseKind kind, const double* beta) {
  if (kind == BaseKind::Swish && beta == nullptr)
    throw ConfigError("swish requires a beta parameter");
}

std::string degenerate_message(NormMode mode, double denominator, std::string_view context) {
  std::string msg = "degenerate ";
  msg += norm_name(mode);
  msg += " normalization";
  if (!context.empty()) {
    msg += " in ";
    msg += context;
  }
  msg += ": denominator " + std::to_string(denominator) + " below threshold";
  return msg;
}

} // namespace

std::vector<double> eval_base(BaseKind kind, std::span<const double> x, const double* beta) {
  require_beta(kind, beta);
  const double b = beta ? *beta : 1.0;
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [&](double v) { return eval_base(kind, v, b); });
  return out;
}

std::vector<double> grad_base(BaseKind kind, std::span<const double> x, const double* beta) {
  require_beta(kind, beta);
  const double b = beta ? *beta : 1.0;
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [&](double v) { return grad_base(kind, v, b); });
  return out;
}

std::vector<double> effective_weights(std::span<const double> raw, NormMode mode,
                                      std::string_view context) {
  std::vector<double> w(raw.begin(), raw.end());
  switch (mode) {
  case NormMode::None:
    return w;
  case NormMode::Nrm: {
    const double s = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (std::abs(s) <= kNormalizationThreshold)
      throw DegenerateNormalization(degenerate_message(mode, s, context));
    for (auto& v : w)
      v /= s;
    return w;
  }
  case NormMode::Abs: {
    double s = 0.0;
    for (double v : raw)
      s += std::abs(v);
    if (s <= kNormalizationThreshold)
      throw DegenerateNormalization(degenerate_message(mode, s, context));
    for (auto& v : w)
      v /= s;
    return w;
  }
  case NormMode::Pos: {
    double s = 0.0;
    for (auto& v : w) {
      v = std::max(v, 0.0);
      s += v;
    }
    if (s <= kNormalizationThreshold)
      throw DegenerateNormalization(degenerate_message(mode, s, context));
    for (auto& v : w)
      v /= s;
    return w;
  }
  case NormMode::Soft: {
    const double top = *std::max_element(raw.begin(), raw.end());
    double s = 0.0;
    for (auto& v : w) {
      v = std::exp(v - top);
      s += v;
    }
    for (auto& v : w)
      v /= s;
    return w;
  }
  }
  return w;
}

std::vector<double> effective_weights_vjp(std::span<const double> raw, NormMode mode,
                                          std::span<const double> grad_effective) {
  const std::size_t m = raw.size();
  std::vector<double> out(grad_effective.begin(), grad_effective.end());
  if (mode == NormMode::None)
    return out;

  const auto w = effective_weights(raw, mode);
  double gw = 0.0;
  for (std::size_t j = 0; j < m; ++j)
    gw += grad_effective[j] * w[j];

  switch (mode) {
  case NormMode::None:
    break;
  case NormMode::Nrm: {
    const double s = std::accumulate(raw.begin(), raw.end(), 0.0);
    for (std::size_t k = 0; k < m; ++k)
      out[k] = (grad_effective[k] - gw) / s;
    break;
  }
  case NormMode::Abs: {
    double s = 0.0;
    for (double v : raw)
      s += std::abs(v);
    for (std::size_t k = 0; k < m; ++k) {
      const double sign = raw[k] > 0.0 ? 1.0 : (raw[k] < 0.0 ? -1.0 : 0.0);
      out[k] = (grad_effective[k] - sign * gw) / s;
    }
    break;
  }
  case NormMode::Pos: {
    double s = 0.0;
    for (double v : raw)
      s += std::max(v, 0.0);
    for (std::size_t k = 0; k < m; ++k)
      out[k] = raw[k] > 0.0 ? (grad_effective[k] - gw) / s : 0.0;
    break;
  }
  case NormMode::Soft:
    for (std::size_t k = 0; k < m; ++k)
      out[k] = w[k] * (grad_effective[k] - gw);
    break;
  }
  return out;
}

} // namespace abunet
