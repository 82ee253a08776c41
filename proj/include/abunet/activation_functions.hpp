#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace abunet {

enum class BaseKind { Identity, Tanh, ReLU, ELU, SELU, Swish };

/// How an ABU's raw blending weights map onto the weights actually applied.
enum class NormMode { None, Nrm, Abs, Pos, Soft };

std::string_view base_name(BaseKind kind);
std::string_view norm_name(NormMode mode);

inline constexpr double kEluAlpha = 1.0;
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

/// Smallest admissible normalization denominator.
inline constexpr double kNormalizationThreshold = 1e-8;

/// Members of every ABU, in blending-weight order.
inline constexpr std::array<BaseKind, 5> kAbuMembers = {BaseKind::Tanh, BaseKind::ELU, BaseKind::ReLU,
                                                        BaseKind::Identity, BaseKind::Swish};
inline constexpr std::size_t kAbuSize = kAbuMembers.size();

/// Logistic function, branching on the sign so exp() never overflows.
inline double sigmoid(double x) {
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// f(x); beta is the Swish shape and ignored by the other kinds.
inline double eval_base(BaseKind kind, double x, double beta = 1.0) {
  switch (kind) {
  case BaseKind::Identity: return x;
  case BaseKind::Tanh: return std::tanh(x);
  case BaseKind::ReLU: return x > 0.0 ? x : 0.0;
  case BaseKind::ELU: return x >= 0.0 ? x : kEluAlpha * std::expm1(x);
  case BaseKind::SELU: return x >= 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
  case BaseKind::Swish: return x * sigmoid(beta * x);
  }
  return x;
}

/// df/dx. The ReLU subgradient at 0 is 0.
inline double grad_base(BaseKind kind, double x, double beta = 1.0) {
  switch (kind) {
  case BaseKind::Identity: return 1.0;
  case BaseKind::Tanh: {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  }
  case BaseKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
  case BaseKind::ELU: return x >= 0.0 ? 1.0 : kEluAlpha * std::exp(x);
  case BaseKind::SELU: return x >= 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
  case BaseKind::Swish: {
    const double s = sigmoid(beta * x);
    return s + beta * x * s * (1.0 - s);
  }
  }
  return 1.0;
}

/// d swish(x; beta) / d beta = x^2 s (1 - s) with s = sigmoid(beta x).
inline double swish_grad_beta(double x, double beta) {
  const double s = sigmoid(beta * x);
  return x * x * s * (1.0 - s);
}

/// All ABU members at x in one pass: three transcendental calls instead of
/// one per member. Values are bit-identical to eval_base.
inline void abu_members(double x, double beta, double* f) {
  const double t = std::tanh(x);
  const double s = sigmoid(beta * x);
  f[0] = t;
  f[1] = x >= 0.0 ? x : kEluAlpha * std::expm1(x);
  f[2] = x > 0.0 ? x : 0.0;
  f[3] = x;
  f[4] = x * s;
}

/// Members, their x-derivatives and d swish / d beta at x.
inline void abu_member_grads(double x, double beta, double* f, double* df, double& dswish_dbeta) {
  const double t = std::tanh(x);
  const double s = sigmoid(beta * x);
  const double em1 = x >= 0.0 ? 0.0 : std::expm1(x);
  f[0] = t;
  f[1] = x >= 0.0 ? x : kEluAlpha * em1;
  f[2] = x > 0.0 ? x : 0.0;
  f[3] = x;
  f[4] = x * s;
  df[0] = 1.0 - t * t;
  df[1] = x >= 0.0 ? 1.0 : kEluAlpha * (em1 + 1.0);
  df[2] = x > 0.0 ? 1.0 : 0.0;
  df[3] = 1.0;
  df[4] = s + beta * x * s * (1.0 - s);
  dswish_dbeta = x * x * s * (1.0 - s);
}

/// Elementwise f over a range. Throws ConfigError when kind is Swish and no
/// beta is supplied.
std::vector<double> eval_base(BaseKind kind, std::span<const double> x, const double* beta);
std::vector<double> grad_base(BaseKind kind, std::span<const double> x, const double* beta);

/// Maps raw blending weights onto effective weights. Throws
/// DegenerateNormalization (naming `context`) when the denominator is below
/// kNormalizationThreshold.
std::vector<double> effective_weights(std::span<const double> raw, NormMode mode,
                                      std::string_view context = {});

/// Vector-Jacobian product of effective_weights: given dL/dw, returns dL/draw.
std::vector<double> effective_weights_vjp(std::span<const double> raw, NormMode mode,
                                          std::span<const double> grad_effective);

} // namespace abunet
