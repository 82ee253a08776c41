#pragma once

#include "abunet/tape.hpp"
#include "abunet/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace abunet {

/// Tensor id -> gradient values.
using GradientMap = std::map<std::uint64_t, std::vector<double>>;

/// Central differences (f(t + eps) - f(t - eps)) / (2 eps) for every
/// coordinate of every tensor in `params`. The closure must read the tensors
/// in place and be deterministic: dropout masks have to be frozen by the
/// caller. Values are restored exactly afterwards.
GradientMap finite_diff_grad(const std::function<double()>& f, std::span<Tensor> params, double eps = 1e-5);

/// Snapshot of the gradients currently accumulated in `params`.
GradientMap collect_gradients(std::span<const Tensor> params);

struct Tolerance {
  double relative = 1e-4;
  double absolute = 1e-7;
};

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failures = 0;
  /// Largest |a - n| / max(|a|, |n|, absolute / relative). A value passes
  /// exactly when this is at most the relative tolerance.
  double worst_relative = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<std::string> failure_messages;

  bool passed() const { return failures == 0; }
  void merge(const GradCheckResult& other);
};

/// A coordinate passes when |a - n| <= absolute or |a - n| / max(|a|,|n|) <= relative.
GradCheckResult compare_gradients(std::string_view name, std::span<const double> analytic,
                                  std::span<const double> numeric, Tolerance tol = {});

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Builds the loss on a fresh tape, backpropagates, and compares every
/// listed tensor's gradient against finite differences. `analytic_scale`
/// multiplies the analytic gradient before the comparison (1.0 except for
/// negative-control fixtures).
GradCheckResult check_gradients(const std::function<Tensor(Tape&)>& loss_fn,
                                std::span<NamedTensor> params, double eps = 1e-5, Tolerance tol = {},
                                double analytic_scale = 1.0);

} // namespace abunet
