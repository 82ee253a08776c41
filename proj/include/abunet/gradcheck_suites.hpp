#pragma once

#include "abunet/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace abunet {

struct SuiteReport {
  std::string component;
  std::size_t cases = 0;
  GradCheckResult result;
};

struct SuiteOptions {
  std::uint64_t seed = 1;
  std::size_t cases = 100;
  double eps = 1e-5;
  Tolerance tolerance{};
  /// Multiplies analytic gradients before comparison. Anything but 1.0 is a
  /// negative control and must make the suites fail.
  double analytic_scale = 1.0;
};

/// One report per activation config (all 17 names).
std::vector<SuiteReport> activation_gradchecks(const SuiteOptions& options);

/// One report per primitive / layer type.
std::vector<SuiteReport> layer_gradchecks(const SuiteOptions& options);

/// Whole-network checks on tiny SMCNs (8x8 inputs, 4 channels) of every
/// variant, training mode with frozen dropout masks. `cases` is the number
/// of activation configs exercised per variant (capped at 17).
std::vector<SuiteReport> network_gradchecks(const SuiteOptions& options);

/// "activations": the activation suite; "network": layers and whole
/// networks; "all": everything.
std::vector<SuiteReport> gradcheck_scope(const std::string& scope, const SuiteOptions& options);

} // namespace abunet
