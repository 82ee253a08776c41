#pragma once

#include "abunet/checkpoint.hpp"
#include "abunet/parameter.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace abunet {

enum class OptimizerKind { Adam, Momentum };

std::string optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double momentum = 0.9;
  double lr_start = 0.01;
  double lr_end = 0.0004;
};

/// Learning rate of update t (0-based) out of `steps`, linear from
/// lr_start to lr_end inclusive.
double momentum_learning_rate(const OptimizerConfig& cfg, std::uint64_t t, std::uint64_t steps);

/// Adam (bias-corrected) or heavy-ball momentum v <- mu v + g,
/// theta <- theta - lr(t) v. State is keyed by parameter name.
class Optimizer {
public:
  Optimizer(OptimizerConfig config, std::uint64_t total_steps);

  /// Applies one update to every listed parameter from its current grad.
  /// Gradients are checked for NaN/Inf first; nothing is modified when
  /// one is found.
  void step(const std::vector<Parameter*>& params);

  std::uint64_t steps_taken() const { return t_; }
  const OptimizerConfig& config() const { return config_; }

  OptimizerSnapshot snapshot() const;
  void restore(const OptimizerSnapshot& snap);

private:
  OptimizerConfig config_;
  std::uint64_t total_steps_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::vector<double>> first_;
  std::map<std::string, std::vector<double>> second_;
};

} // namespace abunet
