#include "abunet/optimizer.hpp"

#include "abunet/error.hpp"

#include <cmath>

namespace abunet {

std::string optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "momentum"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam")
    return OptimizerKind::Adam;
  if (name == "momentum")
    return OptimizerKind::Momentum;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or momentum)");
}

double momentum_learning_rate(const OptimizerConfig& cfg, std::uint64_t t, std::uint64_t steps) {
  if (steps <= 1)
    return cfg.lr_start;
  const double frac = static_cast<double>(std::min(t, steps - 1)) / static_cast<double>(steps - 1);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
}

Optimizer::Optimizer(OptimizerConfig config, std::uint64_t total_steps)
    : config_(config), total_steps_(total_steps) {
  if (config_.kind == OptimizerKind::Momentum && config_.lr_end > config_.lr_start)
    throw ConfigError("momentum schedule needs lr_end <= lr_start");
}

void Optimizer::step(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) {
    if (!p->tensor.has_grad())
      throw ConfigError("parameter '" + p->name + "' has no gradient");
    for (double g : p->tensor.grad())
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient for parameter '" + p->name + "' at step " + std::to_string(t_));
  }

  if (config_.kind == OptimizerKind::Adam) {
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_ + 1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_ + 1));
    for (Parameter* p : params) {
      auto theta = p->tensor.values();
      const auto g = p->tensor.grad();
      auto& m = first_[p->name];
      auto& v = second_[p->name];
      m.resize(theta.size(), 0.0);
      v.resize(theta.size(), 0.0);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        theta[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_epsilon);
      }
    }
  } else {
    const double lr = momentum_learning_rate(config_, t_, total_steps_);
    for (Parameter* p : params) {
      auto theta = p->tensor.values();
      const auto g = p->tensor.grad();
      auto& vel = first_[p->name];
      vel.resize(theta.size(), 0.0);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        vel[i] = config_.momentum * vel[i] + g[i];
        theta[i] -= lr * vel[i];
      }
    }
  }
  ++t_;
}

OptimizerSnapshot Optimizer::snapshot() const {
  OptimizerSnapshot s;
  s.kind = optimizer_name(config_.kind);
  s.step = t_;
  const char* first = config_.kind == OptimizerKind::Adam ? "m:" : "velocity:";
  for (const auto& [name, values] : first_)
    s.slots[first + name] = values;
  for (const auto& [name, values] : second_)
    s.slots["v:" + name] = values;
  return s;
}

void Optimizer::restore(const OptimizerSnapshot& snap) {
  if (snap.kind != optimizer_name(config_.kind))
    throw ConfigError("optimizer state is for '" + snap.kind + "', not '" + optimizer_name(config_.kind) + "'");
  first_.clear();
  second_.clear();
  for (const auto& [key, values] : snap.slots) {
    const auto colon = key.find(':');
    const std::string slot = key.substr(0, colon), name = key.substr(colon + 1);
    (slot == "v" ? second_ : first_)[name] = values;
  }
  t_ = snap.step;
}

} // namespace abunet
