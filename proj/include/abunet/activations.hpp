#pragma once

#include "abunet/activation_functions.hpp"
#include "abunet/parameter.hpp"
#include "abunet/tape.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace abunet {

/// One layer's activation as named on the command line and in run files:
/// "relu" (fixed), "a_relu" (adaptively scaled), "abu" / "abu_soft" etc.
struct ActivationConfig {
  enum class Family { Fixed, Scaled, Blend };

  Family family = Family::Fixed;
  BaseKind base = BaseKind::ReLU;
  NormMode norm = NormMode::None;

  static ActivationConfig parse(std::string_view name);
  std::string name() const;
  bool adaptive() const { return family != Family::Fixed; }

  /// The 17 recognised names, fixed ones first.
  static const std::vector<std::string>& all_names();

  friend bool operator==(const ActivationConfig&, const ActivationConfig&) = default;
};

/// Per-layer activation instance. Its trainable values live in the
/// ParameterSet it was created with: "act{i}/alpha" for a scaled function,
/// "act{i}/alpha{j}" (j = 1..5) for an ABU, "act{i}/beta" for any Swish.
class Activation {
public:
  static Activation make(const ActivationConfig& config, int layer_index, ParameterSet& params);

  Tensor apply(Tape& tape, const Tensor& x) const;

  const ActivationConfig& config() const { return config_; }
  int layer_index() const { return layer_index_; }

  /// Scaling weight (one value) or blending weights (five); empty when fixed.
  std::vector<double> raw_weights() const;
  std::vector<double> effective_weights() const;
  std::optional<double> beta() const;

  /// g_i(x) with the current parameter values.
  double eval(double x) const;

  const std::vector<Tensor>& alpha_tensors() const { return alphas_; }
  const Tensor& beta_tensor() const { return beta_; }
  std::string context() const { return "act" + std::to_string(layer_index_); }

private:
  ActivationConfig config_;
  int layer_index_ = 0;
  std::vector<Tensor> alphas_;
  Tensor beta_;
};

} // namespace abunet
