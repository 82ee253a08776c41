#pragma once

#include "abunet/activations.hpp"
#include "abunet/ops.hpp"
#include "abunet/parameter.hpp"
#include "abunet/rng.hpp"
#include "abunet/tape.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace abunet {

enum class Variant { SMCN, SMCN10, SMCN_S, SMCN_BN };

std::string_view variant_name(Variant variant);
Variant parse_variant(std::string_view name);

/// Extents of an SMCN. The defaults are the full-size network; the desk
/// variant shrinks every width for CPU-scale experiments.
struct ArchDims {
  std::size_t input_hw = 32;
  std::size_t input_channels = 3;
  std::size_t conv_channels = 64;
  std::size_t dense1 = 384;
  std::size_t dense2 = 192;
  /// SMCN_BN only: normalize after the activation instead of before it.
  bool bn_after_activation = false;

  static ArchDims full() { return {}; }
  static ArchDims desk() { return {32, 3, 16, 96, 48, false}; }

  friend bool operator==(const ArchDims&, const ArchDims&) = default;
};

enum class LayerKind { Conv2D, Dense, MaxPool, AvgPool, Dropout, BatchNorm, Activation, Flatten };

std::string_view layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind;
  std::string name;
  std::size_t kernel = 0; ///< square conv kernel extent
  std::size_t in = 0;     ///< conv input channels or dense input width
  std::size_t out = 0;    ///< conv output channels or dense output width
  double rate = 0.0;      ///< dropout rate
  int index = -1;         ///< activation / batch-norm slot
};

enum class Mode { Train, Eval };

/// Receives the pre-activation tensor of hidden layer `layer` (1-based).
using PreactProbe = std::function<void(int layer, std::span<const double> preactivation)>;

struct ForwardOptions {
  Mode mode = Mode::Eval;
  /// Source of dropout masks in training mode.
  Rng* rng = nullptr;
  /// When set, dropout masks are recorded here on the first call and
  /// replayed on later calls, which makes training-mode forwards
  /// deterministic for finite-difference checks.
  std::vector<std::vector<double>>* frozen_masks = nullptr;
  const PreactProbe* probe = nullptr;
};

/// Samples Normal(0, sqrt(2 / fan_in)).
std::vector<double> he_init(std::size_t count, std::size_t fan_in, Rng& rng);

/// An SMCN instance: layer list, parameters, activations and batch-norm
/// state. Move-only, since parameter tensors are shared handles.
class Network {
public:
  static Network build_smcn(Variant variant, const ActivationConfig& activation, int num_classes,
                            std::uint64_t seed, const ArchDims& dims = ArchDims::full());

  Network(Network&&) = default;
  Network& operator=(Network&&) = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  /// batch: [B, H, W, C] -> logits [B, num_classes].
  Tensor forward(Tape& tape, const Tensor& batch, const ForwardOptions& options = {});

  Variant variant() const { return variant_; }
  const ActivationConfig& activation_config() const { return activation_; }
  int num_classes() const { return num_classes_; }
  const ArchDims& dims() const { return dims_; }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::vector<Activation>& activations() { return activations_; }
  const std::vector<Activation>& activations() const { return activations_; }
  std::vector<ops::BatchNormState>& batch_norms() { return batch_norms_; }
  const std::vector<ops::BatchNormState>& batch_norms() const { return batch_norms_; }

  std::size_t param_count() const { return params_.scalar_count(); }
  std::size_t hidden_layers() const { return activations_.size(); }
  std::size_t count_layers(LayerKind kind) const;

  void zero_grad();

private:
  Network() = default;

  Variant variant_ = Variant::SMCN;
  ActivationConfig activation_;
  int num_classes_ = 10;
  ArchDims dims_;
  std::vector<LayerSpec> layers_;
  ParameterSet params_;
  std::vector<Activation> activations_;
  std::vector<ops::BatchNormState> batch_norms_;
};

} // namespace abunet
