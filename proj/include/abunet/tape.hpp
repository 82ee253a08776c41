#pragma once

#include "abunet/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

namespace abunet {

enum class OpKind {
  MatMul,
  Conv2D,
  Add,
  AddBias,
  Mul,
  ScalarMul,
  Sum,
  Reshape,
  Stack,
  MaxPool,
  AvgPool,
  Unary,
  Swish,
  Blend,
  Normalize,
  Dropout,
  BatchNorm,
  SoftmaxCrossEntropy,
};

std::string_view op_name(OpKind kind);

/// Record of the primitives executed during one forward pass.
///
/// Primitives append a node holding their inputs, output and a closure that
/// pushes the output gradient back to the inputs. A tape that is not
/// recording (evaluation) executes primitives without storing anything.
class Tape {
public:
  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  explicit Tape(bool recording = true, Precision precision = Precision::F64)
      : recording_(recording), precision_(precision) {}

  static Tape no_grad(Precision precision = Precision::F64) { return Tape(false, precision); }

  bool recording() const { return recording_; }
  Precision precision() const { return precision_; }

  /// True when an op on these inputs has to be recorded.
  bool needs_grad(std::initializer_list<const Tensor*> inputs) const;

  void record(OpKind kind, std::vector<Tensor> inputs, const Tensor& output,
              std::function<void()> backward);

  /// Accumulates d(loss)/d(leaf) into every leaf tensor that requires a
  /// gradient. Intermediate gradients are reset first, so calling this twice
  /// doubles the leaf gradients.
  void backward(const Tensor& loss);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

private:
  bool recording_;
  Precision precision_;
  std::vector<Node> nodes_;
};

} // namespace abunet
