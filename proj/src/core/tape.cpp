#include "abunet/tape.hpp"

#include "abunet/error.hpp"

#include <unordered_set>

namespace abunet {

std::string_view op_name(OpKind kind) {
  switch (kind) {
  case OpKind::MatMul: return "matmul";
  case OpKind::Conv2D: return "conv2d";
  case OpKind::Add: return "add";
  case OpKind::AddBias: return "add_bias";
  case OpKind::Mul: return "mul";
  case OpKind::ScalarMul: return "scalar_mul";
  case OpKind::Sum: return "sum";
  case OpKind::Reshape: return "reshape";
  case OpKind::Stack: return "stack";
  case OpKind::MaxPool: return "max_pool";
  case OpKind::AvgPool: return "avg_pool";
  case OpKind::Unary: return "unary";
  case OpKind::Swish: return "swish";
  case OpKind::Blend: return "blend";
  case OpKind::Normalize: return "normalize";
  case OpKind::Dropout: return "dropout";
  case OpKind::BatchNorm: return "batch_norm";
  case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

bool Tape::needs_grad(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_)
    return false;
  for (const Tensor* t : inputs)
    if (t && t->defined() && t->requires_grad())
      return true;
  return false;
}

void Tape::record(OpKind kind, std::vector<Tensor> inputs, const Tensor& output,
                  std::function<void()> backward) {
  for (const auto& in : inputs)
    if (in.defined() && in.id() >= output.id())
      throw TapeError(std::string(op_name(kind)) + ": input recorded after its consumer");
  nodes_.push_back(Node{kind, std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (nodes_.empty())
    throw TapeError("backward called before any forward pass was recorded");
  if (!loss.defined() || loss.size() != 1)
    throw TapeError("backward requires a scalar loss, got shape " +
                    (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));

  bool produced_here = false;
  for (auto& node : nodes_) {
    node.output.zero_grad();
    produced_here = produced_here || node.output.id() == loss.id();
  }
  if (!produced_here)
    throw TapeError("loss tensor was not produced on this tape");

  Tensor seed = loss;
  seed.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    it->backward();
}

} // namespace abunet
