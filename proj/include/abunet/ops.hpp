#pragma once

#include "abunet/activation_functions.hpp"
#include "abunet/tape.hpp"
#include "abunet/tensor.hpp"

#include <span>
#include <string_view>
#include <vector>

/// Differentiable primitives. Every function validates shapes, computes the
/// forward value and, when the tape records and an input requires a
/// gradient, appends a backward closure to the tape.
namespace abunet::ops {

/// [M,K] x [K,N] -> [M,N].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// Elementwise a + b, identical shapes.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);

/// x[..., C] + bias[C], broadcast over leading axes.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);

/// Elementwise a * b, identical shapes.
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

/// x * s where s holds a single (possibly trainable) value.
Tensor scale(Tape& tape, const Tensor& x, const Tensor& s);

/// x * c for a constant c.
Tensor scale(Tape& tape, const Tensor& x, double c);

Tensor sum(Tape& tape, const Tensor& x);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

/// Concatenates single-value tensors into a vector.
Tensor stack(Tape& tape, std::span<const Tensor> scalars);

/// 2-D convolution, stride 1, zero "same" padding, NHWC input and
/// [kh,kw,Cin,Cout] kernel. bias may be undefined.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& kernel, const Tensor& bias);

enum class PoolKind { Max, Average };

/// Window/stride pooling over H and W with "same" padding: output extent is
/// ceil(n / stride). Padded cells never win a max and are excluded from the
/// average.
Tensor pool2d(Tape& tape, const Tensor& x, PoolKind kind, std::size_t window = 3,
              std::size_t stride = 2);

/// Elementwise base activation without trainable shape (every kind but Swish).
Tensor unary(Tape& tape, BaseKind kind, const Tensor& x);

/// x * sigmoid(beta * x) with a single trainable beta.
Tensor swish(Tape& tape, const Tensor& x, const Tensor& beta);

/// sum_j w_j f_j(x) over the ABU members, elementwise. weights has one entry
/// per member; beta is the Swish member's shape.
Tensor blend(Tape& tape, const Tensor& x, const Tensor& weights, const Tensor& beta);

/// Differentiable effective_weights(). context names the owner in errors.
Tensor normalize_weights(Tape& tape, const Tensor& raw, NormMode mode, std::string_view context = {});

/// Inverted dropout with an externally drawn keep mask (1 keep, 0 drop):
/// y = x * mask / (1 - rate).
Tensor dropout(Tape& tape, const Tensor& x, std::span<const double> keep_mask, double rate);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.99;
  double epsilon = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel (last axis) batch normalization. Training mode uses batch
/// statistics and updates the running averages; evaluation mode uses the
/// running averages.
Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

/// Mean softmax cross-entropy of logits [B,C] against labels.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Tensor& logits, std::span<const int> labels);

} // namespace abunet::ops
