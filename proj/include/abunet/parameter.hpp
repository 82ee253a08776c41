#pragma once

#include "abunet/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace abunet {

struct Parameter {
  std::string name;
  Tensor tensor;
  /// Activation parameters (scaling weights, blending weights, Swish beta)
  /// are the only ones carried over by pre-trained initialization.
  bool activation = false;

  std::uint64_t id() const { return tensor.id(); }
};

/// Ordered registry of trainable tensors with unique hierarchical names such
/// as "conv1/kernel" or "act3/alpha2".
class ParameterSet {
public:
  Tensor add(std::string name, Tensor tensor, bool activation = false);

  bool contains(const std::string& name) const { return index_.contains(name); }
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  /// Total number of scalar values.
  std::size_t scalar_count() const;

private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

} // namespace abunet
