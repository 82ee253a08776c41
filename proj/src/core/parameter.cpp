#include "abunet/parameter.hpp"

#include "abunet/error.hpp"

namespace abunet {

Tensor ParameterSet::add(std::string name, Tensor tensor, bool activation) {
  if (index_.contains(name))
    throw ConfigError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), tensor, activation});
  return tensor;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second];
}

Parameter& ParameterSet::at(const std::string& name) {
  return const_cast<Parameter&>(static_cast<const ParameterSet&>(*this).at(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    n += p.tensor.size();
  return n;
}

} // namespace abunet
