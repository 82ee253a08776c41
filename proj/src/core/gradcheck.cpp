#include "abunet/gradcheck.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace abunet {

GradientMap finite_diff_grad(const std::function<double()>& f, std::span<Tensor> params, double eps) {
  if (!(eps > 0.0))
    throw ConfigError("finite_diff_grad: eps must be positive");
  GradientMap out;
  for (auto& p : params) {
    auto values = p.values();
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f();
      values[i] = saved - eps;
      const double down = f();
      values[i] = saved;
      g[i] = (up - down) / (2.0 * eps);
    }
    out[p.id()] = std::move(g);
  }
  return out;
}

GradientMap collect_gradients(std::span<const Tensor> params) {
  GradientMap out;
  for (const auto& p : params) {
    auto g = p.grad();
    out[p.id()] = std::vector<double>(g.begin(), g.end());
  }
  return out;
}

void GradCheckResult::merge(const GradCheckResult& other) {
  checked += other.checked;
  failures += other.failures;
  if (other.worst_relative > worst_relative || worst_name.empty()) {
    worst_relative = other.worst_relative;
    worst_name = other.worst_name;
    worst_index = other.worst_index;
    worst_analytic = other.worst_analytic;
    worst_numeric = other.worst_numeric;
  }
  failure_messages.insert(failure_messages.end(), other.failure_messages.begin(), other.failure_messages.end());
}

GradCheckResult compare_gradients(std::string_view name, std::span<const double> analytic,
                                  std::span<const double> numeric, Tolerance tol) {
  if (analytic.size() != numeric.size())
    throw ShapeError("compare_gradients: size mismatch for " + std::string(name));
  GradCheckResult r;
  r.worst_name = name;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double diff = std::abs(a - n);
    const double scale = std::max(std::abs(a), std::abs(n));
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    const double floored = diff / std::max(scale, tol.absolute / tol.relative);
    const bool ok = std::isfinite(a) && std::isfinite(n) && (diff <= tol.absolute || rel <= tol.relative);
    ++r.checked;
    const double reported = std::isfinite(floored) ? floored : std::numeric_limits<double>::infinity();
    if (reported >= r.worst_relative) {
      r.worst_relative = reported;
      r.worst_index = i;
      r.worst_analytic = a;
      r.worst_numeric = n;
    }
    if (!ok) {
      ++r.failures;
      std::ostringstream msg;
      msg.precision(10);
      msg << name << "[" << i << "]: analytic " << a << " vs numeric " << n << " (rel " << rel << ")";
      r.failure_messages.push_back(msg.str());
    }
  }
  return r;
}

GradCheckResult check_gradients(const std::function<Tensor(Tape&)>& loss_fn, std::span<NamedTensor> params,
                                double eps, Tolerance tol, double analytic_scale) {
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  Tape tape;
  Tensor loss = loss_fn(tape);
  tape.backward(loss);

  std::vector<Tensor> tensors;
  for (auto& p : params)
    tensors.push_back(p.tensor);
  const GradientMap analytic = collect_gradients(tensors);
  const GradientMap numeric = finite_diff_grad(
      [&] {
        Tape probe(false);
        return loss_fn(probe).item();
      },
      tensors, eps);

  GradCheckResult total;
  for (auto& p : params) {
    std::vector<double> a = analytic.at(p.tensor.id());
    for (auto& v : a)
      v *= analytic_scale;
    total.merge(compare_gradients(p.name, a, numeric.at(p.tensor.id()), tol));
  }
  return total;
}

} // namespace abunet
