#include "abunet/tensor.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>

namespace abunet {

namespace {

std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

} // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<double>(shape_size(shape), 0.0), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
  for (auto extent : shape)
    if (extent == 0)
      throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  if (shape_size(shape) != values.size())
    throw ShapeError("tensor shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  storage_->id = next_tensor_id();
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
  storage_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

std::uint64_t Tensor::id() const { return storage_->id; }
const Shape& Tensor::shape() const { return storage_->shape; }
std::size_t Tensor::size() const { return storage_->values.size(); }
std::span<double> Tensor::values() { return storage_->values; }
std::span<const double> Tensor::values() const { return storage_->values; }

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return storage_->values[0];
}

bool Tensor::requires_grad() const { return storage_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { storage_->requires_grad = flag; }
bool Tensor::has_grad() const { return !storage_->grad.empty(); }

std::span<double> Tensor::grad() const {
  if (storage_->grad.empty())
    storage_->grad.assign(size(), 0.0);
  return storage_->grad;
}

void Tensor::zero_grad() const { storage_->grad.assign(size(), 0.0); }
void Tensor::clear_grad() const {
  storage_->grad.clear();
  storage_->grad.shrink_to_fit();
}

void Tensor::accumulate_grad(std::span<const double> delta) const {
  auto g = grad();
  if (delta.size() != g.size())
    throw ShapeError("gradient of " + std::to_string(delta.size()) +
                     " values accumulated into tensor of shape " + shape_str(shape()));
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] += delta[i];
}

bool Tensor::all_finite() const {
  return std::all_of(storage_->values.begin(), storage_->values.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::clone() const {
  Tensor copy(shape(), storage_->values, requires_grad());
  copy.storage_->grad = storage_->grad;
  return copy;
}

} // namespace abunet
