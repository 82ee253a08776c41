#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace abunet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Which arithmetic the GEMM-backed primitives (matmul, conv2d) use.
/// Elementwise work and all storage stay 64-bit either way.
enum class Precision { F64, F32 };

/// Dense row-major array with a paired gradient accumulator.
///
/// Tensor is a handle: copies share storage, so a tape can hold on to the
/// inputs and outputs of every recorded primitive. Use clone() for a deep
/// copy.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  std::uint64_t id() const;

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t size() const;

  std::span<double> values();
  std::span<const double> values() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  /// Gradient storage is allocated lazily; has_grad() is false until the
  /// first accumulation or an explicit zero_grad(). The accumulator belongs
  /// to the shared storage, so it is writable through const handles.
  bool has_grad() const;
  std::span<double> grad() const;
  void zero_grad() const;
  void clear_grad() const;
  void accumulate_grad(std::span<const double> delta) const;

  bool all_finite() const;
  Tensor clone() const;

private:
  struct Storage {
    std::uint64_t id = 0;
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

} // namespace abunet
