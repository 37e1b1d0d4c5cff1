#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rtfm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient accumulator.
///
/// Rank 0 is a scalar (one value), rank 1 a vector, rank 2 a matrix whose
/// first extent is rows. Extents must be positive.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim(std::size_t axis) const;

  /// Matrix accessors; throw DimensionError unless rank() == 2.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * shape_[1] + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * shape_[1] + c];
  }

  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<const double> grad() const noexcept { return grad_; }
  /// Grad buffer, allocated as zeros on first use.
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad() { grad_.clear(); }

  bool all_finite() const noexcept;

  /// Reinterpret with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

/// Throws NumericError naming `where` if any value is NaN or Inf.
void require_finite(const Tensor& t, const char* where);

}  // namespace rtfm
