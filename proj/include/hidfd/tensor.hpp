#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hidfd {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major float64 array. Rank 1 tensors behave as a single row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
  bool is_scalar() const noexcept { return values_.size() == 1; }

  std::span<double> data() noexcept { return values_; }
  std::span<const double> data() const noexcept { return values_; }
  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols(), cols()};
  }
  const std::vector<double>& values() const noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

  double item() const;
  bool all_finite() const noexcept;
  void fill(double v) noexcept;

  bool requires_grad = false;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
};

// A trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() noexcept { grad.fill(0.0); }
};

}  // namespace hidfd
