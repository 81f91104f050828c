#include "hidfd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "hidfd/errors.hpp"

namespace hidfd {
namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor", "empty shape");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor", "zero extent in shape " + shape_string(shape));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (product(shape_) != values_.size()) {
    throw DimensionError("tensor", "shape " + shape_string(shape_) + " does not match " +
                                       std::to_string(values_.size()) + " values");
  }
}

double Tensor::item() const {
  if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_string(shape_));
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) noexcept { std::fill(values_.begin(), values_.end(), v); }

}  // namespace hidfd
