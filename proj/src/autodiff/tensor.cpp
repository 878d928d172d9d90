#include "contir/autodiff/tensor.hpp"

#include <cmath>
#include <sstream>

#include "contir/error.hpp"

namespace contir::ad {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (element_count(shape_) != values_.size()) {
    throw ShapeError("Tensor: shape " + shape_string(shape_) + " needs " +
                     std::to_string(element_count(shape_)) + " values, got " +
                     std::to_string(values_.size()));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ShapeError("Tensor::item: tensor of shape " + shape_string(shape_) +
                     " is not a single value");
  }
  return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != values_.size()) {
    throw ShapeError("Tensor::reshaped: cannot view " + shape_string(shape_) +
                     " as " + shape_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace contir::ad
