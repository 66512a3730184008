#include "reid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "reid/error.hpp"
#include "reid/half.hpp"

namespace reid {

std::string to_string(Precision p) {
  return p == Precision::Binary32 ? "binary32" : "binary16";
}

std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

float read_as(float x, Precision mode) noexcept {
  return mode == Precision::Binary16Emulated ? quantize_f16(x) : x;
}

Tensor::Tensor(Shape shape, Precision mode)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f), mode_(mode) {}

Tensor::Tensor(Shape shape, std::vector<float> values, Precision mode)
    : shape_(std::move(shape)), data_(std::move(values)), mode_(mode) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not hold " +
                     std::to_string(data_.size()) + " values");
  }
  if (mode_ == Precision::Binary16Emulated) {
    for (float& v : data_) v = quantize_f16(v);
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[axis];
}

void Tensor::set(std::size_t i, float value) noexcept { data_[i] = read_as(value, mode_); }

Tensor Tensor::as(Precision mode) const { return Tensor(shape_, data_, mode); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace reid
