#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace reid {

enum class Precision : std::uint8_t { Binary32 = 0, Binary16Emulated = 1 };

std::string to_string(Precision p);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array. Values are stored as binary32; in
/// Binary16Emulated mode every write is quantized through binary16, so the
/// buffer only ever holds binary16-representable values.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Precision mode = Precision::Binary32);
  Tensor(Shape shape, std::vector<float> values, Precision mode = Precision::Binary32);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  Precision mode() const noexcept { return mode_; }

  std::span<const float> data() const noexcept { return data_; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }
  void set(std::size_t i, float value) noexcept;

  /// Copy converted to `mode`. Widening is exact; narrowing rounds once.
  Tensor as(Precision mode) const;
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
  Precision mode_ = Precision::Binary32;
};

/// Value of `x` as seen by an operation running in `mode`.
float read_as(float x, Precision mode) noexcept;

}  // namespace reid
