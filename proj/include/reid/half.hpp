#pragma once

// Software IEEE 754 binary16 (1 sign, 5 exponent, 10 significand bits).
// Conversions round to nearest, ties to even; subnormals are kept.

#include <cstddef>
#include <cstdint>
#include <span>

namespace reid {

struct Half16 {
  std::uint16_t bits = 0;

  static constexpr Half16 from_bits(std::uint16_t b) noexcept { return Half16{b}; }

  constexpr bool is_nan() const noexcept { return (bits & 0x7C00u) == 0x7C00u && (bits & 0x03FFu) != 0; }
  constexpr bool is_inf() const noexcept { return (bits & 0x7FFFu) == 0x7C00u; }
  constexpr bool is_zero() const noexcept { return (bits & 0x7FFFu) == 0; }

  friend constexpr bool operator==(Half16 a, Half16 b) noexcept { return a.bits == b.bits; }
};

namespace half_consts {
inline constexpr std::uint16_t kPosInf = 0x7C00;
inline constexpr std::uint16_t kNegInf = 0xFC00;
/// The only NaN pattern produced by conversions and arithmetic.
inline constexpr std::uint16_t kQuietNaN = 0x7E00;
inline constexpr float kMaxFinite = 65504.0f;
}  // namespace half_consts

Half16 f32_to_f16(float x) noexcept;

/// Rounds a binary64 value once to binary16.
Half16 f64_to_f16(double x) noexcept;

float f16_to_f32(Half16 h) noexcept;

/// Round-trip a binary32 value through binary16.
inline float quantize_f16(float x) noexcept { return f16_to_f32(f32_to_f16(x)); }

enum class HalfOp { Add, Sub, Mul, Div };

Half16 f16_arith(HalfOp op, Half16 a, Half16 b) noexcept;

/// Number of nonzero inputs whose binary16 image is a signed zero.
std::size_t count_flushed(std::span<const float> values) noexcept;

}  // namespace reid
