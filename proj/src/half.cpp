#include "reid/half.hpp"

#include <bit>
#include <cmath>

namespace reid {

namespace {

// Round a non-negative value that is exactly representable in binary64 with
// fewer than 53 integer+fraction bits of interest to the nearest integer,
// ties to even. Independent of the floating-point environment.
double round_half_even(double q) noexcept {
  const double lower = std::floor(q);
  const double diff = q - lower;  // exact: q < 2^12
  if (diff > 0.5) return lower + 1.0;
  if (diff < 0.5) return lower;
  return std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
}

}  // namespace

Half16 f64_to_f16(double x) noexcept {
  if (std::isnan(x)) return Half16::from_bits(half_consts::kQuietNaN);

  const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
  const double a = std::fabs(x);

  // 65520 is the midpoint between 65504 and 2^16; the tie goes to the even
  // neighbour, which is the overflow side.
  if (a >= 65520.0) return Half16::from_bits(sign | half_consts::kPosInf);

  if (a < 0x1p-14) {
    // subnormal range: units of 2^-24; a result of 1024 encodes 2^-14 itself
    const double units = round_half_even(a * 0x1p24);
    return Half16::from_bits(static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(units)));
  }

  int exp2 = 0;
  std::frexp(a, &exp2);  // a = f * 2^exp2, f in [0.5, 1)
  int exponent = exp2 - 1;
  double significand = round_half_even(std::ldexp(a, 10 - exponent));  // [1024, 2048]
  if (significand == 2048.0) {
    significand = 1024.0;
    ++exponent;
  }
  const auto biased = static_cast<std::uint16_t>(exponent + 15);
  const auto mantissa = static_cast<std::uint16_t>(significand - 1024.0);
  return Half16::from_bits(static_cast<std::uint16_t>(sign | (biased << 10) | mantissa));
}

Half16 f32_to_f16(float x) noexcept { return f64_to_f16(static_cast<double>(x)); }

float f16_to_f32(Half16 h) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(h.bits & 0x8000u) << 16;
  const std::uint32_t exponent = (h.bits >> 10) & 0x1Fu;
  const std::uint32_t mantissa = h.bits & 0x03FFu;

  if (exponent == 0x1F) {
    if (mantissa != 0) return std::bit_cast<float>(0x7FC00000u);
    return std::bit_cast<float>(sign | 0x7F800000u);
  }
  if (exponent == 0) {
    // zero or subnormal: exact as a binary32 value
    const float magnitude = std::ldexp(static_cast<float>(mantissa), -24);
    return sign ? -magnitude : magnitude;
  }
  const std::uint32_t bits = sign | ((exponent + 112u) << 23) | (mantissa << 13);
  return std::bit_cast<float>(bits);
}

Half16 f16_arith(HalfOp op, Half16 a, Half16 b) noexcept {
  if (a.is_nan() || b.is_nan()) return Half16::from_bits(half_consts::kQuietNaN);
  const double x = f16_to_f32(a);
  const double y = f16_to_f32(b);
  // binary64 holds every binary16 sum, difference and product exactly, and
  // 53 >= 2*11 + 2 makes the rounded quotient safe to round again.
  double r = 0.0;
  switch (op) {
    case HalfOp::Add: r = x + y; break;
    case HalfOp::Sub: r = x - y; break;
    case HalfOp::Mul: r = x * y; break;
    case HalfOp::Div: r = x / y; break;
  }
  return f64_to_f16(r);
}

std::size_t count_flushed(std::span<const float> values) noexcept {
  std::size_t flushed = 0;
  for (float v : values) {
    if (v != 0.0f && f32_to_f16(v).is_zero()) ++flushed;
  }
  return flushed;
}

}  // namespace reid
