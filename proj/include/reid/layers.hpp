#pragma once

// Forward and backward kernels for the embedding network. Every kernel
// takes the precision it runs in: operands are read through binary16 when
// the mode is Binary16Emulated, accumulation is always binary32, and the
// result tensor is stored in the requested mode.
//
// Reductions run in a fixed order (batch, then channel, then row, then
// column), so results are bit-identical from run to run.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

enum class ConvKind : std::uint8_t { Standard, Depthwise, Pointwise };

std::string to_string(ConvKind kind);

/// Weight layouts: Standard and Pointwise use [N, M, K, K]; Depthwise uses
/// [M, 1, K, K] with N == M.
struct ConvSpec {
  ConvKind kind = ConvKind::Standard;
  std::size_t kernel = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  void validate() const;
  Shape weight_shape() const;
  std::size_t out_extent(std::size_t in_extent) const;
  std::size_t param_count() const { return shape_numel(weight_shape()); }
};

Tensor gemm(const Tensor& a, const Tensor& b, Precision mode);

/// y = x W^T + b. x: [batch, in], W: [out, in], b: [out].
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Precision mode);

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                            Precision mode);

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const ConvSpec& spec, Precision mode);

struct ConvGrads {
  Tensor input;
  Tensor weight;
};

ConvGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                          const ConvSpec& spec, Precision mode);

struct BnParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;
  /// running = momentum * running + (1 - momentum) * batch
  float momentum = 0.9f;

  static BnParams identity(std::size_t channels);
  std::size_t channels() const noexcept { return gamma.size(); }
  void validate() const;
};

/// Accepts [batch, C] or [batch, C, H, W]. Binary16 input is rejected with
/// PrecisionViolation: normalization statistics must be computed wide.
/// Training mode normalizes with batch statistics (biased variance) and
/// folds them into the running statistics (unbiased variance).
Tensor batchnorm_forward(const Tensor& x, BnParams& params, bool training);

struct BnGrads {
  Tensor input;
  std::vector<float> gamma;
  std::vector<float> beta;
};

/// Gradients of the training-mode forward, recomputing batch statistics from x.
BnGrads batchnorm_backward(const Tensor& x, const BnParams& params, const Tensor& grad_out);

Tensor relu(const Tensor& x);
/// Passes grad_out where x > 0; zero elsewhere, including x == 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

/// Non-overlapping (kh, kw) window means over an NCHW tensor.
Tensor avgpool2d(const Tensor& x, std::size_t kh, std::size_t kw);
Tensor avgpool2d_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t kh,
                          std::size_t kw);

/// Output precision is the narrower of the two inputs.
Tensor residual_add(const Tensor& x, const Tensor& fx);

struct ResidualGrads {
  Tensor shortcut;
  Tensor branch;
};

ResidualGrads residual_add_backward(const Tensor& grad_out);

}  // namespace reid
