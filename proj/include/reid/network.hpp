#pragma once

// The toy embedding network trained by the mixed-precision trainer:
//
//   stem (3x3 conv) -> bn1 -> relu1 --------------------------+
//     -> dw (3x3 depthwise) -> bn2 -> relu2 -> pw (1x1) -> bn3 -> add -> relu3
//     -> pool (full-map average) -> fc -> embedding
//
// Each layer runs in the precision its PrecisionPlan entry assigns. Tensors
// are converted at layer boundaries, so a binary16 layer feeding a batch
// norm hands over an exactly widened binary32 tensor.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "reid/layers.hpp"
#include "reid/planner.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct NetGeometry {
  std::size_t in_channels = 1;
  std::size_t height = 8;
  std::size_t width = 4;
  std::size_t channels = 16;
  std::size_t embedding_dim = 16;

  std::size_t input_dim() const noexcept { return in_channels * height * width; }
  void validate() const;
  friend bool operator==(const NetGeometry&, const NetGeometry&) = default;
};

struct Parameter {
  std::string name;   // e.g. "stem.weight"
  std::string layer;  // manifest layer that owns it
  Tensor value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

using ParameterSet = std::vector<Parameter>;

/// Parameter and running-statistics layout in a fixed order.
ParameterSet make_parameters(const NetGeometry& g);
ParameterSet make_bn_buffers(const NetGeometry& g);

/// Layer graph with parameter counts (batch norm counts all four vectors).
LayerManifest network_manifest(const NetGeometry& g);

ConvSpec stem_spec(const NetGeometry& g);
ConvSpec depthwise_spec(const NetGeometry& g);
ConvSpec pointwise_spec(const NetGeometry& g);

/// Activations kept for the backward pass.
struct ForwardTrace {
  Tensor input;
  Tensor stem_out, bn1_out, relu1_out;
  Tensor dw_out, bn2_out, relu2_out;
  Tensor pw_out, bn3_out;
  Tensor add_out, relu3_out;
  Tensor pooled;     // [N, C]
  Tensor embedding;  // [N, D], binary32
  ParameterSet buffers_after;  // running statistics after this pass
};

/// `input` is [N, in_channels, height, width]. Training mode uses batch
/// statistics; the updated running statistics land in the trace, leaving
/// `buffers` untouched.
ForwardTrace network_forward(const NetGeometry& g, const ParameterSet& working, const ParameterSet& buffers,
                             const PrecisionPlan& plan, const Tensor& input, bool training);

/// Parameter gradients aligned with make_parameters(); each tensor is in
/// the precision of its layer.
std::vector<Tensor> network_backward(const NetGeometry& g, const ParameterSet& working,
                                     const ParameterSet& buffers, const PrecisionPlan& plan,
                                     const ForwardTrace& trace, const Tensor& grad_embedding);

Precision layer_mode(const PrecisionPlan& plan, const std::string& layer);

}  // namespace reid
