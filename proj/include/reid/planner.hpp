#pragma once

// Precision partitioning of a layer graph, parameter-byte accounting and
// the multiply-accumulate cost model for standard and separable convolutions.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "reid/layers.hpp"

namespace reid {

enum class OpKind : std::uint8_t {
  Conv,
  DepthwiseConv,
  PointwiseConv,
  Linear,
  BatchNorm,
  ReLU,
  AvgPool,
  ResidualAdd,
  Loss,
};

std::string to_string(OpKind kind);
/// Throws InvalidArgument for an unknown name.
OpKind parse_op_kind(const std::string& name);

enum class LayerPrecision : std::uint8_t { Binary16, Binary32 };

std::string to_string(LayerPrecision p);
LayerPrecision parse_layer_precision(const std::string& name);

struct ConvGeometry2d {
  ConvSpec spec;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  friend bool operator==(const ConvGeometry2d& a, const ConvGeometry2d& b) {
    return a.spec.kind == b.spec.kind && a.spec.kernel == b.spec.kernel &&
           a.spec.in_channels == b.spec.in_channels && a.spec.out_channels == b.spec.out_channels &&
           a.spec.stride == b.spec.stride && a.out_h == b.out_h && a.out_w == b.out_w;
  }
};

struct LayerEntry {
  std::string name;
  OpKind op = OpKind::Conv;
  std::uint64_t param_count = 0;
  std::optional<ConvGeometry2d> conv;

  friend bool operator==(const LayerEntry&, const LayerEntry&) = default;
};

struct LayerManifest {
  std::vector<LayerEntry> entries;

  /// Unique names; parameter-free kinds carry no parameters.
  void validate() const;
  friend bool operator==(const LayerManifest&, const LayerManifest&) = default;
};

/// One line per layer: name,op_kind,param_count[,K,M,N,stride,out_h,out_w].
/// Blank lines and lines starting with '#' are skipped.
LayerManifest parse_manifest(std::istream& in);
LayerManifest load_manifest(const std::string& path);
void write_manifest(std::ostream& out, const LayerManifest& manifest);

struct PrecisionPlan {
  std::map<std::string, LayerPrecision> assignment;

  LayerPrecision at(const std::string& layer) const;
  friend bool operator==(const PrecisionPlan&, const PrecisionPlan&) = default;
};

/// Lines of `name,precision` with precision binary16 or binary32.
PrecisionPlan parse_plan(std::istream& in);
/// Emits layers in manifest order when a manifest is given, else by name.
void write_plan(std::ostream& out, const PrecisionPlan& plan, const LayerManifest* order = nullptr);

/// Convolutions and GEMMs go to binary16; batch norm and the loss stay
/// binary32; parameter-free layers are tagged binary16.
PrecisionPlan partition(const LayerManifest& manifest);

PrecisionPlan uniform_plan(const LayerManifest& manifest, LayerPrecision precision);

struct SizeReport {
  std::uint64_t total_bytes = 0;
  std::vector<std::pair<std::string, std::uint64_t>> per_layer;
};

/// Sum of param_count * (2 for binary16, 4 for binary32).
SizeReport model_size_bytes(const LayerManifest& manifest, const PrecisionPlan& plan);

std::uint64_t mac_count(const ConvSpec& spec, std::size_t out_h, std::size_t out_w);

/// Depthwise K x K over M channels followed by a pointwise M -> N.
std::uint64_t separable_mac_count(std::size_t kernel, std::size_t in_channels, std::size_t out_channels,
                                  std::size_t out_h, std::size_t out_w);

/// Sum of mac_count over every manifest entry that carries conv geometry.
std::uint64_t manifest_mac_count(const LayerManifest& manifest);

}  // namespace reid
