#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures/published_sizes.hpp"
#include "reid/error.hpp"
#include "reid/planner.hpp"

using namespace reid;

namespace {

constexpr auto B16 = LayerPrecision::Binary16;
constexpr auto B32 = LayerPrecision::Binary32;

LayerManifest manifest_of(const std::string& text) {
  std::istringstream in(text);
  return parse_manifest(in);
}

LayerManifest load(const fixtures::PublishedSize& p) { return load_manifest(fixtures::manifest_path(REID_DATA_DIR, p)); }

// Bytes computed straight from the file: BN and Loss rows at 4 bytes per
// parameter, everything else at 2 (mixed) or all at 4 (binary32).
struct FileBytes {
  double binary32 = 0, mixed = 0;
};

FileBytes bytes_from_file(const fixtures::PublishedSize& p) {
  std::ifstream in(fixtures::manifest_path(REID_DATA_DIR, p));
  FileBytes out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string name, kind, count;
    std::getline(ss, name, ',');
    std::getline(ss, kind, ',');
    std::getline(ss, count, ',');
    const double n = std::stod(count);
    out.binary32 += 4 * n;
    out.mixed += (kind == "BatchNorm" || kind == "Loss" ? 4 : 2) * n;
  }
  return out;
}

double mb(std::uint64_t bytes) { return static_cast<double>(bytes) / 1e6; }

double relative(double got, double want) { return std::fabs(got - want) / want; }

ConvSpec spec_of(ConvKind kind, std::size_t k, std::size_t m, std::size_t n) {
  ConvSpec s;
  s.kind = kind;
  s.kernel = k;
  s.in_channels = m;
  s.out_channels = n;
  s.padding = k / 2;
  return s;
}

}  // namespace

TEST(Partition, ConvBnRelu) {
  const auto plan = partition(manifest_of("conv,Conv,864,3,3,32,1,8,8\nbn,BatchNorm,128\nrelu,ReLU,0\n"));
  EXPECT_EQ(plan.assignment.size(), 3u);
  EXPECT_EQ(plan.at("conv"), B16);
  EXPECT_EQ(plan.at("bn"), B32);
  EXPECT_EQ(plan.at("relu"), B16);
}

TEST(Partition, LossOnlyAndEmpty) {
  const auto plan = partition(manifest_of("loss,Loss,0\n"));
  EXPECT_EQ(plan.assignment.size(), 1u);
  EXPECT_EQ(plan.at("loss"), B32);
  EXPECT_TRUE(partition(LayerManifest{}).assignment.empty());
}

TEST(Partition, EveryKind) {
  const auto plan = partition(manifest_of(
      "a,Conv,1\nb,DepthwiseConv,1\nc,PointwiseConv,1\nd,Linear,1\ne,BatchNorm,4\nf,ReLU,0\ng,AvgPool,0\n"
      "h,ResidualAdd,0\ni,Loss,0\n"));
  for (const char* name : {"a", "b", "c", "d", "f", "g", "h"}) EXPECT_EQ(plan.at(name), B16) << name;
  EXPECT_EQ(plan.at("e"), B32);
  EXPECT_EQ(plan.at("i"), B32);
}

TEST(Partition, IdempotentOnCommittedManifests) {
  for (const auto& p : {fixtures::kResNet50, fixtures::kMobileNetV2}) {
    const auto m = load(p);
    const auto plan = partition(m);
    EXPECT_EQ(plan, partition(m));
    EXPECT_EQ(plan.assignment.size(), m.entries.size());
    std::ostringstream out;
    write_plan(out, plan, &m);
    std::istringstream in(out.str());
    EXPECT_EQ(parse_plan(in), plan);
  }
}

TEST(ModelSize, SmallExample) {
  const auto m = manifest_of("conv,Conv,864,3,3,32,1,8,8\nbn,BatchNorm,128\nrelu,ReLU,0\n");
  const auto mixed = model_size_bytes(m, partition(m));
  EXPECT_EQ(mixed.total_bytes, 864u * 2 + 128u * 4);
  ASSERT_EQ(mixed.per_layer.size(), 3u);
  EXPECT_EQ(mixed.per_layer[2].second, 0u);
  EXPECT_EQ(model_size_bytes(m, uniform_plan(m, B32)).total_bytes, (864u + 128u) * 4);
}

TEST(ModelSize, UncoveredLayer) {
  const auto m = manifest_of("conv,Conv,10\n");
  EXPECT_THROW(model_size_bytes(m, PrecisionPlan{}), InvalidArgument);
}

TEST(ModelSize, MatchesFileTotals) {
  for (const auto& p : {fixtures::kResNet50, fixtures::kMobileNetV2}) {
    const auto m = load(p);
    const auto want = bytes_from_file(p);
    EXPECT_EQ(double(model_size_bytes(m, uniform_plan(m, B32)).total_bytes), want.binary32) << p.manifest;
    EXPECT_EQ(double(model_size_bytes(m, partition(m)).total_bytes), want.mixed) << p.manifest;
  }
}

TEST(ModelSize, RatioBoundsOnRandomManifests) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> kinds{"Conv", "DepthwiseConv", "PointwiseConv", "Linear", "BatchNorm", "ReLU", "Loss"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    bool wide_params = false, narrow_params = false;
    std::uint64_t total = 0;
    const std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& k = kinds[rng() % kinds.size()];
      const std::uint64_t count = k == "ReLU" ? 0 : rng() % 5000;
      const bool wide = k == "BatchNorm" || k == "Loss";
      wide_params = wide_params || (wide && count > 0);
      narrow_params = narrow_params || (!wide && count > 0);
      total += count;
      text += "l" + std::to_string(i) + "," + k + "," + std::to_string(count) + "\n";
    }
    if (total == 0) continue;
    const auto m = manifest_of(text);
    const double ratio = double(model_size_bytes(m, uniform_plan(m, B32)).total_bytes) /
                         double(model_size_bytes(m, partition(m)).total_bytes);
    EXPECT_GE(ratio, 1.0);
    EXPECT_LE(ratio, 2.0);
    EXPECT_EQ(ratio == 1.0, !narrow_params) << text;
    EXPECT_EQ(ratio == 2.0, !wide_params) << text;
  }
}

TEST(PublishedSizes, ResNet50) {
  const auto& p = fixtures::kResNet50;
  const auto m = load(p);
  const double wide = mb(model_size_bytes(m, uniform_plan(m, B32)).total_bytes);
  const double mixed = mb(model_size_bytes(m, partition(m)).total_bytes);
  EXPECT_LE(relative(wide, p.binary32_mb), fixtures::kSizeTolerance) << wide;
  EXPECT_LE(relative(mixed, p.mixed_mb), fixtures::kSizeTolerance) << mixed;
  EXPECT_LE(std::fabs(wide / mixed - p.ratio), fixtures::kRatioTolerance) << wide / mixed;
}

TEST(PublishedSizes, MobileNetV2) {
  const auto& p = fixtures::kMobileNetV2;
  const auto m = load(p);
  const double wide = mb(model_size_bytes(m, uniform_plan(m, B32)).total_bytes);
  const double mixed = mb(model_size_bytes(m, partition(m)).total_bytes);
  EXPECT_LE(relative(wide, p.binary32_mb), fixtures::kSizeTolerance) << wide;
  EXPECT_LE(relative(mixed, p.mixed_mb), fixtures::kSizeTolerance) << mixed;
  EXPECT_LE(std::fabs(wide / mixed - p.ratio), fixtures::kRatioTolerance) << wide / mixed;
}

TEST(PublishedSizes, CrossModelRatio) {
  const auto big = load(fixtures::kResNet50), small = load(fixtures::kMobileNetV2);
  const double ratio = double(model_size_bytes(big, uniform_plan(big, B32)).total_bytes) /
                       double(model_size_bytes(small, partition(small)).total_bytes);
  EXPECT_LE(relative(ratio, fixtures::kCrossModelRatio), fixtures::kSizeTolerance) << ratio;
}

TEST(Macs, Examples) {
  EXPECT_EQ(mac_count(spec_of(ConvKind::Standard, 1, 1, 1), 1, 1), 1u);
  EXPECT_EQ(mac_count(spec_of(ConvKind::Standard, 3, 32, 64), 1, 1), 18432u);
  EXPECT_EQ(mac_count(spec_of(ConvKind::Depthwise, 3, 32, 32), 1, 1), 288u);
  EXPECT_EQ(mac_count(spec_of(ConvKind::Pointwise, 1, 32, 64), 1, 1), 2048u);
  EXPECT_EQ(separable_mac_count(3, 32, 64, 1, 1), 2336u);
  EXPECT_EQ(mac_count(spec_of(ConvKind::Standard, 3, 32, 64), 7, 5), 18432u * 35);
}

TEST(Macs, ReductionLimit) {
  const double ratio = double(separable_mac_count(3, 1024, 1024, 14, 14)) /
                       double(mac_count(spec_of(ConvKind::Standard, 3, 1024, 1024), 14, 14));
  EXPECT_NEAR(ratio, 1.0 / 1024 + 1.0 / 9, 1e-12);
}

TEST(Macs, SeparableCheaperWheneverWideAndSpatial) {
  for (std::size_t k = 2; k <= 7; ++k)
    for (std::size_t m = 1; m <= 64; m *= 2)
      for (std::size_t n = 2; n <= 64; n *= 2)
        EXPECT_LT(separable_mac_count(k, m, n, 4, 4), mac_count(spec_of(ConvKind::Standard, k, m, n), 4, 4));
}

TEST(Macs, InvalidSpec) {
  EXPECT_THROW(mac_count(spec_of(ConvKind::Depthwise, 3, 32, 64), 1, 1), InvalidArgument);
  EXPECT_THROW(mac_count(spec_of(ConvKind::Pointwise, 3, 32, 64), 1, 1), InvalidArgument);
}

TEST(Macs, ManifestTotal) {
  const auto m = manifest_of("a,Conv,864,3,3,32,1,1,1\nb,BatchNorm,128\nc,DepthwiseConv,288,3,32,32,1,2,2\n");
  EXPECT_EQ(manifest_mac_count(m), 864u + 288u * 4);
}

TEST(Manifest, RoundTrip) {
  const auto m = load(fixtures::kMobileNetV2);
  std::ostringstream out;
  write_manifest(out, m);
  EXPECT_EQ(manifest_of(out.str()), m);
}

TEST(Manifest, Errors) {
  EXPECT_THROW(manifest_of("a,Dropout,0\n"), InvalidArgument);
  EXPECT_THROW(manifest_of("a,Conv,1\na,Conv,1\n"), InvalidArgument);
  EXPECT_THROW(manifest_of("a,ReLU,3\n"), InvalidArgument);
  EXPECT_THROW(manifest_of("a,Conv,-1\n"), FormatError);
  EXPECT_THROW(manifest_of("a,Conv\n"), FormatError);
  EXPECT_THROW(parse_op_kind("conv"), InvalidArgument);
  EXPECT_THROW(load_manifest("/nonexistent/manifest.csv"), InvalidArgument);
}

TEST(Plan, ParseErrors) {
  std::istringstream bad("a,binary8\n");
  EXPECT_THROW(parse_plan(bad), InvalidArgument);
  std::istringstream twice("a,binary16\na,binary32\n");
  EXPECT_THROW(parse_plan(twice), FormatError);
  std::istringstream fields("a\n");
  EXPECT_THROW(parse_plan(fields), FormatError);
}
