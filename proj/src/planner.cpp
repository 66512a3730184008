#include "reid/planner.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "reid/error.hpp"

namespace reid {

namespace {

constexpr std::array<std::pair<OpKind, const char*>, 9> kOpNames{{
    {OpKind::Conv, "Conv"},
    {OpKind::DepthwiseConv, "DepthwiseConv"},
    {OpKind::PointwiseConv, "PointwiseConv"},
    {OpKind::Linear, "Linear"},
    {OpKind::BatchNorm, "BatchNorm"},
    {OpKind::ReLU, "ReLU"},
    {OpKind::AvgPool, "AvgPool"},
    {OpKind::ResidualAdd, "ResidualAdd"},
    {OpKind::Loss, "Loss"},
}};

bool parameter_free(OpKind op) {
  return op == OpKind::ReLU || op == OpKind::AvgPool || op == OpKind::ResidualAdd;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  return out;
}

std::uint64_t parse_count(const std::string& s, std::size_t line_no) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": '" + s + "' is not a non-negative integer");
  }
  return v;
}

ConvKind conv_kind_for(OpKind op) {
  switch (op) {
    case OpKind::DepthwiseConv: return ConvKind::Depthwise;
    case OpKind::PointwiseConv: return ConvKind::Pointwise;
    default: return ConvKind::Standard;
  }
}

}  // namespace

std::string to_string(OpKind kind) {
  for (const auto& [k, name] : kOpNames)
    if (k == kind) return name;
  return "?";
}

OpKind parse_op_kind(const std::string& name) {
  for (const auto& [k, n] : kOpNames)
    if (name == n) return k;
  throw InvalidArgument("unknown op_kind '" + name + "'");
}

std::string to_string(LayerPrecision p) { return p == LayerPrecision::Binary16 ? "binary16" : "binary32"; }

LayerPrecision parse_layer_precision(const std::string& name) {
  if (name == "binary16") return LayerPrecision::Binary16;
  if (name == "binary32") return LayerPrecision::Binary32;
  throw InvalidArgument("unknown precision '" + name + "' (expected binary16 or binary32)");
}

void LayerManifest::validate() const {
  std::set<std::string> names;
  for (const auto& e : entries) {
    if (e.name.empty()) throw InvalidArgument("manifest layer with an empty name");
    if (!names.insert(e.name).second) throw InvalidArgument("duplicate manifest layer '" + e.name + "'");
    if (parameter_free(e.op) && e.param_count != 0) {
      throw InvalidArgument("layer '" + e.name + "' of kind " + to_string(e.op) + " cannot carry parameters");
    }
    if (e.conv) e.conv->spec.validate();
  }
}

LayerManifest parse_manifest(std::istream& in) {
  LayerManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto f = split_fields(t);
    if (f.size() != 3 && f.size() != 9) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 3 or 9 fields, got " +
                        std::to_string(f.size()));
    }
    LayerEntry e;
    e.name = f[0];
    e.op = parse_op_kind(f[1]);
    e.param_count = parse_count(f[2], line_no);
    if (f.size() == 9) {
      ConvGeometry2d g;
      g.spec.kind = conv_kind_for(e.op);
      g.spec.kernel = parse_count(f[3], line_no);
      g.spec.in_channels = parse_count(f[4], line_no);
      g.spec.out_channels = parse_count(f[5], line_no);
      g.spec.stride = parse_count(f[6], line_no);
      g.out_h = parse_count(f[7], line_no);
      g.out_w = parse_count(f[8], line_no);
      e.conv = g;
    }
    manifest.entries.push_back(std::move(e));
  }
  manifest.validate();
  return manifest;
}

LayerManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open manifest '" + path + "'");
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, const LayerManifest& manifest) {
  for (const auto& e : manifest.entries) {
    out << e.name << ',' << to_string(e.op) << ',' << e.param_count;
    if (e.conv) {
      const auto& g = *e.conv;
      out << ',' << g.spec.kernel << ',' << g.spec.in_channels << ',' << g.spec.out_channels << ','
          << g.spec.stride << ',' << g.out_h << ',' << g.out_w;
    }
    out << '\n';
  }
}

LayerPrecision PrecisionPlan::at(const std::string& layer) const {
  auto it = assignment.find(layer);
  if (it == assignment.end()) throw InvalidArgument("plan does not cover layer '" + layer + "'");
  return it->second;
}

PrecisionPlan parse_plan(std::istream& in) {
  PrecisionPlan plan;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto f = split_fields(t);
    if (f.size() != 2) throw FormatError("plan line " + std::to_string(line_no) + ": expected name,precision");
    if (!plan.assignment.emplace(f[0], parse_layer_precision(f[1])).second) {
      throw FormatError("plan assigns layer '" + f[0] + "' twice");
    }
  }
  return plan;
}

void write_plan(std::ostream& out, const PrecisionPlan& plan, const LayerManifest* order) {
  if (order) {
    for (const auto& e : order->entries) out << e.name << ',' << to_string(plan.at(e.name)) << '\n';
    return;
  }
  for (const auto& [name, p] : plan.assignment) out << name << ',' << to_string(p) << '\n';
}

PrecisionPlan partition(const LayerManifest& manifest) {
  manifest.validate();
  PrecisionPlan plan;
  for (const auto& e : manifest.entries) {
    const bool wide = e.op == OpKind::BatchNorm || e.op == OpKind::Loss;
    plan.assignment[e.name] = wide ? LayerPrecision::Binary32 : LayerPrecision::Binary16;
  }
  return plan;
}

PrecisionPlan uniform_plan(const LayerManifest& manifest, LayerPrecision precision) {
  manifest.validate();
  PrecisionPlan plan;
  for (const auto& e : manifest.entries) plan.assignment[e.name] = precision;
  return plan;
}

SizeReport model_size_bytes(const LayerManifest& manifest, const PrecisionPlan& plan) {
  SizeReport report;
  for (const auto& e : manifest.entries) {
    const std::uint64_t width = plan.at(e.name) == LayerPrecision::Binary16 ? 2 : 4;
    const std::uint64_t bytes = e.param_count * width;
    report.per_layer.emplace_back(e.name, bytes);
    report.total_bytes += bytes;
  }
  return report;
}

std::uint64_t mac_count(const ConvSpec& spec, std::size_t out_h, std::size_t out_w) {
  spec.validate();
  const std::uint64_t positions = static_cast<std::uint64_t>(out_h) * out_w;
  const std::uint64_t k2 = static_cast<std::uint64_t>(spec.kernel) * spec.kernel;
  switch (spec.kind) {
    case ConvKind::Standard: return k2 * spec.in_channels * spec.out_channels * positions;
    case ConvKind::Depthwise: return k2 * spec.in_channels * positions;
    case ConvKind::Pointwise: return static_cast<std::uint64_t>(spec.in_channels) * spec.out_channels * positions;
  }
  return 0;
}

std::uint64_t separable_mac_count(std::size_t kernel, std::size_t in_channels, std::size_t out_channels,
                                  std::size_t out_h, std::size_t out_w) {
  const ConvSpec depthwise{ConvKind::Depthwise, kernel, in_channels, in_channels, 1, 0};
  const ConvSpec pointwise{ConvKind::Pointwise, 1, in_channels, out_channels, 1, 0};
  return mac_count(depthwise, out_h, out_w) + mac_count(pointwise, out_h, out_w);
}

std::uint64_t manifest_mac_count(const LayerManifest& manifest) {
  std::uint64_t total = 0;
  for (const auto& e : manifest.entries)
    if (e.conv) total += mac_count(e.conv->spec, e.conv->out_h, e.conv->out_w);
  return total;
}

}  // namespace reid
