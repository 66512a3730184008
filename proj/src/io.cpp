#include "reid/io.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "reid/error.hpp"

namespace reid {

namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > 0xFFFF) throw InvalidArgument("name too long to serialize");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError("unexpected end of data at byte " + std::to_string(pos_));
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const auto n = u16();
    return std::string(bytes(n));
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::uint64_t get(int n) {
    const auto s = bytes(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_tensors(Writer& w, const ParameterSet& set) {
  w.u32(static_cast<std::uint32_t>(set.size()));
  for (const auto& p : set) {
    w.str(p.name);
    w.str(p.layer);
    w.u8(static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p.value.data()) w.f32(v);
  }
}

ParameterSet read_tensors(Reader& r) {
  ParameterSet set(r.u32());
  for (auto& p : set) {
    p.name = r.str();
    p.layer = r.str();
    Shape shape(r.u8());
    for (auto& d : shape) d = r.u32();
    const std::size_t n = shape_numel(shape);
    if (n > r.remaining() / 4) throw FormatError("tensor '" + p.name + "' overruns the file");
    std::vector<float> values(n);
    for (float& v : values) v = r.f32();
    p.value = Tensor(std::move(shape), std::move(values));
  }
  return set;
}

}  // namespace

std::string encode_embedding_file(const EmbeddingSet& set) {
  set.validate();
  Writer w;
  w.bytes("REMB");
  w.u16(kEmbeddingFileVersion);
  w.u32(static_cast<std::uint32_t>(set.records.size()));
  w.u32(static_cast<std::uint32_t>(set.dim));
  w.u8(set.precision == Precision::Binary16Emulated ? 1 : 0);
  for (const Record& rec : set.records) {
    w.u32(rec.person_id);
    w.u16(rec.camera_id);
    w.u8(static_cast<std::uint8_t>(rec.role));
    for (float v : rec.vector) w.f32(v);
  }
  return w.take();
}

EmbeddingSet decode_embedding_file(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "REMB") throw FormatError("not an embedding file (bad magic)");
  const auto version = r.u16();
  if (version != kEmbeddingFileVersion) throw FormatError("unsupported embedding file version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  EmbeddingSet set;
  set.dim = r.u32();
  const auto flag = r.u8();
  if (flag > 1) throw FormatError("unknown precision flag " + std::to_string(flag));
  set.precision = flag ? Precision::Binary16Emulated : Precision::Binary32;

  const std::uint64_t record_bytes = 7 + 4ull * set.dim;
  if (static_cast<std::uint64_t>(r.remaining()) != record_bytes * count) {
    throw FormatError("declared " + std::to_string(count) + " records do not match " +
                      std::to_string(r.remaining()) + " payload bytes");
  }
  set.records.resize(count);
  for (Record& rec : set.records) {
    rec.person_id = r.u32();
    rec.camera_id = r.u16();
    const auto role = r.u8();
    if (role > 2) throw FormatError("unknown role " + std::to_string(role));
    rec.role = static_cast<Role>(role);
    rec.vector.resize(set.dim);
    for (float& v : rec.vector) v = r.f32();
  }
  set.validate();
  return set;
}

void write_embedding_file(const std::string& path, const EmbeddingSet& set) {
  write_file_atomic(path, encode_embedding_file(set));
}

EmbeddingSet read_embedding_file(const std::string& path) { return decode_embedding_file(read_file(path)); }

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const MixedModel& m = ckpt.model;
  Writer w;
  w.bytes("RCKP");
  w.u16(kCheckpointVersion);
  w.u64(ckpt.config_hash);
  w.u64(ckpt.step);
  w.u32(ckpt.epochs_completed);
  for (std::size_t v : {m.geometry.in_channels, m.geometry.height, m.geometry.width, m.geometry.channels,
                        m.geometry.embedding_dim}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(m.plan.assignment.size()));
  for (const auto& [name, p] : m.plan.assignment) {
    w.str(name);
    w.u8(p == LayerPrecision::Binary16 ? 1 : 0);
  }
  write_tensors(w, m.master);
  write_tensors(w, m.buffers);
  w.u64(ckpt.adam.t);
  w.f32(ckpt.adam.beta1);
  w.f32(ckpt.adam.beta2);
  w.f32(ckpt.adam.eps);
  if (ckpt.adam.m.size() != m.master.size() || ckpt.adam.v.size() != m.master.size()) {
    throw StateError("Adam state does not match the master weights");
  }
  for (std::size_t i = 0; i < m.master.size(); ++i) {
    if (ckpt.adam.m[i].size() != m.master[i].value.size() || ckpt.adam.v[i].size() != m.master[i].value.size()) {
      throw StateError("Adam moments for '" + m.master[i].name + "' have the wrong size");
    }
    for (float v : ckpt.adam.m[i]) w.f32(v);
    for (float v : ckpt.adam.v[i]) w.f32(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "RCKP") throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.u16();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_hash = r.u64();
  c.step = r.u64();
  c.epochs_completed = r.u32();
  NetGeometry& g = c.model.geometry;
  g.in_channels = r.u32();
  g.height = r.u32();
  g.width = r.u32();
  g.channels = r.u32();
  g.embedding_dim = r.u32();
  g.validate();
  const std::uint32_t plan_size = r.u32();
  for (std::uint32_t i = 0; i < plan_size; ++i) {
    std::string name = r.str();
    const auto p = r.u8();
    if (p > 1) throw FormatError("unknown layer precision " + std::to_string(p));
    c.model.plan.assignment[std::move(name)] = p ? LayerPrecision::Binary16 : LayerPrecision::Binary32;
  }
  c.model.master = read_tensors(r);
  c.model.buffers = read_tensors(r);

  const ParameterSet layout = make_parameters(g);
  if (c.model.master.size() != layout.size()) throw FormatError("checkpoint parameter count does not match geometry");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (c.model.master[i].name != layout[i].name || c.model.master[i].value.shape() != layout[i].value.shape()) {
      throw FormatError("checkpoint parameter '" + c.model.master[i].name + "' does not match geometry");
    }
  }
  c.adam.t = r.u64();
  c.adam.beta1 = r.f32();
  c.adam.beta2 = r.f32();
  c.adam.eps = r.f32();
  for (const auto& p : c.model.master) {
    std::vector<float> m(p.value.size()), v(p.value.size());
    for (float& x : m) x = r.f32();
    for (float& x : v) x = r.f32();
    c.adam.m.push_back(std::move(m));
    c.adam.v.push_back(std::move(v));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint");
  sync_working(c.model);
  return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file_atomic(path, encode_checkpoint(ckpt)); }

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

void write_file_atomic(const std::string& path, std::string_view bytes) {
  const std::filesystem::path target(path);
  const std::string tmp = path + ".tmp";
  try {
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw InvalidArgument("cannot open '" + tmp + "' for writing");
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw InvalidArgument("write to '" + tmp + "' failed");
    }
    std::filesystem::rename(tmp, target);
  } catch (const std::filesystem::filesystem_error& e) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw InvalidArgument("cannot write '" + path + "': " + e.code().message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace reid
