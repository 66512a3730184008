#include "reid/embedding_set.hpp"

#include "reid/error.hpp"
#include "reid/half.hpp"

namespace reid {

void EmbeddingSet::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    if (r.vector.size() != dim) {
      throw ShapeError("record " + std::to_string(i) + " has dimension " + std::to_string(r.vector.size()) +
                       ", set declares " + std::to_string(dim));
    }
    if (static_cast<std::uint8_t>(r.role) > 2) throw FormatError("record " + std::to_string(i) + " has unknown role");
    if (precision == Precision::Binary16Emulated) {
      for (float v : r.vector) {
        if (quantize_f16(v) != v && v == v) {
          throw FormatError("record " + std::to_string(i) + " is flagged binary16 but holds a binary32-only value");
        }
      }
    }
  }
}

Tensor EmbeddingSet::matrix(Role role) const {
  std::vector<float> values;
  std::size_t rows = 0;
  for (const Record& r : records) {
    if (r.role != role) continue;
    values.insert(values.end(), r.vector.begin(), r.vector.end());
    ++rows;
  }
  return Tensor({rows, dim}, std::move(values), precision);
}

std::vector<RowMeta> EmbeddingSet::meta(Role role) const {
  std::vector<RowMeta> out;
  for (const Record& r : records)
    if (r.role == role) out.push_back({r.person_id, r.camera_id});
  return out;
}

std::vector<std::uint32_t> EmbeddingSet::labels(Role role) const {
  std::vector<std::uint32_t> out;
  for (const Record& r : records)
    if (r.role == role) out.push_back(r.person_id);
  return out;
}

std::size_t EmbeddingSet::count(Role role) const {
  std::size_t n = 0;
  for (const Record& r : records) n += r.role == role;
  return n;
}

EmbeddingSet EmbeddingSet::quantized() const {
  EmbeddingSet out = *this;
  out.precision = Precision::Binary16Emulated;
  for (Record& r : out.records)
    for (float& v : r.vector) v = quantize_f16(v);
  return out;
}

}  // namespace reid
