#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

enum class Role : std::uint8_t { Query = 0, Gallery = 1, Train = 2 };

struct Record {
  std::uint32_t person_id = 0;
  std::uint16_t camera_id = 0;
  Role role = Role::Gallery;
  std::vector<float> vector;

  friend bool operator==(const Record&, const Record&) = default;
};

/// Identity/camera metadata of one row of a query or gallery matrix.
struct RowMeta {
  std::uint32_t person_id = 0;
  std::uint16_t camera_id = 0;
};

/// Records sharing one dimension. `precision` Binary16Emulated promises that
/// every vector element is binary16-representable.
struct EmbeddingSet {
  std::size_t dim = 0;
  Precision precision = Precision::Binary32;
  std::vector<Record> records;

  /// Checks uniform dimension and the binary16 promise.
  void validate() const;

  /// Rows with the given role as an [n, dim] tensor plus their metadata.
  Tensor matrix(Role role) const;
  std::vector<RowMeta> meta(Role role) const;
  std::vector<std::uint32_t> labels(Role role) const;
  std::size_t count(Role role) const;

  /// Copy with every vector rounded to binary16 and the flag set.
  EmbeddingSet quantized() const;

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

}  // namespace reid
