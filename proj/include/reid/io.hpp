#pragma once

// Binary file formats. Everything is little-endian.
//
// Embedding file (version 1):
//   "REMB" | u16 version | u32 record count | u32 dimension D | u8 precision
//   (0 = binary32, 1 = binary16-quantized), then per record:
//   u32 person_id | u16 camera_id | u8 role (0 query, 1 gallery, 2 train) |
//   D x binary32
//
// Checkpoint (version 1):
//   "RCKP" | u16 version | u64 config hash | u64 step | u32 epochs completed |
//   5 x u32 geometry (in_channels, height, width, channels, embedding_dim) |
//   plan: u32 n, n x (u16 len, name, u8 precision) |
//   masters, buffers: u32 n, n x (u16 len, name, u16 len, layer, u8 rank,
//   rank x u32 dims, values as binary32) |
//   Adam: u64 t, f32 beta1, f32 beta2, f32 eps, then m and v for every master.
// Working weights are not stored; they are re-derived from the masters.

#include <cstdint>
#include <string>
#include <string_view>

#include "reid/embedding_set.hpp"
#include "reid/trainer.hpp"

namespace reid {

inline constexpr std::uint16_t kEmbeddingFileVersion = 1;
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::string encode_embedding_file(const EmbeddingSet& set);
EmbeddingSet decode_embedding_file(std::string_view bytes);
void write_embedding_file(const std::string& path, const EmbeddingSet& set);
EmbeddingSet read_embedding_file(const std::string& path);

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  std::uint32_t epochs_completed = 0;
  MixedModel model;
  AdamState adam;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view bytes);
std::string read_file(const std::string& path);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace reid
