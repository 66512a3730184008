#pragma once

// The committed re-ranking fixture: three clusters in 8-D, 30 queries,
// 90 gallery rows, a tenth of the labels wrong.

#include <cstdint>

#include "reid/synth.hpp"

namespace fixtures {

inline constexpr std::uint64_t kNoisyClusterSeed = 7;

inline reid::EmbeddingSet noisy_cluster_set(std::uint64_t seed = kNoisyClusterSeed) {
  return reid::noisy_cluster_set(3, 30, 90, 8, 0.8, 0.1, seed);
}

}  // namespace fixtures
