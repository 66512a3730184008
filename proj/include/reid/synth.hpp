#pragma once

// Seeded synthetic identity data standing in for real re-ID datasets.

#include <cstddef>
#include <cstdint>

#include "reid/embedding_set.hpp"

namespace reid {

struct SynthConfig {
  std::size_t ids = 10;
  std::size_t per_id = 20;
  std::size_t dim = 32;
  double noise = 0.5;
  std::uint64_t seed = 0;
  std::size_t cameras = 3;
  /// Share of each identity's rows used for training; the rest are held out.
  double train_fraction = 0.5;
};

/// Gaussian identity clusters with a per-camera shift; the shift and the
/// per-row jitter both scale with `noise`, so noise = 0 makes all rows of an
/// identity identical. Held-out rows split into queries (camera 0) and
/// gallery rows (other cameras), about one query per five held-out rows.
EmbeddingSet synthesize(const SynthConfig& cfg);

/// Query/gallery set of `clusters` Gaussian clusters where `label_noise` of
/// the rows carry a wrong identity. Queries use camera 0, gallery camera 1.
EmbeddingSet noisy_cluster_set(std::size_t clusters, std::size_t queries, std::size_t gallery, std::size_t dim,
                               double spread, double label_noise, std::uint64_t seed);

}  // namespace reid
