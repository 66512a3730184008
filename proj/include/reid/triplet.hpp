#pragma once

// PK batch sampling, batch-hard triplet loss and the cross-iteration
// hard-sample pool.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

/// P identities x K instances, stored id-major: positions [p*K, (p+1)*K)
/// belong to the p-th drawn identity.
struct PkBatch {
  std::size_t ids_per_batch = 0;
  std::size_t instances_per_id = 0;
  std::vector<std::size_t> indices;       // dataset rows
  std::vector<std::uint32_t> person_ids;  // label of each row
  std::vector<bool> from_pool;            // row was drawn from the hard pool

  std::size_t size() const noexcept { return indices.size(); }
};

struct TripletOptions {
  float margin = 0.3f;
  /// Squared Euclidean distances, as in the hinge formula. The unsquared
  /// variant of the batch-hard literature is available behind this flag.
  bool squared = true;
};

struct AnchorResult {
  std::size_t hardest_positive = 0;
  std::size_t hardest_negative = 0;
  float positive_distance = 0.0f;
  float negative_distance = 0.0f;
  float hinge = 0.0f;
};

struct TripletLossOut {
  float loss = 0.0f;  // mean hinge over anchors
  std::vector<AnchorResult> per_anchor;
};

/// Bounded per-identity list of the dataset rows with the highest recent hinge.
class HardPool {
 public:
  struct Entry {
    std::size_t index = 0;
    float hinge = 0.0f;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  explicit HardPool(std::size_t capacity_per_id);

  std::size_t capacity() const noexcept { return capacity_; }
  /// Inserts or refreshes `index` under `person_id`; evicts the lowest hinges
  /// beyond capacity (ties evict the larger row index).
  void offer(std::uint32_t person_id, std::size_t index, float hinge);
  std::span<const Entry> entries(std::uint32_t person_id) const;
  std::size_t total_size() const noexcept;
  bool empty() const noexcept { return total_size() == 0; }

  friend bool operator==(const HardPool&, const HardPool&) = default;

 private:
  std::size_t capacity_;
  std::map<std::uint32_t, std::vector<Entry>> by_id_;
};

/// Draws P identities without replacement, then K rows per identity
/// (without replacement when the identity has at least K rows).
PkBatch pk_sample(std::span<const std::uint32_t> labels, std::size_t ids_per_batch,
                  std::size_t instances_per_id, std::uint64_t seed);

/// As pk_sample, but ceil(mix_ratio * K) rows per identity come from the
/// hard pool when it holds them. With an empty pool the draw is identical
/// to pk_sample under the same seed.
PkBatch pk_sample_hard(std::span<const std::uint32_t> labels, const HardPool& pool,
                       std::size_t ids_per_batch, std::size_t instances_per_id, double mix_ratio,
                       std::uint64_t seed);

/// Every row serves as an anchor. Ties in the hardest positive/negative
/// search go to the lowest row. Computed in binary32 whatever the
/// precision of `embeddings`.
TripletLossOut batch_hard_triplet_loss(const Tensor& embeddings, std::span<const std::uint32_t> labels,
                                       const TripletOptions& options = {});

/// d(upstream * loss) / d(embeddings) for the selections recorded in `out`.
Tensor batch_hard_triplet_backward(const Tensor& embeddings, const TripletLossOut& out,
                                   const TripletOptions& options, float upstream);

void update_hard_pool(HardPool& pool, const PkBatch& batch, const TripletLossOut& out);

}  // namespace reid
