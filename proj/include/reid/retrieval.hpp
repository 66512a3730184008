#pragma once

// Query-vs-gallery retrieval evaluation: distance matrices, CMC, mAP and
// k-reciprocal re-ranking.
//
// Protocol: gallery rows sharing both person id and camera id with the
// query are junk and removed before ranking. Queries left with no true
// match are dropped from every average. Equal distances rank by ascending
// gallery index.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reid/embedding_set.hpp"
#include "reid/tensor.hpp"

namespace reid {

/// Euclidean distances, [Q, D] x [G, D] -> [Q, G] binary32. In
/// Binary16Emulated mode both inputs are rounded to binary16 first; the
/// accumulation stays binary32.
Tensor distmat(const Tensor& queries, const Tensor& gallery, Precision mode);

/// Gallery order for one query row: ascending distance, then index.
std::vector<std::size_t> rank_gallery(const Tensor& dist, std::size_t query);

/// CMC rate at each requested rank (1-based).
std::vector<double> cmc(const Tensor& dist, std::span<const RowMeta> queries,
                        std::span<const RowMeta> gallery, std::span<const std::size_t> ranks);

double mean_ap(const Tensor& dist, std::span<const RowMeta> queries, std::span<const RowMeta> gallery);

struct RerankParams {
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  double lambda = 0.3;
};

struct RerankResult {
  Tensor jaccard;  // [Q, G]
  Tensor final;    // (1 - lambda) * jaccard + lambda * original
};

/// k-reciprocal encoding over the joint query+gallery population. The
/// blended `original` term is the plain distmat, so lambda = 1 returns it
/// unchanged.
RerankResult k_reciprocal_rerank_detail(const Tensor& queries, const Tensor& gallery,
                                        const RerankParams& params,
                                        Precision mode = Precision::Binary32);

Tensor k_reciprocal_rerank(const Tensor& queries, const Tensor& gallery, const RerankParams& params,
                           Precision mode = Precision::Binary32);

enum class EvalVariant { Plain, ReRanked };

std::string to_string(EvalVariant v);

struct EvalReport {
  EvalVariant variant = EvalVariant::Plain;
  Precision precision = Precision::Binary32;
  std::vector<std::pair<std::size_t, double>> cmc;  // (rank, rate)
  double mean_ap = 0.0;
  std::size_t queries_evaluated = 0;

  double cmc_at(std::size_t rank) const;
};

/// Query and gallery rows of `set` evaluated in `mode`.
EvalReport evaluate(const EmbeddingSet& set, std::span<const std::size_t> ranks, Precision mode,
                    const RerankParams* rerank = nullptr);

}  // namespace reid
