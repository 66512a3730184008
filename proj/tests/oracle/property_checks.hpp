#pragma once

// Random-instance comparisons of the library against the exhaustive
// references: batch-hard mining and CMC/mAP.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "oracle/metric_reference.hpp"
#include "reid/embedding_set.hpp"
#include "reid/retrieval.hpp"
#include "reid/triplet.hpp"

namespace checks {

struct TripletComparison {
  bool indices_match = true;
  double loss_difference = 0.0;
};

/// Random batch of 2..8 ids x 2..4 instances (n <= 32) in 1..16 dimensions,
/// labels in shuffled order, coordinates of order 1/sqrt(D).
inline TripletComparison compare_batch_hard(std::uint64_t seed, bool squared = true) {
  std::mt19937_64 rng(seed);
  const std::size_t p = 2 + rng() % 7, k = 2 + rng() % 3, dim = 1 + rng() % 16;
  std::vector<std::uint32_t> labels;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) labels.push_back(static_cast<std::uint32_t>(i * 3 + 1));
  std::shuffle(labels.begin(), labels.end(), rng);
  const std::size_t n = labels.size();
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> e(n * dim);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dim));
  for (float& v : e) v = u(rng) * scale;

  reid::TripletOptions opts;
  opts.squared = squared;
  const auto got = reid::batch_hard_triplet_loss(reid::Tensor({n, dim}, e), labels, opts);
  const auto ref = oracle::batch_hard(std::vector<double>(e.begin(), e.end()), dim, labels, opts.margin, squared);

  TripletComparison cmp;
  for (std::size_t a = 0; a < n; ++a) {
    cmp.indices_match = cmp.indices_match && got.per_anchor[a].hardest_positive == ref.anchors[a].positive &&
                        got.per_anchor[a].hardest_negative == ref.anchors[a].negative;
  }
  cmp.loss_difference = std::fabs(static_cast<double>(got.loss) - ref.loss);
  return cmp;
}

struct RetrievalComparison {
  bool exact = true;
  bool monotone = true;
  bool evaluated = false;
};

/// Random Q, G <= 50 with few identities and cameras, distances snapped to a
/// coarse grid so ties are common.
inline RetrievalComparison compare_retrieval(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t nq = 1 + rng() % 50, ng = 1 + rng() % 50, ids = 2 + rng() % 8, cams = 1 + rng() % 3;
  std::vector<reid::RowMeta> qm(nq), gm(ng);
  std::vector<oracle::Meta> qo(nq), go(ng);
  for (std::size_t i = 0; i < nq; ++i) {
    qm[i] = {static_cast<std::uint32_t>(rng() % ids), static_cast<std::uint16_t>(rng() % cams)};
    qo[i] = {qm[i].person_id, qm[i].camera_id};
  }
  for (std::size_t i = 0; i < ng; ++i) {
    gm[i] = {static_cast<std::uint32_t>(rng() % ids), static_cast<std::uint16_t>(rng() % cams)};
    go[i] = {gm[i].person_id, gm[i].camera_id};
  }
  std::vector<float> d(nq * ng);
  for (float& v : d) v = static_cast<float>(rng() % 20) * 0.25f;
  const reid::Tensor dist({nq, ng}, d);
  const std::vector<std::size_t> ranks{1, 2, 3, 5, 10, 20};
  const auto ref = oracle::retrieval(d, qo, go, ranks);

  RetrievalComparison cmp;
  if (ref.kept == 0) {
    try {
      reid::cmc(dist, qm, gm, ranks);
      cmp.exact = false;
    } catch (const std::exception&) {
    }
    return cmp;
  }
  cmp.evaluated = true;
  const auto rates = reid::cmc(dist, qm, gm, ranks);
  const double map = reid::mean_ap(dist, qm, gm);
  cmp.exact = rates == ref.cmc && map == ref.map;
  for (std::size_t i = 1; i < rates.size(); ++i) cmp.monotone = cmp.monotone && rates[i - 1] <= rates[i];
  return cmp;
}

}  // namespace checks
