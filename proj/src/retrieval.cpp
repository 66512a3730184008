#include "reid/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reid/error.hpp"
#include "reid/half.hpp"

namespace reid {

namespace {

void check_meta(const Tensor& dist, std::span<const RowMeta> queries, std::span<const RowMeta> gallery) {
  if (dist.rank() != 2 || dist.dim(0) != queries.size() || dist.dim(1) != gallery.size()) {
    throw ShapeError("distance matrix " + shape_string(dist.shape()) + " does not match " +
                     std::to_string(queries.size()) + " queries x " + std::to_string(gallery.size()) +
                     " gallery rows");
  }
}

bool is_junk(const RowMeta& q, const RowMeta& g) {
  return q.person_id == g.person_id && q.camera_id == g.camera_id;
}

// 1-based ranks of the true matches among non-junk rows, ascending.
std::vector<std::size_t> match_ranks(const Tensor& dist, std::size_t qi, std::span<const RowMeta> queries,
                                     std::span<const RowMeta> gallery) {
  std::vector<std::size_t> hits;
  std::size_t position = 0;
  for (std::size_t g : rank_gallery(dist, qi)) {
    if (is_junk(queries[qi], gallery[g])) continue;
    ++position;
    if (gallery[g].person_id == queries[qi].person_id) hits.push_back(position);
  }
  return hits;
}

// Round-half-even of k/2, matching the reference expansion rule.
std::size_t half_neighbourhood(std::size_t k) {
  const std::size_t lower = k / 2;
  if (k % 2 == 0) return lower;
  return lower % 2 == 0 ? lower : lower + 1;
}

}  // namespace

Tensor distmat(const Tensor& queries, const Tensor& gallery, Precision mode) {
  if (queries.rank() != 2 || gallery.rank() != 2) throw ShapeError("distmat expects [n, D] inputs");
  if (queries.dim(1) != gallery.dim(1)) {
    throw ShapeError("query dimension " + std::to_string(queries.dim(1)) + " vs gallery dimension " +
                     std::to_string(gallery.dim(1)));
  }
  if (gallery.dim(0) == 0) throw InvalidArgument("empty gallery");
  const Tensor q = queries.as(mode);
  const Tensor g = gallery.as(mode);
  const std::size_t nq = q.dim(0), ng = g.dim(0), dim = q.dim(1);
  std::vector<float> out(nq * ng);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < ng; ++j) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < dim; ++k) {
        const float d = q[i * dim + k] - g[j * dim + k];
        acc += d * d;
      }
      out[i * ng + j] = std::sqrt(acc);
    }
  return Tensor({nq, ng}, std::move(out), Precision::Binary32);
}

std::vector<std::size_t> rank_gallery(const Tensor& dist, std::size_t query) {
  const std::size_t ng = dist.dim(1);
  std::vector<std::size_t> order(ng);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto row = dist.data().subspan(query * ng, ng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  return order;
}

std::vector<double> cmc(const Tensor& dist, std::span<const RowMeta> queries, std::span<const RowMeta> gallery,
                        std::span<const std::size_t> ranks) {
  check_meta(dist, queries, gallery);
  for (std::size_t r : ranks)
    if (r == 0) throw InvalidArgument("CMC ranks are 1-based");
  std::vector<std::size_t> hits(ranks.size(), 0);
  std::size_t kept = 0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto matches = match_ranks(dist, qi, queries, gallery);
    if (matches.empty()) continue;
    ++kept;
    for (std::size_t k = 0; k < ranks.size(); ++k) hits[k] += matches.front() <= ranks[k];
  }
  if (kept == 0) throw InvalidArgument("no query has a valid gallery match");
  std::vector<double> rates(ranks.size());
  for (std::size_t k = 0; k < ranks.size(); ++k) rates[k] = static_cast<double>(hits[k]) / static_cast<double>(kept);
  return rates;
}

double mean_ap(const Tensor& dist, std::span<const RowMeta> queries, std::span<const RowMeta> gallery) {
  check_meta(dist, queries, gallery);
  double total = 0.0;
  std::size_t kept = 0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto matches = match_ranks(dist, qi, queries, gallery);
    if (matches.empty()) continue;
    ++kept;
    double ap = 0.0;
    for (std::size_t m = 0; m < matches.size(); ++m) {
      ap += static_cast<double>(m + 1) / static_cast<double>(matches[m]);
    }
    total += ap / static_cast<double>(matches.size());
  }
  if (kept == 0) throw InvalidArgument("no query has a valid gallery match");
  return total / static_cast<double>(kept);
}

RerankResult k_reciprocal_rerank_detail(const Tensor& queries, const Tensor& gallery, const RerankParams& params,
                                        Precision mode) {
  const Tensor original = distmat(queries, gallery, mode);
  const std::size_t nq = queries.dim(0), ng = gallery.dim(0), total = nq + ng;
  if (params.k2 < 1 || params.k1 < params.k2) throw InvalidArgument("re-ranking requires k1 >= k2 >= 1");
  if (params.k1 > total) {
    throw InvalidArgument("k1 = " + std::to_string(params.k1) + " exceeds the population of " +
                          std::to_string(total));
  }
  if (!(params.lambda >= 0.0 && params.lambda <= 1.0)) throw InvalidArgument("lambda must lie in [0, 1]");

  // joint population: queries first, then gallery
  std::vector<float> joint(queries.data().begin(), queries.data().end());
  joint.insert(joint.end(), gallery.data().begin(), gallery.data().end());
  const Tensor everyone({total, queries.dim(1)}, std::move(joint), queries.mode());
  const Tensor full = distmat(everyone, everyone, mode);

  // squared distances, each row scaled by its maximum
  std::vector<double> d2(total * total);
  for (std::size_t i = 0; i < total; ++i) {
    double row_max = 0.0;
    for (std::size_t j = 0; j < total; ++j) {
      const double v = static_cast<double>(full[i * total + j]) * full[i * total + j];
      d2[i * total + j] = v;
      row_max = std::max(row_max, v);
    }
    if (row_max > 0.0)
      for (std::size_t j = 0; j < total; ++j) d2[i * total + j] /= row_max;
  }

  std::vector<std::vector<std::size_t>> initial_rank(total);
  for (std::size_t i = 0; i < total; ++i) {
    auto& order = initial_rank[i];
    order.resize(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d2[i * total + a] < d2[i * total + b]; });
  }

  auto reciprocal = [&](std::size_t i, std::size_t k) {
    const std::size_t width = std::min(k + 1, total);
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < width; ++f) {
      const std::size_t cand = initial_rank[i][f];
      const auto& back = initial_rank[cand];
      if (std::find(back.begin(), back.begin() + static_cast<std::ptrdiff_t>(width), i) !=
          back.begin() + static_cast<std::ptrdiff_t>(width)) {
        out.push_back(cand);
      }
    }
    return out;
  };

  const std::size_t half_k1 = half_neighbourhood(params.k1);
  std::vector<double> V(total * total, 0.0);
  for (std::size_t i = 0; i < total; ++i) {
    const auto core = reciprocal(i, params.k1);
    std::vector<std::size_t> expansion = core;
    for (std::size_t cand : core) {
      const auto cand_set = reciprocal(cand, half_k1);
      std::size_t shared = 0;
      for (std::size_t c : cand_set) shared += std::find(core.begin(), core.end(), c) != core.end();
      if (static_cast<double>(shared) > 2.0 / 3.0 * static_cast<double>(cand_set.size())) {
        expansion.insert(expansion.end(), cand_set.begin(), cand_set.end());
      }
    }
    std::sort(expansion.begin(), expansion.end());
    expansion.erase(std::unique(expansion.begin(), expansion.end()), expansion.end());
    double weight_sum = 0.0;
    for (std::size_t j : expansion) weight_sum += std::exp(-d2[i * total + j]);
    for (std::size_t j : expansion) V[i * total + j] = std::exp(-d2[i * total + j]) / weight_sum;
  }

  if (params.k2 > 1) {
    std::vector<double> expanded(total * total, 0.0);
    for (std::size_t i = 0; i < total; ++i) {
      for (std::size_t r = 0; r < params.k2; ++r) {
        const std::size_t nb = initial_rank[i][r];
        for (std::size_t j = 0; j < total; ++j) expanded[i * total + j] += V[nb * total + j];
      }
      for (std::size_t j = 0; j < total; ++j) expanded[i * total + j] /= static_cast<double>(params.k2);
    }
    V = std::move(expanded);
  }

  std::vector<float> jaccard(nq * ng), blended(nq * ng);
  const auto lambda = static_cast<float>(params.lambda);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t g = 0; g < ng; ++g) {
      const std::size_t j = nq + g;
      double lo = 0.0, hi = 0.0;
      for (std::size_t k = 0; k < total; ++k) {
        lo += std::min(V[i * total + k], V[j * total + k]);
        hi += std::max(V[i * total + k], V[j * total + k]);
      }
      const float dj = hi > 0.0 ? static_cast<float>(1.0 - lo / hi) : 0.0f;
      jaccard[i * ng + g] = dj;
      blended[i * ng + g] = (1.0f - lambda) * dj + lambda * original[i * ng + g];
    }
  return {Tensor({nq, ng}, std::move(jaccard)), Tensor({nq, ng}, std::move(blended))};
}

Tensor k_reciprocal_rerank(const Tensor& queries, const Tensor& gallery, const RerankParams& params,
                           Precision mode) {
  return k_reciprocal_rerank_detail(queries, gallery, params, mode).final;
}

std::string to_string(EvalVariant v) { return v == EvalVariant::Plain ? "Plain" : "ReRanked"; }

double EvalReport::cmc_at(std::size_t rank) const {
  for (const auto& [r, rate] : cmc)
    if (r == rank) return rate;
  throw InvalidArgument("rank " + std::to_string(rank) + " was not evaluated");
}

EvalReport evaluate(const EmbeddingSet& set, std::span<const std::size_t> ranks, Precision mode,
                    const RerankParams* rerank) {
  const Tensor q = set.matrix(Role::Query);
  const Tensor g = set.matrix(Role::Gallery);
  const auto qm = set.meta(Role::Query);
  const auto gm = set.meta(Role::Gallery);
  const Tensor dist = rerank ? k_reciprocal_rerank(q, g, *rerank, mode) : distmat(q, g, mode);

  EvalReport report;
  report.variant = rerank ? EvalVariant::ReRanked : EvalVariant::Plain;
  report.precision = mode;
  const auto rates = cmc(dist, qm, gm, ranks);
  for (std::size_t k = 0; k < ranks.size(); ++k) report.cmc.emplace_back(ranks[k], rates[k]);
  report.mean_ap = mean_ap(dist, qm, gm);
  for (std::size_t qi = 0; qi < qm.size(); ++qi) report.queries_evaluated += !match_ranks(dist, qi, qm, gm).empty();
  return report;
}

}  // namespace reid
