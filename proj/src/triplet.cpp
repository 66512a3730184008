#include "reid/triplet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "reid/error.hpp"

namespace reid {

namespace {

std::map<std::uint32_t, std::vector<std::size_t>> rows_by_id(std::span<const std::uint32_t> labels) {
  std::map<std::uint32_t, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(i);
  return rows;
}

// First `count` elements of a partial Fisher-Yates shuffle.
template <typename T>
std::vector<T> draw_without_replacement(std::vector<T> pool, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

std::vector<std::size_t> draw_instances(const std::vector<std::size_t>& rows, std::size_t count,
                                        std::mt19937_64& rng) {
  if (count == 0) return {};
  if (rows.size() >= count) return draw_without_replacement(rows, count, rng);
  std::vector<std::size_t> out(count);
  std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
  for (auto& r : out) r = rows[pick(rng)];
  return out;
}

float pair_distance(std::span<const float> a, std::span<const float> b, bool squared) {
  float acc = 0.0f;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const float d = a[k] - b[k];
    acc += d * d;
  }
  return squared ? acc : std::sqrt(acc);
}

}  // namespace

HardPool::HardPool(std::size_t capacity_per_id) : capacity_(capacity_per_id) {
  if (capacity_ == 0) throw InvalidArgument("hard pool capacity must be positive");
}

void HardPool::offer(std::uint32_t person_id, std::size_t index, float hinge) {
  auto& list = by_id_[person_id];
  auto it = std::find_if(list.begin(), list.end(), [&](const Entry& e) { return e.index == index; });
  if (it != list.end()) {
    it->hinge = hinge;
  } else {
    list.push_back({index, hinge});
  }
  std::sort(list.begin(), list.end(), [](const Entry& a, const Entry& b) {
    return a.hinge != b.hinge ? a.hinge > b.hinge : a.index < b.index;
  });
  if (list.size() > capacity_) list.resize(capacity_);
}

std::span<const HardPool::Entry> HardPool::entries(std::uint32_t person_id) const {
  auto it = by_id_.find(person_id);
  if (it == by_id_.end()) return {};
  return it->second;
}

std::size_t HardPool::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& [id, list] : by_id_) n += list.size();
  return n;
}

PkBatch pk_sample_hard(std::span<const std::uint32_t> labels, const HardPool& pool,
                       std::size_t ids_per_batch, std::size_t instances_per_id, double mix_ratio,
                       std::uint64_t seed) {
  if (ids_per_batch == 0 || instances_per_id == 0) {
    throw InvalidArgument("P and K must be positive");
  }
  if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) throw InvalidArgument("mix_ratio must lie in [0, 1]");
  const auto rows = rows_by_id(labels);
  if (rows.size() < ids_per_batch) {
    throw InvalidArgument("dataset has " + std::to_string(rows.size()) + " identities, batch needs " +
                          std::to_string(ids_per_batch));
  }

  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> ids;
  ids.reserve(rows.size());
  for (const auto& [id, _] : rows) ids.push_back(id);
  ids = draw_without_replacement(std::move(ids), ids_per_batch, rng);

  const auto from_pool_target = static_cast<std::size_t>(std::ceil(mix_ratio * static_cast<double>(instances_per_id)));
  PkBatch batch;
  batch.ids_per_batch = ids_per_batch;
  batch.instances_per_id = instances_per_id;
  for (std::uint32_t id : ids) {
    const auto pooled = pool.entries(id);
    const std::size_t n_pool = std::min(from_pool_target, pooled.size());
    std::vector<std::size_t> picked;
    if (n_pool > 0) {
      std::vector<std::size_t> candidates;
      for (const auto& e : pooled) candidates.push_back(e.index);
      picked = draw_without_replacement(std::move(candidates), n_pool, rng);
    }
    for (std::size_t r : picked) {
      if (r >= labels.size() || labels[r] != id) {
        throw StateError("hard pool entry " + std::to_string(r) + " does not belong to identity " +
                         std::to_string(id));
      }
    }
    const auto rest = draw_instances(rows.at(id), instances_per_id - n_pool, rng);
    for (std::size_t i = 0; i < instances_per_id; ++i) {
      const bool pooled_row = i < n_pool;
      batch.indices.push_back(pooled_row ? picked[i] : rest[i - n_pool]);
      batch.person_ids.push_back(id);
      batch.from_pool.push_back(pooled_row);
    }
  }
  return batch;
}

PkBatch pk_sample(std::span<const std::uint32_t> labels, std::size_t ids_per_batch,
                  std::size_t instances_per_id, std::uint64_t seed) {
  return pk_sample_hard(labels, HardPool(1), ids_per_batch, instances_per_id, 0.0, seed);
}

TripletLossOut batch_hard_triplet_loss(const Tensor& embeddings, std::span<const std::uint32_t> labels,
                                       const TripletOptions& options) {
  if (embeddings.rank() != 2 || embeddings.dim(1) == 0) {
    throw ShapeError("embeddings must be [n, D] with D >= 1, got " + shape_string(embeddings.shape()));
  }
  const std::size_t n = embeddings.dim(0), dim = embeddings.dim(1);
  if (labels.size() != n) throw ShapeError("label count differs from embedding rows");
  if (n == 0) throw ShapeError("empty batch");
  for (float v : embeddings.data()) {
    if (std::isnan(v)) throw InvalidArgument("NaN in embeddings");
  }
  for (const auto& [id, rows] : rows_by_id(labels)) {
    if (rows.size() < 2) {
      throw InvalidArgument("identity " + std::to_string(id) + " has a single instance; no positive");
    }
  }

  const auto data = embeddings.data();
  auto row = [&](std::size_t i) { return data.subspan(i * dim, dim); };

  // symmetric distance table, each pair evaluated once
  std::vector<float> dist(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const float d = pair_distance(row(i), row(j), options.squared);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }

  TripletLossOut out;
  out.per_anchor.resize(n);
  float total = 0.0f;
  for (std::size_t a = 0; a < n; ++a) {
    bool have_pos = false, have_neg = false;
    AnchorResult r;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const float d = dist[a * n + j];
      if (labels[j] == labels[a]) {
        if (!have_pos || d > r.positive_distance) {
          r.hardest_positive = j;
          r.positive_distance = d;
          have_pos = true;
        }
      } else if (!have_neg || d < r.negative_distance) {
        r.hardest_negative = j;
        r.negative_distance = d;
        have_neg = true;
      }
    }
    if (!have_neg) throw InvalidArgument("batch holds a single identity; no negatives");
    r.hinge = std::max(0.0f, options.margin + r.positive_distance - r.negative_distance);
    total += r.hinge;
    out.per_anchor[a] = r;
  }
  out.loss = total / static_cast<float>(n);
  return out;
}

Tensor batch_hard_triplet_backward(const Tensor& embeddings, const TripletLossOut& out,
                                   const TripletOptions& options, float upstream) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != out.per_anchor.size()) {
    throw ShapeError("triplet backward: embeddings do not match the loss output");
  }
  const std::size_t n = embeddings.dim(0), dim = embeddings.dim(1);
  const auto e = embeddings.data();
  std::vector<float> grad(n * dim, 0.0f);
  const float per_anchor = upstream / static_cast<float>(n);

  for (std::size_t a = 0; a < n; ++a) {
    const AnchorResult& r = out.per_anchor[a];
    if (r.hinge <= 0.0f) continue;
    const std::size_t p = r.hardest_positive, q = r.hardest_negative;
    // d/df of |f_a - f_x|^2 is 2(f_a - f_x); the unsquared form divides by the distance
    float pos_coef = 2.0f * per_anchor;
    float neg_coef = 2.0f * per_anchor;
    if (!options.squared) {
      pos_coef = r.positive_distance > 0.0f ? per_anchor / r.positive_distance : 0.0f;
      neg_coef = r.negative_distance > 0.0f ? per_anchor / r.negative_distance : 0.0f;
    }
    for (std::size_t k = 0; k < dim; ++k) {
      const float dp = e[a * dim + k] - e[p * dim + k];
      const float dn = e[a * dim + k] - e[q * dim + k];
      grad[a * dim + k] += pos_coef * dp - neg_coef * dn;
      grad[p * dim + k] -= pos_coef * dp;
      grad[q * dim + k] += neg_coef * dn;
    }
  }
  return Tensor({n, dim}, std::move(grad), Precision::Binary32);
}

void update_hard_pool(HardPool& pool, const PkBatch& batch, const TripletLossOut& out) {
  if (out.per_anchor.size() != batch.size()) {
    throw ShapeError("hard pool update: loss output does not match batch");
  }
  for (std::size_t a = 0; a < batch.size(); ++a) {
    const float hinge = out.per_anchor[a].hinge;
    if (hinge > 0.0f) pool.offer(batch.person_ids[a], batch.indices[a], hinge);
  }
}

}  // namespace reid
