#include "reid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "reid/error.hpp"

namespace reid {

EmbeddingSet synthesize(const SynthConfig& cfg) {
  if (cfg.ids == 0 || cfg.per_id < 3 || cfg.dim == 0) {
    throw InvalidArgument("synthetic data needs ids >= 1, per_id >= 3 and dim >= 1");
  }
  if (cfg.cameras < 2 || cfg.cameras > 0xFFFF) throw InvalidArgument("synthetic data needs 2..65535 cameras");
  if (!(cfg.noise >= 0.0)) throw InvalidArgument("noise must be non-negative");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1)");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> camera_shift(cfg.cameras, std::vector<double>(cfg.dim));
  for (auto& shift : camera_shift)
    for (double& v : shift) v = normal(rng);

  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(cfg.per_id))), 2, cfg.per_id - 1);
  const std::size_t held = cfg.per_id - n_train;
  const std::size_t n_query = std::max<std::size_t>(1, held / 5);
  if (held < 2) throw InvalidArgument("too few held-out rows per identity for a query and a gallery entry");

  EmbeddingSet set;
  set.dim = cfg.dim;
  for (std::size_t id = 0; id < cfg.ids; ++id) {
    std::vector<double> center(cfg.dim);
    for (double& v : center) v = normal(rng);
    for (std::size_t i = 0; i < cfg.per_id; ++i) {
      Record rec;
      rec.person_id = static_cast<std::uint32_t>(id);
      std::size_t camera = 0;
      if (i < n_train) {
        rec.role = Role::Train;
        camera = i % cfg.cameras;
      } else {
        const std::size_t j = i - n_train;
        rec.role = j < n_query ? Role::Query : Role::Gallery;
        camera = j < n_query ? 0 : 1 + (j % (cfg.cameras - 1));
      }
      rec.camera_id = static_cast<std::uint16_t>(camera);
      rec.vector.resize(cfg.dim);
      for (std::size_t k = 0; k < cfg.dim; ++k) {
        const double jitter = normal(rng);
        rec.vector[k] = static_cast<float>(center[k] + cfg.noise * (0.5 * camera_shift[camera][k] + jitter));
      }
      set.records.push_back(std::move(rec));
    }
  }
  return set;
}

EmbeddingSet noisy_cluster_set(std::size_t clusters, std::size_t queries, std::size_t gallery, std::size_t dim,
                               double spread, double label_noise, std::uint64_t seed) {
  if (clusters < 2 || dim == 0) throw InvalidArgument("need at least two clusters and dim >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(1, clusters - 1);

  std::vector<std::vector<double>> centers(clusters, std::vector<double>(dim));
  for (auto& c : centers)
    for (double& v : c) v = normal(rng);

  EmbeddingSet set;
  set.dim = dim;
  auto emit = [&](std::size_t count, Role role, std::uint16_t camera) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t cluster = i % clusters;
      Record rec;
      rec.role = role;
      rec.camera_id = camera;
      rec.vector.resize(dim);
      for (std::size_t k = 0; k < dim; ++k) rec.vector[k] = static_cast<float>(centers[cluster][k] + spread * normal(rng));
      const bool flip = unit(rng) < label_noise;
      rec.person_id = static_cast<std::uint32_t>(flip ? (cluster + other(rng)) % clusters : cluster);
      set.records.push_back(std::move(rec));
    }
  };
  emit(queries, Role::Query, 0);
  emit(gallery, Role::Gallery, 1);
  return set;
}

}  // namespace reid
