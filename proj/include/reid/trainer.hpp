#pragma once

// Mixed-precision training: binary32 master weights, per-plan working
// copies, static loss scaling with skip-on-overflow, Adam, and the
// constant-then-exponential learning-rate schedule.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "reid/network.hpp"
#include "reid/planner.hpp"
#include "reid/triplet.hpp"

namespace reid {

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t ids_per_batch = 32;
  std::size_t instances_per_id = 4;
  float lr0 = 2e-4f;
  std::size_t epochs = 300;
  std::size_t decay_start = 150;
  float margin = 0.3f;
  std::size_t input_height = 256;
  std::size_t input_width = 128;
  float loss_scale = 1024.0f;
  /// lr at the last epoch is lr0 * decay_floor_factor.
  double decay_floor_factor = 1e-3;
  /// 0 derives ceil(train rows / batch_size).
  std::size_t iters_per_epoch = 0;
  double hard_mix_ratio = 0.5;
  /// 0 means 2 * instances_per_id.
  std::size_t hard_pool_capacity = 0;
  bool squared_distance = true;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t pool_capacity() const { return hard_pool_capacity ? hard_pool_capacity : 2 * instances_per_id; }
};

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t t = 0;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  static AdamState zeros_like(const ParameterSet& params);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct MixedModel {
  NetGeometry geometry;
  PrecisionPlan plan;
  ParameterSet master;   // binary32, authoritative
  ParameterSet working;  // per-plan images of master
  ParameterSet buffers;  // batch-norm running statistics

  friend bool operator==(const MixedModel&, const MixedModel&) = default;
};

/// Kaiming-uniform (fan-in) conv/linear weights, zero biases, identity batch norm.
MixedModel init_model(const NetGeometry& geometry, const PrecisionPlan& plan, std::uint64_t seed);

/// working = binary16 image of master for binary16 layers, exact copy otherwise.
void sync_working(MixedModel& model);

/// True when every working tensor equals the re-derived image of its master.
bool working_in_sync(const MixedModel& model);

float lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/// One bias-corrected Adam step on `params`. Throws on non-finite gradients.
void adam_update(AdamState& opt, ParameterSet& params, std::span<const Tensor> grads, float lr);

/// Training rows: [n, in_channels, height, width] plus one person id per row.
struct TrainingData {
  Tensor features;
  std::vector<std::uint32_t> labels;
};

TrainingData gather_batch(const TrainingData& data, const PkBatch& batch);

struct GradientPass {
  float loss = 0.0f;
  TripletLossOut triplet;
  std::vector<Tensor> scaled_grads;  // d(S * loss)/dW, in each layer's precision
  ParameterSet buffers_after;
};

/// Forward in per-plan precision, binary32 loss, backward seeded with the loss scale.
GradientPass compute_gradients(const MixedModel& model, const TrainingData& batch, const TrainConfig& cfg);

/// Unscales by 1/S in binary32; skips (returns false, no state change) if any
/// gradient is non-finite; otherwise steps Adam, re-syncs working weights and
/// commits the running statistics.
bool apply_gradients(MixedModel& model, AdamState& opt, const GradientPass& pass, float loss_scale, float lr);

struct StepResult {
  float loss = 0.0f;
  bool step_taken = false;
  TripletLossOut triplet;
};

StepResult train_step(MixedModel& model, const TrainingData& batch, const TrainConfig& cfg, AdamState& opt, float lr);

struct EpochStats {
  std::size_t epoch = 0;
  float lr = 0.0f;
  double mean_loss = 0.0;
  std::size_t steps_taken = 0;
  std::size_t steps_skipped = 0;
};

/// Full schedule over `data` with PK sampling from the hard pool.
std::vector<EpochStats> train(MixedModel& model, AdamState& opt, const TrainingData& data, const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

/// Inference-mode embeddings (running statistics) for every row of `features`.
Tensor embed(const MixedModel& model, const Tensor& features);

}  // namespace reid
