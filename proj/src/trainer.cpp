#include "reid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "reid/error.hpp"
#include "reid/half.hpp"

namespace reid {

namespace {

bool is_power_of_two(float s) {
  if (!(s > 0.0f) || !std::isfinite(s)) return false;
  int exp = 0;
  return std::frexp(s, &exp) == 0.5f;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::size_t fan_in(const Parameter& p) {
  const Shape& s = p.value.shape();
  std::size_t f = 1;
  for (std::size_t i = 1; i < s.size(); ++i) f *= s[i];
  return f;
}

void require_finite_masters(const MixedModel& model) {
  for (const auto& p : model.master) {
    if (!p.value.all_finite()) throw StateError("master weight '" + p.name + "' is not finite");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (ids_per_batch == 0 || instances_per_id == 0) throw InvalidArgument("P and K must be positive");
  if (batch_size != ids_per_batch * instances_per_id) {
    throw InvalidArgument("batch_size " + std::to_string(batch_size) + " != P*K = " +
                          std::to_string(ids_per_batch * instances_per_id));
  }
  if (!is_power_of_two(loss_scale)) throw InvalidArgument("loss scale must be a positive power of two");
  if (!(lr0 > 0.0f)) throw InvalidArgument("initial learning rate must be positive");
  if (decay_start > epochs) throw InvalidArgument("decay_start exceeds epochs");
  if (!(decay_floor_factor > 0.0 && decay_floor_factor <= 1.0)) {
    throw InvalidArgument("decay_floor_factor must lie in (0, 1]");
  }
  if (!(hard_mix_ratio >= 0.0 && hard_mix_ratio <= 1.0)) throw InvalidArgument("hard_mix_ratio must lie in [0, 1]");
  if (!(margin >= 0.0f)) throw InvalidArgument("margin must be non-negative");
}

AdamState AdamState::zeros_like(const ParameterSet& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.size(), 0.0f);
    s.v.emplace_back(p.value.size(), 0.0f);
  }
  return s;
}

MixedModel init_model(const NetGeometry& geometry, const PrecisionPlan& plan, std::uint64_t seed) {
  MixedModel model;
  model.geometry = geometry;
  model.plan = plan;
  model.master = make_parameters(geometry);
  model.buffers = make_bn_buffers(geometry);
  for (const auto& e : network_manifest(geometry).entries) (void)plan.at(e.name);

  std::mt19937_64 rng(seed);
  for (auto& p : model.master) {
    const bool is_weight = p.name.ends_with(".weight");
    if (!is_weight) continue;
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in(p)));
    std::uniform_real_distribution<float> dist(-bound, bound);
    std::vector<float> w(p.value.size());
    for (float& v : w) v = dist(rng);
    p.value = Tensor(p.value.shape(), std::move(w));
  }
  sync_working(model);
  return model;
}

void sync_working(MixedModel& model) {
  model.working = model.master;
  for (auto& p : model.working) p.value = p.value.as(layer_mode(model.plan, p.layer));
}

bool working_in_sync(const MixedModel& model) {
  if (model.working.size() != model.master.size()) return false;
  for (std::size_t i = 0; i < model.master.size(); ++i) {
    const Tensor expected = model.master[i].value.as(layer_mode(model.plan, model.master[i].layer));
    if (!(expected == model.working[i].value)) return false;
  }
  return true;
}

float lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.epochs) {
    throw InvalidArgument("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  if (epoch < cfg.decay_start) return cfg.lr0;
  const double progress = static_cast<double>(epoch - cfg.decay_start + 1) /
                          static_cast<double>(cfg.epochs - cfg.decay_start);
  return static_cast<float>(static_cast<double>(cfg.lr0) * std::pow(cfg.decay_floor_factor, progress));
}

void adam_update(AdamState& opt, ParameterSet& params, std::span<const Tensor> grads, float lr) {
  if (grads.size() != params.size() || opt.m.size() != params.size() || opt.v.size() != params.size()) {
    throw ShapeError("Adam: gradient/state count does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size() || opt.m[i].size() != params[i].value.size()) {
      throw ShapeError("Adam: shape mismatch for '" + params[i].name + "'");
    }
    if (!grads[i].all_finite()) throw InvalidArgument("Adam: non-finite gradient for '" + params[i].name + "'");
  }
  ++opt.t;
  const auto t = static_cast<double>(opt.t);
  const auto bias1 = static_cast<float>(1.0 - std::pow(static_cast<double>(opt.beta1), t));
  const auto bias2 = static_cast<float>(1.0 - std::pow(static_cast<double>(opt.beta2), t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<float> w(params[i].value.data().begin(), params[i].value.data().end());
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const float g = grads[i][k];
      m[k] = opt.beta1 * m[k] + (1.0f - opt.beta1) * g;
      v[k] = opt.beta2 * v[k] + (1.0f - opt.beta2) * g * g;
      const float m_hat = m[k] / bias1;
      const float v_hat = v[k] / bias2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
    params[i].value = Tensor(params[i].value.shape(), std::move(w));
  }
}

TrainingData gather_batch(const TrainingData& data, const PkBatch& batch) {
  if (data.features.rank() < 2) throw ShapeError("training features need a leading row axis");
  const std::size_t rows = data.features.dim(0);
  const std::size_t row_size = rows ? data.features.size() / rows : 0;
  std::vector<float> values;
  values.reserve(batch.size() * row_size);
  TrainingData out;
  for (std::size_t idx : batch.indices) {
    if (idx >= rows) throw ShapeError("batch row " + std::to_string(idx) + " out of range");
    const auto src = data.features.data().subspan(idx * row_size, row_size);
    values.insert(values.end(), src.begin(), src.end());
    out.labels.push_back(data.labels[idx]);
  }
  Shape shape = data.features.shape();
  shape[0] = batch.size();
  out.features = Tensor(std::move(shape), std::move(values), data.features.mode());
  return out;
}

GradientPass compute_gradients(const MixedModel& model, const TrainingData& batch, const TrainConfig& cfg) {
  require_finite_masters(model);
  const ForwardTrace trace = network_forward(model.geometry, model.working, model.buffers, model.plan,
                                             batch.features, /*training=*/true);
  const TripletOptions options{cfg.margin, cfg.squared_distance};
  GradientPass pass;
  pass.triplet = batch_hard_triplet_loss(trace.embedding, batch.labels, options);
  pass.loss = pass.triplet.loss;
  const Tensor grad_embedding = batch_hard_triplet_backward(trace.embedding, pass.triplet, options, cfg.loss_scale);
  pass.scaled_grads = network_backward(model.geometry, model.working, model.buffers, model.plan, trace, grad_embedding);
  pass.buffers_after = trace.buffers_after;
  return pass;
}

bool apply_gradients(MixedModel& model, AdamState& opt, const GradientPass& pass, float loss_scale, float lr) {
  if (pass.scaled_grads.size() != model.master.size()) throw ShapeError("gradient count does not match model");
  const float inv_scale = 1.0f / loss_scale;  // exact for a power of two
  std::vector<Tensor> grads;
  grads.reserve(pass.scaled_grads.size());
  for (const Tensor& g : pass.scaled_grads) {
    std::vector<float> v(g.data().begin(), g.data().end());
    for (float& x : v) x *= inv_scale;
    grads.emplace_back(g.shape(), std::move(v));
  }
  const bool finite = std::all_of(grads.begin(), grads.end(), [](const Tensor& g) { return g.all_finite(); });
  if (!finite || !std::isfinite(pass.loss)) return false;

  adam_update(opt, model.master, grads, lr);
  sync_working(model);
  model.buffers = pass.buffers_after;
  return true;
}

StepResult train_step(MixedModel& model, const TrainingData& batch, const TrainConfig& cfg, AdamState& opt, float lr) {
  const GradientPass pass = compute_gradients(model, batch, cfg);
  StepResult r;
  r.loss = pass.loss;
  r.step_taken = apply_gradients(model, opt, pass, cfg.loss_scale, lr);
  r.triplet = pass.triplet;
  return r;
}

std::vector<EpochStats> train(MixedModel& model, AdamState& opt, const TrainingData& data, const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (data.features.rank() == 0 || data.features.dim(0) != data.labels.size()) {
    throw ShapeError("training features and labels disagree in length");
  }
  const std::size_t rows = data.labels.size();
  const std::size_t iters =
      cfg.iters_per_epoch ? cfg.iters_per_epoch : std::max<std::size_t>(1, (rows + cfg.batch_size - 1) / cfg.batch_size);

  HardPool pool(cfg.pool_capacity());
  std::vector<EpochStats> history;
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr_schedule(epoch, cfg);
    double loss_sum = 0.0;
    for (std::size_t it = 0; it < iters; ++it, ++step) {
      const PkBatch batch = pk_sample_hard(data.labels, pool, cfg.ids_per_batch, cfg.instances_per_id,
                                           cfg.hard_mix_ratio, splitmix64(cfg.seed ^ splitmix64(step)));
      const StepResult r = train_step(model, gather_batch(data, batch), cfg, opt, stats.lr);
      loss_sum += r.loss;
      if (r.step_taken) {
        ++stats.steps_taken;
        update_hard_pool(pool, batch, r.triplet);
      } else {
        ++stats.steps_skipped;
      }
    }
    stats.mean_loss = loss_sum / static_cast<double>(iters);
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

Tensor embed(const MixedModel& model, const Tensor& features) {
  const std::size_t rows = features.rank() ? features.dim(0) : 0;
  const std::size_t row_size = rows ? features.size() / rows : 0;
  const std::size_t D = model.geometry.embedding_dim;
  constexpr std::size_t kChunk = 256;
  std::vector<float> out;
  out.reserve(rows * D);
  for (std::size_t begin = 0; begin < rows; begin += kChunk) {
    const std::size_t n = std::min(kChunk, rows - begin);
    const auto src = features.data().subspan(begin * row_size, n * row_size);
    Shape shape = features.shape();
    shape[0] = n;
    const Tensor chunk(std::move(shape), std::vector<float>(src.begin(), src.end()), features.mode());
    const ForwardTrace t = network_forward(model.geometry, model.working, model.buffers, model.plan, chunk, false);
    out.insert(out.end(), t.embedding.data().begin(), t.embedding.data().end());
  }
  return Tensor({rows, D}, std::move(out));
}

}  // namespace reid
