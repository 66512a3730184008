#include "reid/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "reid/error.hpp"
#include "reid/half.hpp"
#include "reid/io.hpp"
#include "reid/planner.hpp"

namespace reid {

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

NetGeometry resolve_geometry(const TrainOptions& opts, std::size_t data_dim) {
  NetGeometry g;
  g.in_channels = opts.in_channels;
  g.channels = opts.channels;
  g.embedding_dim = opts.embedding_dim;
  if (opts.height && opts.width) {
    g.height = opts.height;
    g.width = opts.width;
  } else {
    const std::size_t per_channel = opts.in_channels ? data_dim / opts.in_channels : 0;
    const auto w = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(per_channel) / 2.0)));
    if (w > 0 && 2 * w * w == per_channel) {
      g.height = 2 * w;
      g.width = w;
    } else {
      g.height = per_channel;
      g.width = 1;
    }
  }
  g.validate();
  if (g.input_dim() != data_dim) {
    throw ShapeError("network input " + std::to_string(g.in_channels) + "x" + std::to_string(g.height) + "x" +
                     std::to_string(g.width) + " does not match data dimension " + std::to_string(data_dim));
  }
  return g;
}

PrecisionPlan resolve_plan(const std::string& spec, const LayerManifest& manifest) {
  if (spec == "mixed") return partition(manifest);
  if (spec == "binary32") return uniform_plan(manifest, LayerPrecision::Binary32);
  std::ifstream in(spec);
  if (!in) throw InvalidArgument("plan must be 'mixed', 'binary32' or a readable plan file, got '" + spec + "'");
  PrecisionPlan plan = parse_plan(in);
  for (const auto& e : manifest.entries) (void)plan.at(e.name);
  return plan;
}

Tensor features_of(const EmbeddingSet& set, const std::vector<const Record*>& rows, const NetGeometry& g) {
  std::vector<float> values;
  values.reserve(rows.size() * set.dim);
  for (const Record* r : rows) values.insert(values.end(), r->vector.begin(), r->vector.end());
  return Tensor({rows.size(), g.in_channels, g.height, g.width}, std::move(values));
}

Json report_json(const EvalReport& r) {
  Json cmc = Json::object();
  for (const auto& [rank, rate] : r.cmc) cmc[std::to_string(rank)] = rate;
  return {{"variant", to_string(r.variant)},
          {"precision", to_string(r.precision)},
          {"cmc", cmc},
          {"mAP", r.mean_ap},
          {"queries_evaluated", r.queries_evaluated}};
}

struct TimingSummary {
  std::vector<double> samples_ms;
  double median = 0, min = 0, max = 0;
};

TimingSummary summarize(std::vector<double> samples) {
  TimingSummary s;
  s.samples_ms = samples;
  std::sort(samples.begin(), samples.end());
  s.min = samples.front();
  s.max = samples.back();
  const std::size_t n = samples.size();
  s.median = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  return s;
}

}  // namespace

std::string config_hash(const Json& config) { return hex64(fnv1a64(config.dump())); }

Json cmd_synth(const SynthOptions& opts) {
  const EmbeddingSet set = synthesize(opts.config);
  write_embedding_file(opts.out, set);
  const Json cfg = {{"ids", opts.config.ids},       {"per_id", opts.config.per_id}, {"dim", opts.config.dim},
                    {"noise", opts.config.noise},   {"seed", opts.config.seed},     {"cameras", opts.config.cameras},
                    {"train_fraction", opts.config.train_fraction}};
  return {{"command", "synth"},
          {"config_hash", config_hash(cfg)},
          {"out", opts.out},
          {"records", set.records.size()},
          {"train", set.count(Role::Train)},
          {"query", set.count(Role::Query)},
          {"gallery", set.count(Role::Gallery)}};
}

Json train_options_json(const TrainOptions& o) {
  const TrainConfig& c = o.config;
  return {{"batch_size", c.batch_size},
          {"ids_per_batch", c.ids_per_batch},
          {"instances_per_id", c.instances_per_id},
          {"lr0", c.lr0},
          {"epochs", c.epochs},
          {"decay_start", c.decay_start},
          {"margin", c.margin},
          {"input_height", c.input_height},
          {"input_width", c.input_width},
          {"loss_scale", c.loss_scale},
          {"decay_floor_factor", c.decay_floor_factor},
          {"iters_per_epoch", c.iters_per_epoch},
          {"hard_mix_ratio", c.hard_mix_ratio},
          {"hard_pool_capacity", c.pool_capacity()},
          {"squared_distance", c.squared_distance},
          {"seed", c.seed},
          {"data", o.data},
          {"plan", o.plan},
          {"channels", o.channels},
          {"embedding_dim", o.embedding_dim},
          {"in_channels", o.in_channels}};
}

Json cmd_train(const TrainOptions& opts) {
  const EmbeddingSet data = read_embedding_file(opts.data);
  std::vector<const Record*> rows;
  TrainingData training;
  for (const Record& r : data.records) {
    if (r.role != Role::Train) continue;
    rows.push_back(&r);
    training.labels.push_back(r.person_id);
  }
  if (rows.empty()) throw InvalidArgument("'" + opts.data + "' holds no training rows");

  TrainConfig cfg = opts.config;
  const NetGeometry geometry = resolve_geometry(opts, data.dim);
  cfg.input_height = geometry.height;
  cfg.input_width = geometry.width;
  cfg.validate();
  training.features = features_of(data, rows, geometry);

  TrainOptions effective = opts;
  effective.config = cfg;
  const Json config = train_options_json(effective);
  const std::string hash = config_hash(config);

  const LayerManifest manifest = network_manifest(geometry);
  MixedModel model = init_model(geometry, resolve_plan(opts.plan, manifest), cfg.seed);
  AdamState opt = AdamState::zeros_like(model.master);

  std::ostringstream log;
  log << "epoch,lr,mean_loss,steps_taken,steps_skipped,config_hash\n";
  const auto history = train(model, opt, training, cfg, [&](const EpochStats& s) {
    log << s.epoch << ',' << format_double(s.lr) << ',' << format_double(s.mean_loss) << ',' << s.steps_taken << ','
        << s.steps_skipped << ',' << hash << '\n';
  });

  Checkpoint ckpt;
  ckpt.config_hash = fnv1a64(config.dump());
  ckpt.step = opt.t;
  ckpt.epochs_completed = static_cast<std::uint32_t>(history.size());
  ckpt.model = model;
  ckpt.adam = opt;
  if (!opts.checkpoint_out.empty()) write_checkpoint(opts.checkpoint_out, ckpt);
  if (!opts.loss_log.empty()) write_file_atomic(opts.loss_log, log.str());

  Json epochs = Json::array();
  for (const auto& s : history) {
    epochs.push_back({{"epoch", s.epoch}, {"lr", s.lr}, {"mean_loss", s.mean_loss},
                      {"steps_taken", s.steps_taken}, {"steps_skipped", s.steps_skipped}});
  }
  return {{"command", "train"},
          {"config_hash", hash},
          {"config", config},
          {"train_rows", rows.size()},
          {"steps", opt.t},
          {"final_mean_loss", history.empty() ? Json(nullptr) : Json(history.back().mean_loss)},
          {"epochs", epochs}};
}

Json cmd_embed(const EmbedOptions& opts) {
  Checkpoint ckpt = read_checkpoint(opts.checkpoint);
  MixedModel& model = ckpt.model;
  if (opts.compute) {
    model.plan = resolve_plan(*opts.compute, network_manifest(model.geometry));
    sync_working(model);
  }
  const EmbeddingSet inputs = read_embedding_file(opts.inputs);
  std::vector<const Record*> rows;
  for (const Record& r : inputs.records) rows.push_back(&r);
  if (inputs.dim != model.geometry.input_dim()) {
    throw ShapeError("inputs have dimension " + std::to_string(inputs.dim) + ", network expects " +
                     std::to_string(model.geometry.input_dim()));
  }
  const Tensor emb = embed(model, features_of(inputs, rows, model.geometry));

  EmbeddingSet out;
  out.dim = model.geometry.embedding_dim;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Record rec{rows[i]->person_id, rows[i]->camera_id, rows[i]->role, {}};
    const auto v = emb.data().subspan(i * out.dim, out.dim);
    rec.vector.assign(v.begin(), v.end());
    out.records.push_back(std::move(rec));
  }
  if (opts.precision == Precision::Binary16Emulated) out = out.quantized();
  write_embedding_file(opts.out, out);

  const Json cfg = {{"checkpoint_hash", hex64(ckpt.config_hash)},
                    {"inputs", opts.inputs},
                    {"precision", to_string(opts.precision)},
                    {"compute", opts.compute.value_or("checkpoint")}};
  return {{"command", "embed"}, {"config_hash", config_hash(cfg)}, {"config", cfg},
          {"records", out.records.size()}, {"dim", out.dim}, {"out", opts.out}};
}

std::vector<EvalReport> run_eval(const EvalOptions& opts) {
  const EmbeddingSet set = read_embedding_file(opts.embeddings);
  if (set.count(Role::Gallery) == 0) throw InvalidArgument("'" + opts.embeddings + "' holds no gallery rows");
  if (set.count(Role::Query) == 0) throw InvalidArgument("'" + opts.embeddings + "' holds no query rows");
  const Precision mode = opts.distance_precision.value_or(set.precision);
  std::vector<EvalReport> reports{evaluate(set, opts.ranks, mode)};
  if (opts.rerank) reports.push_back(evaluate(set, opts.ranks, mode, &opts.rerank_params));
  return reports;
}

Json cmd_eval(const EvalOptions& opts) {
  const auto reports = run_eval(opts);
  Json cfg = {{"embeddings", opts.embeddings},
              {"ranks", opts.ranks},
              {"rerank", opts.rerank},
              {"k1", opts.rerank_params.k1},
              {"k2", opts.rerank_params.k2},
              {"lambda", opts.rerank_params.lambda},
              {"distance_precision", to_string(reports.front().precision)}};
  const std::string hash = config_hash(cfg);

  std::ostringstream csv;
  csv << "variant,precision";
  for (std::size_t r : opts.ranks) csv << ",cmc_" << r;
  csv << ",mAP,queries_evaluated,config_hash\n";
  Json rows = Json::array();
  for (const auto& r : reports) {
    csv << to_string(r.variant) << ',' << to_string(r.precision);
    for (const auto& [rank, rate] : r.cmc) csv << ',' << format_double(rate);
    csv << ',' << format_double(r.mean_ap) << ',' << r.queries_evaluated << ',' << hash << '\n';
    rows.push_back(report_json(r));
  }
  Json out = {{"command", "eval"}, {"config_hash", hash}, {"config", cfg}, {"reports", rows}};
  if (!opts.out.empty()) {
    write_file_atomic(opts.out + ".csv", csv.str());
    write_file_atomic(opts.out + ".json", out.dump(2) + "\n");
  }
  return out;
}

Json cmd_plan(const PlanOptions& opts) {
  if (opts.manifests.empty()) throw InvalidArgument("plan needs at least one manifest");
  Json models = Json::array();
  std::ostringstream csv;
  csv << "model,layers,params,bytes_binary32,bytes_mixed,mb_binary32,mb_mixed,ratio,macs\n";
  std::vector<std::pair<std::uint64_t, std::uint64_t>> sizes;
  for (const auto& path : opts.manifests) {
    const LayerManifest manifest = load_manifest(path);
    const PrecisionPlan plan = partition(manifest);
    const std::uint64_t wide = model_size_bytes(manifest, uniform_plan(manifest, LayerPrecision::Binary32)).total_bytes;
    const std::uint64_t mixed = model_size_bytes(manifest, plan).total_bytes;
    std::uint64_t params = 0;
    for (const auto& e : manifest.entries) params += e.param_count;
    const std::string stem = std::filesystem::path(path).stem().string();
    const double ratio = mixed ? static_cast<double>(wide) / static_cast<double>(mixed) : 0.0;
    const std::uint64_t macs = manifest_mac_count(manifest);

    std::ostringstream plan_text;
    write_plan(plan_text, plan, &manifest);
    if (!opts.out_dir.empty()) write_file_atomic((std::filesystem::path(opts.out_dir) / (stem + ".plan")).string(), plan_text.str());

    csv << stem << ',' << manifest.entries.size() << ',' << params << ',' << wide << ',' << mixed << ','
        << format_double(static_cast<double>(wide) / 1e6) << ',' << format_double(static_cast<double>(mixed) / 1e6) << ','
        << format_double(ratio) << ',' << macs << '\n';
    models.push_back({{"model", stem},
                      {"manifest", path},
                      {"layers", manifest.entries.size()},
                      {"params", params},
                      {"bytes_binary32", wide},
                      {"bytes_mixed", mixed},
                      {"mb_binary32", static_cast<double>(wide) / 1e6},
                      {"mb_mixed", static_cast<double>(mixed) / 1e6},
                      {"ratio", ratio},
                      {"macs", macs}});
    sizes.emplace_back(wide, mixed);
  }
  Json out = {{"command", "plan"}, {"config_hash", config_hash(Json(opts.manifests))}, {"models", models}};
  if (sizes.size() >= 2) {
    // baseline (first manifest, binary32) over the last manifest's mixed size
    out["cross_model_ratio"] = static_cast<double>(sizes.front().first) / static_cast<double>(sizes.back().second);
  }
  if (!opts.out_dir.empty()) {
    const std::filesystem::path dir(opts.out_dir);
    write_file_atomic((dir / "size_report.csv").string(), csv.str());
    write_file_atomic((dir / "size_report.json").string(), out.dump(2) + "\n");
  }
  return out;
}

Json cmd_bench(const BenchOptions& opts) {
  if (opts.repeats < 3) throw InvalidArgument("bench needs at least 3 repeats");
  if (opts.dim == 0 || opts.queries == 0 || opts.gallery == 0) throw InvalidArgument("bench sizes must be positive");

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto unit_rows = [&](std::size_t n) {
    std::vector<float> v(n * opts.dim);
    for (std::size_t i = 0; i < n; ++i) {
      float norm = 0.0f;
      for (std::size_t k = 0; k < opts.dim; ++k) {
        v[i * opts.dim + k] = normal(rng);
        norm += v[i * opts.dim + k] * v[i * opts.dim + k];
      }
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < opts.dim; ++k) v[i * opts.dim + k] /= norm;
    }
    return Tensor({n, opts.dim}, std::move(v));
  };
  const Tensor queries = unit_rows(opts.queries);
  const bool identical = opts.queries == opts.gallery;
  const Tensor gallery = identical ? queries : unit_rows(opts.gallery);

  if (identical) {
    for (Precision mode : {Precision::Binary32, Precision::Binary16Emulated}) {
      const Tensor d = distmat(queries, gallery, mode);
      const std::size_t n = opts.queries;
      for (std::size_t i = 0; i < n; ++i) {
        if (d[i * n + i] != 0.0f) throw StateError("distmat diagonal is not zero");
        for (std::size_t j = i + 1; j < n; ++j)
          if (std::fabs(d[i * n + j] - d[j * n + i]) > 1e-6f) throw StateError("distmat is not symmetric");
      }
    }
  }

  Json modes = Json::object();
  std::uint64_t bytes32 = 0, bytes16 = 0;
  for (Precision mode : {Precision::Binary32, Precision::Binary16Emulated}) {
    std::vector<double> samples;
    float checksum = 0.0f;
    for (std::size_t r = 0; r < opts.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor d = distmat(queries, gallery, mode);
      const auto t1 = std::chrono::steady_clock::now();
      checksum += d[0];
      samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    const TimingSummary s = summarize(samples);
    const std::uint64_t width = mode == Precision::Binary32 ? 4 : 2;
    const std::uint64_t bytes = (opts.queries + (identical ? 0 : opts.gallery)) * opts.dim * width;
    (mode == Precision::Binary32 ? bytes32 : bytes16) = bytes;
    modes[to_string(mode)] = {{"samples_ms", s.samples_ms}, {"median_ms", s.median}, {"min_ms", s.min},
                              {"max_ms", s.max},            {"spread_ms", s.max - s.min}, {"storage_bytes", bytes},
                              {"checksum", checksum}};
  }
  const Json cfg = {{"dim", opts.dim}, {"queries", opts.queries}, {"gallery", opts.gallery},
                    {"repeats", opts.repeats}, {"seed", opts.seed}};
  Json out = {{"command", "bench"},
              {"config_hash", config_hash(cfg)},
              {"config", cfg},
              {"symmetry_checked", identical},
              {"modes", modes},
              {"storage_ratio", static_cast<double>(bytes32) / static_cast<double>(bytes16)},
              {"note",
               "binary16 is emulated in software here and is not expected to run faster than binary32; "
               "speedups on real half-precision hardware come from the hardware, only the storage ratio carries over"}};
  if (!opts.out.empty()) write_file_atomic(opts.out, out.dump(2) + "\n");
  return out;
}

}  // namespace reid
