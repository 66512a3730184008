#pragma once

// The verbs behind the `reid` executable. Each one writes its files
// atomically and returns a JSON summary that embeds the config hash.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "reid/retrieval.hpp"
#include "reid/synth.hpp"
#include "reid/trainer.hpp"

namespace reid {

using Json = nlohmann::json;

/// FNV-1a of the canonical (sorted-key) JSON dump.
std::string config_hash(const Json& config);

struct SynthOptions {
  SynthConfig config;
  std::string out;
};

Json cmd_synth(const SynthOptions& opts);

struct TrainOptions {
  TrainConfig config;
  std::string data;  // embedding file; rows with role train are used
  /// "mixed" (partitioned), "binary32", or a path to a plan file.
  std::string plan = "mixed";
  std::size_t channels = 16;
  std::size_t embedding_dim = 16;
  std::size_t in_channels = 1;
  /// 0 infers a 2:1 (height:width) map from the data dimension.
  std::size_t height = 0;
  std::size_t width = 0;
  std::string checkpoint_out;
  std::string loss_log;  // CSV
};

Json train_options_json(const TrainOptions& opts);
Json cmd_train(const TrainOptions& opts);

struct EmbedOptions {
  std::string checkpoint;
  std::string inputs;
  /// Storage precision of the written vectors.
  Precision precision = Precision::Binary32;
  /// Overrides the checkpoint's plan for the forward pass ("binary32" or "mixed").
  std::optional<std::string> compute;
  std::string out;
};

Json cmd_embed(const EmbedOptions& opts);

struct EvalOptions {
  std::string embeddings;
  std::vector<std::size_t> ranks{1, 5, 10};
  bool rerank = false;
  RerankParams rerank_params;
  /// Defaults to the file's precision flag.
  std::optional<Precision> distance_precision;
  std::string out;  // writes <out>.csv and <out>.json
};

std::vector<EvalReport> run_eval(const EvalOptions& opts);
Json cmd_eval(const EvalOptions& opts);

struct PlanOptions {
  std::vector<std::string> manifests;
  std::string out_dir;
};

Json cmd_plan(const PlanOptions& opts);

struct BenchOptions {
  std::size_t dim = 128;
  std::size_t queries = 64;
  std::size_t gallery = 64;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::string out;  // optional JSON path
};

Json cmd_bench(const BenchOptions& opts);

}  // namespace reid
