#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "reid/commands.hpp"
#include "reid/error.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << reid::Json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

reid::Precision parse_precision(const std::string& s) {
  if (s == "binary32") return reid::Precision::Binary32;
  if (s == "binary16") return reid::Precision::Binary16Emulated;
  throw reid::InvalidArgument("precision must be binary32 or binary16, got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Person re-identification with mixed-precision training"};
  app.require_subcommand(1);

  reid::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic identity set");
  synth_cmd->add_option("--ids", synth.config.ids);
  synth_cmd->add_option("--per-id", synth.config.per_id);
  synth_cmd->add_option("--dim", synth.config.dim);
  synth_cmd->add_option("--noise", synth.config.noise);
  synth_cmd->add_option("--cameras", synth.config.cameras);
  synth_cmd->add_option("--train-fraction", synth.config.train_fraction);
  synth_cmd->add_option("--seed", synth.config.seed);
  synth_cmd->add_option("--out", synth.out)->required();

  reid::TrainOptions train;
  std::size_t decay_start = 0;
  auto* train_cmd = app.add_subcommand("train", "train the embedding network with batch-hard triplet loss");
  train_cmd->add_option("--data", train.data)->required();
  train_cmd->add_option("--plan", train.plan, "mixed, binary32 or a plan file")->capture_default_str();
  train_cmd->add_option("--epochs", train.config.epochs)->capture_default_str();
  auto* decay_opt = train_cmd->add_option("--decay-start", decay_start, "defaults to half the epochs");
  train_cmd->add_option("--lr", train.config.lr0)->capture_default_str();
  train_cmd->add_option("--ids-per-batch", train.config.ids_per_batch)->capture_default_str();
  train_cmd->add_option("--instances-per-id", train.config.instances_per_id)->capture_default_str();
  train_cmd->add_option("--margin", train.config.margin)->capture_default_str();
  train_cmd->add_option("--loss-scale", train.config.loss_scale)->capture_default_str();
  train_cmd->add_option("--iters-per-epoch", train.config.iters_per_epoch, "0 covers the data once per epoch");
  train_cmd->add_option("--hard-mix", train.config.hard_mix_ratio)->capture_default_str();
  train_cmd->add_option("--pool-capacity", train.config.hard_pool_capacity, "0 means 2K per identity");
  train_cmd->add_flag("!--unsquared", train.config.squared_distance, "use Euclidean instead of squared distances");
  train_cmd->add_option("--channels", train.channels)->capture_default_str();
  train_cmd->add_option("--embedding-dim", train.embedding_dim)->capture_default_str();
  train_cmd->add_option("--in-channels", train.in_channels)->capture_default_str();
  train_cmd->add_option("--height", train.height);
  train_cmd->add_option("--width", train.width);
  train_cmd->add_option("--seed", train.config.seed);
  train_cmd->add_option("--checkpoint", train.checkpoint_out)->required();
  train_cmd->add_option("--loss-log", train.loss_log);

  reid::EmbedOptions embed;
  std::string embed_precision = "binary32";
  std::string embed_compute;
  auto* embed_cmd = app.add_subcommand("embed", "embed rows of an input file with a checkpoint");
  embed_cmd->add_option("--checkpoint", embed.checkpoint)->required();
  embed_cmd->add_option("--inputs", embed.inputs)->required();
  embed_cmd->add_option("--precision", embed_precision, "storage precision of the output")->capture_default_str();
  auto* compute_opt = embed_cmd->add_option("--compute", embed_compute, "mixed or binary32; overrides the checkpoint plan");
  embed_cmd->add_option("--out", embed.out)->required();

  reid::EvalOptions eval;
  std::string eval_precision;
  auto* eval_cmd = app.add_subcommand("eval", "CMC and mAP over query/gallery rows");
  eval_cmd->add_option("--embeddings", eval.embeddings)->required();
  eval_cmd->add_option("--ranks", eval.ranks)->delimiter(',');
  eval_cmd->add_flag("--rerank", eval.rerank);
  eval_cmd->add_option("--k1", eval.rerank_params.k1)->capture_default_str();
  eval_cmd->add_option("--k2", eval.rerank_params.k2)->capture_default_str();
  eval_cmd->add_option("--lambda", eval.rerank_params.lambda)->capture_default_str();
  auto* eval_precision_opt = eval_cmd->add_option("--precision", eval_precision, "distance precision");
  eval_cmd->add_option("--out", eval.out, "writes <out>.csv and <out>.json");

  reid::PlanOptions plan;
  auto* plan_cmd = app.add_subcommand("plan", "partition layer manifests and report model sizes");
  plan_cmd->add_option("manifests", plan.manifests)->required();
  plan_cmd->add_option("--out", plan.out_dir);

  reid::BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "time distance matrices in both precisions");
  bench_cmd->add_option("--dim", bench.dim)->capture_default_str();
  bench_cmd->add_option("--queries", bench.queries)->capture_default_str();
  bench_cmd->add_option("--gallery", bench.gallery)->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats)->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed);
  bench_cmd->add_option("--out", bench.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what(), 2);
  }

  try {
    reid::Json out;
    if (*synth_cmd) {
      out = reid::cmd_synth(synth);
    } else if (*train_cmd) {
      train.config.decay_start = decay_opt->count() ? decay_start : train.config.epochs / 2;
      train.config.batch_size = train.config.ids_per_batch * train.config.instances_per_id;
      out = reid::cmd_train(train);
    } else if (*embed_cmd) {
      embed.precision = parse_precision(embed_precision);
      if (compute_opt->count()) embed.compute = embed_compute;
      out = reid::cmd_embed(embed);
    } else if (*eval_cmd) {
      if (eval_precision_opt->count()) eval.distance_precision = parse_precision(eval_precision);
      out = reid::cmd_eval(eval);
    } else if (*plan_cmd) {
      out = reid::cmd_plan(plan);
    } else if (*bench_cmd) {
      out = reid::cmd_bench(bench);
    }
    std::cout << out.dump() << '\n';
  } catch (const reid::Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), 1);
  }
  return 0;
}
