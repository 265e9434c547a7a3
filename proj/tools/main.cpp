// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "vecrank/io.hpp"
#include "vecrank/training.hpp"

namespace {

using namespace vecrank;

std::vector<TrainingInstance> load_instances(const std::string& path,
                                             const ModelConfig& config) {
  std::vector<TrainingInstance> out;
  for (const auto& set : load_candidates(path, config.dim, config.k_max))
    out.push_back(make_training_instance(set));
  return out;
}

int cmd_train(const std::string& train_path, const std::string& val_path,
              const std::string& config_path, const std::string& out_path,
              const std::string& log_path, long seed_override, int threads_override,
              long val_sample, long val_seed) {
  RunSettings settings = load_config_file(config_path);
  if (seed_override >= 0) {
    settings.model.seed = static_cast<std::uint64_t>(seed_override);
    settings.trainer.seed = static_cast<std::uint64_t>(seed_override);
  }
  if (threads_override > 0) settings.trainer.threads = threads_override;

  auto train_set = load_instances(train_path, settings.model);
  auto val_set = load_instances(val_path, settings.model);
  if (val_sample > 0 && static_cast<std::size_t>(val_sample) < val_set.size()) {
    std::mt19937_64 rng(val_seed >= 0 ? static_cast<std::uint64_t>(val_seed)
                                      : settings.trainer.seed);
    std::shuffle(val_set.begin(), val_set.end(), rng);
    val_set.resize(static_cast<std::size_t>(val_sample));
  }

  ModelWeights weights = init_model(settings.model);
  std::cout << "model: d=" << settings.model.dim << " layers=" << settings.model.layers
            << " heads=" << settings.model.heads << " ffn_dim=" << settings.model.ffn_dim
            << " k_max=" << settings.model.k_max
            << " parameters=" << parameter_count(weights) << '\n';
  std::cout << "data: train=" << train_set.size() << " val=" << val_set.size() << '\n';

  TrainResult result = train(train_set, val_set, std::move(weights), settings.trainer);
  save_checkpoint(result.weights, out_path);
  const std::string log_out = log_path.empty() ? out_path + ".log" : log_path;
  write_training_log(log_out, result.log);

  std::cout << "epochs: " << result.log.size() << "  best_epoch: " << result.best_epoch
            << "  best_val_loss: " << result.best_val_loss << '\n';
  std::cout << "checkpoint: " << out_path << "\nlog: " << log_out << '\n';
  return 0;
}

int cmd_rerank(const std::string& model_path, const std::string& input_path,
               const std::string& output_path, const std::string& tag,
               const EncodeOptions& opts) {
  ModelWeights weights = load_checkpoint(model_path);
  auto sets = load_candidates(input_path, weights.config.dim, weights.config.k_max);
  auto run = rerank_batch(sets, weights, opts);
  write_run_file(output_path, run, tag);
  std::cout << "reranked " << run.size() << " queries -> " << output_path << '\n';
  return 0;
}

int cmd_eval(const std::string& run_path, const std::string& qrels_path, int cutoff,
             const std::string& metric, const std::string& output_path,
             bool per_query) {
  auto run = read_run_file(run_path);
  auto qrels = read_qrels(qrels_path);

  std::ostringstream table;
  char buf[128];
  table << "metric\tquery_id\tvalue\n";
  const bool want_ndcg = metric == "ndcg" || metric == "both";
  const bool want_mrr = metric == "mrr" || metric == "both";
  if (per_query) {
    for (const auto& ranking : run) {
      if (want_ndcg) {
        std::snprintf(buf, sizeof(buf), "ndcg@%d\t%s\t%.6f\n", cutoff,
                      ranking.query_id.c_str(), ndcg_at_k(ranking, qrels, cutoff));
        table << buf;
      }
      if (want_mrr) {
        std::snprintf(buf, sizeof(buf), "mrr@%d\t%s\t%.6f\n", cutoff,
                      ranking.query_id.c_str(), mrr_at_k(ranking, qrels, cutoff));
        table << buf;
      }
    }
  }
  const MetricSummary summary = evaluate_run(run, qrels, cutoff);
  if (want_ndcg) {
    std::snprintf(buf, sizeof(buf), "ndcg@%d\tall\t%.6f\n", cutoff, summary.ndcg);
    table << buf;
  }
  if (want_mrr) {
    std::snprintf(buf, sizeof(buf), "mrr@%d\tall\t%.6f\n", cutoff, summary.mrr);
    table << buf;
  }

  if (output_path.empty()) {
    std::cout << table.str();
  } else {
    std::ofstream out(output_path);
    if (!out) throw Error("cannot write metrics table '" + output_path + "'");
    out << table.str();
    std::cout << "metrics -> " << output_path << '\n';
  }
  return 0;
}

int cmd_bench(const std::string& model_path, const std::string& input_path,
              int batch, int warmup, int queries, int trials) {
  ModelWeights weights = load_checkpoint(model_path);
  auto sets = load_candidates(input_path, weights.config.dim, weights.config.k_max);
  BenchOptions opts;
  opts.batch_size = batch;
  opts.warmup = warmup;
  opts.min_queries = queries;
  opts.trials = trials;
  const BenchResult res = throughput_bench(weights, sets, opts);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "qps_mean\t%.4f\nqps_std\t%.4f\n", res.mean_qps,
                res.std_qps);
  std::cout << buf;
  std::snprintf(buf, sizeof(buf),
                "# trials=%d queries/trial=%d batch=%d warmup=%d wall=%.2fs\n",
                res.trials, res.queries_per_trial, batch, warmup, res.wall_seconds);
  std::cout << buf;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-space passage reranker with document-aware hybrid attention"};
  app.require_subcommand(1);

  // train
  std::string train_path, val_path, config_path, out_path, log_path;
  long seed_override = -1, val_sample = 0, val_seed = -1;
  int threads_override = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model on labeled candidate sets");
  train_cmd->add_option("--train", train_path, "Training candidate JSONL")->required();
  train_cmd->add_option("--val", val_path, "Validation candidate JSONL")->required();
  train_cmd->add_option("--config", config_path, "Flat key=value config file")->required();
  train_cmd->add_option("--out", out_path, "Output checkpoint path")->required();
  train_cmd->add_option("--seed", seed_override, "Override model and trainer seed");
  train_cmd->add_option("--threads", threads_override, "Gradient worker threads");
  train_cmd->add_option("--log", log_path, "Training log path (default: <out>.log)");
  train_cmd->add_option("--val-sample", val_sample, "Subsample the validation set to N queries");
  train_cmd->add_option("--val-seed", val_seed, "Seed for validation subsampling");

  // rerank
  std::string model_path, input_path, run_out, tag = "vecrank";
  auto* rerank_cmd = app.add_subcommand("rerank", "Rerank candidate sets with a trained model");
  rerank_cmd->add_option("--model", model_path, "Checkpoint path")->required();
  rerank_cmd->add_option("--input", input_path, "Candidate JSONL")->required();
  rerank_cmd->add_option("--output", run_out, "Output run file")->required();
  rerank_cmd->add_option("--tag", tag, "Run tag (sixth run-file column)");

  // eval
  std::string run_path, qrels_path, metric = "both", metrics_out;
  int cutoff = 10;
  bool per_query = false;
  auto* eval_cmd = app.add_subcommand("eval", "Score a run file against qrels");
  eval_cmd->add_option("--run", run_path, "Run file")->required();
  eval_cmd->add_option("--qrels", qrels_path, "Qrels file")->required();
  eval_cmd->add_option("--cutoff", cutoff, "Rank cutoff")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--metric", metric, "ndcg, mrr, or both")
      ->check(CLI::IsMember({"ndcg", "mrr", "both"}));
  eval_cmd->add_option("--output", metrics_out, "Write the metrics table here instead of stdout");
  eval_cmd->add_flag("--per-query", per_query, "Emit one row per query as well");

  // bench
  std::string bench_model, bench_input;
  int bench_batch = 1, bench_warmup = 10, bench_queries = 100, bench_trials = 5;
  auto* bench_cmd = app.add_subcommand("bench", "Measure reranking throughput");
  bench_cmd->add_option("--model", bench_model, "Checkpoint path")->required();
  bench_cmd->add_option("--input", bench_input, "Candidate JSONL")->required();
  bench_cmd->add_option("--batch", bench_batch, "Batch size")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", bench_warmup, "Discarded warm-up queries");
  bench_cmd->add_option("--queries", bench_queries, "Timed queries per trial")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--trials", bench_trials, "Number of timed trials")
      ->check(CLI::PositiveNumber);

  // ablate
  std::string ab_model, ab_input, ab_output, ab_disable, ab_tag = "vecrank-ablate";
  auto* ablate_cmd =
      app.add_subcommand("ablate", "Rerank with a model component disabled");
  ablate_cmd->add_option("--model", ab_model, "Checkpoint path")->required();
  ablate_cmd->add_option("--input", ab_input, "Candidate JSONL")->required();
  ablate_cmd->add_option("--output", ab_output, "Output run file")->required();
  ablate_cmd->add_option("--disable", ab_disable, "pos, hybrid, or both")
      ->required()
      ->check(CLI::IsMember({"pos", "hybrid", "both"}));
  ablate_cmd->add_option("--tag", ab_tag, "Run tag");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed())
      return cmd_train(train_path, val_path, config_path, out_path, log_path,
                       seed_override, threads_override, val_sample, val_seed);
    if (rerank_cmd->parsed())
      return cmd_rerank(model_path, input_path, run_out, tag, EncodeOptions{});
    if (eval_cmd->parsed())
      return cmd_eval(run_path, qrels_path, cutoff, metric, metrics_out, per_query);
    if (bench_cmd->parsed())
      return cmd_bench(bench_model, bench_input, bench_batch, bench_warmup,
                       bench_queries, bench_trials);
    if (ablate_cmd->parsed()) {
      EncodeOptions opts;
      if (ab_disable == "pos" || ab_disable == "both") opts.use_enrichment = false;
      if (ab_disable == "hybrid" || ab_disable == "both") opts.use_dedicated = false;
      return cmd_rerank(ab_model, ab_input, ab_output, ab_tag, opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
