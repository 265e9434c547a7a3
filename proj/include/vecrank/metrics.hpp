// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vecrank/inference.hpp"
#include "vecrank/model.hpp"
#include "vecrank/types.hpp"

namespace vecrank {

/// Graded relevance judgments; absent pairs mean relevance 0.
class QrelSet {
 public:
  void add(const std::string& query_id, const std::string& passage_id, int relevance);
  int relevance(const std::string& query_id, const std::string& passage_id) const;
  /// Judged passages for a query, or nullptr when none exist.
  const std::unordered_map<std::string, int>* judged(const std::string& query_id) const;
  std::size_t size() const;
  /// All judgments as (query_id, passage_id, relevance), sorted for stable output.
  std::vector<std::tuple<std::string, std::string, int>> triples() const;

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, int>> rels_;
};

/// Exponential-gain DCG with log2(rank+1) discount, normalized by the ideal
/// DCG over all judged passages for the query. 0 when nothing relevant is
/// judged.
double ndcg_at_k(const RankedList& ranking, const QrelSet& qrels, int cutoff = 10);

/// 1/r for the first rank r <= cutoff with relevance > 0, else 0.
double mrr_at_k(const RankedList& ranking, const QrelSet& qrels, int cutoff = 10);

struct MetricSummary {
  double ndcg = 0.0;
  double mrr = 0.0;
  std::size_t queries = 0;
};

/// Mean metrics over a run; every query in the run counts once.
MetricSummary evaluate_run(const std::vector<RankedList>& run,
                           const QrelSet& qrels, int cutoff = 10);

struct BenchOptions {
  int batch_size = 1;
  int warmup = 10;       // discarded warm-up queries
  int min_queries = 100; // timed queries per trial (input cycled as needed)
  int trials = 5;
};

struct BenchResult {
  double mean_qps = 0.0;
  double std_qps = 0.0;
  int queries_per_trial = 0;
  int trials = 0;
  double wall_seconds = 0.0;
};

/// Wall-clock reranking throughput at the configured batch size.
BenchResult throughput_bench(const ModelWeights& weights,
                             const std::vector<CandidateSet>& sets,
                             const BenchOptions& opts = {});

}  // namespace vecrank
