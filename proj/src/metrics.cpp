// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include "vecrank/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace vecrank {

void QrelSet::add(const std::string& query_id, const std::string& passage_id,
                  int relevance) {
  if (relevance < 0) throw Error("relevance labels must be non-negative");
  rels_[query_id][passage_id] = relevance;
}

int QrelSet::relevance(const std::string& query_id,
                       const std::string& passage_id) const {
  auto q = rels_.find(query_id);
  if (q == rels_.end()) return 0;
  auto p = q->second.find(passage_id);
  return p == q->second.end() ? 0 : p->second;
}

const std::unordered_map<std::string, int>* QrelSet::judged(
    const std::string& query_id) const {
  auto q = rels_.find(query_id);
  return q == rels_.end() ? nullptr : &q->second;
}

std::size_t QrelSet::size() const {
  std::size_t n = 0;
  for (const auto& [_, m] : rels_) n += m.size();
  return n;
}

std::vector<std::tuple<std::string, std::string, int>> QrelSet::triples() const {
  std::vector<std::tuple<std::string, std::string, int>> out;
  out.reserve(size());
  for (const auto& [qid, m] : rels_)
    for (const auto& [pid, rel] : m) out.emplace_back(qid, pid, rel);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

double gain(int rel) { return std::exp2(static_cast<double>(rel)) - 1.0; }

double discount(int rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); }

}  // namespace

double ndcg_at_k(const RankedList& ranking, const QrelSet& qrels, int cutoff) {
  if (cutoff < 1) throw Error("nDCG cutoff must be >= 1");
  double dcg = 0.0;
  const int upto = std::min<int>(cutoff, static_cast<int>(ranking.entries.size()));
  for (int r = 1; r <= upto; ++r) {
    const int rel = qrels.relevance(ranking.query_id, ranking.entries[r - 1].passage_id);
    dcg += gain(rel) * discount(r);
  }

  // Ideal DCG over all judged passages for this query.
  const auto* judged = qrels.judged(ranking.query_id);
  if (!judged) return 0.0;
  std::vector<int> rels;
  rels.reserve(judged->size());
  for (const auto& [_, rel] : *judged)
    if (rel > 0) rels.push_back(rel);
  if (rels.empty()) return 0.0;
  std::sort(rels.begin(), rels.end(), std::greater<>());
  double ideal = 0.0;
  const int ideal_upto = std::min<int>(cutoff, static_cast<int>(rels.size()));
  for (int r = 1; r <= ideal_upto; ++r) ideal += gain(rels[r - 1]) * discount(r);
  return dcg / ideal;
}

double mrr_at_k(const RankedList& ranking, const QrelSet& qrels, int cutoff) {
  if (cutoff < 1) throw Error("MRR cutoff must be >= 1");
  const int upto = std::min<int>(cutoff, static_cast<int>(ranking.entries.size()));
  for (int r = 1; r <= upto; ++r) {
    if (qrels.relevance(ranking.query_id, ranking.entries[r - 1].passage_id) > 0)
      return 1.0 / static_cast<double>(r);
  }
  return 0.0;
}

MetricSummary evaluate_run(const std::vector<RankedList>& run,
                           const QrelSet& qrels, int cutoff) {
  if (run.empty()) throw Error("cannot evaluate an empty run");
  MetricSummary s;
  for (const auto& ranking : run) {
    s.ndcg += ndcg_at_k(ranking, qrels, cutoff);
    s.mrr += mrr_at_k(ranking, qrels, cutoff);
  }
  s.queries = run.size();
  s.ndcg /= static_cast<double>(s.queries);
  s.mrr /= static_cast<double>(s.queries);
  return s;
}

BenchResult throughput_bench(const ModelWeights& weights,
                             const std::vector<CandidateSet>& sets,
                             const BenchOptions& opts) {
  if (sets.empty()) throw Error("throughput bench needs at least one candidate set");
  if (opts.batch_size < 1) throw Error("bench batch size must be >= 1");
  if (opts.trials < 1) throw Error("bench needs at least one trial");
  if (opts.min_queries < 1) throw Error("bench needs at least one timed query");

  auto run_one = [&](std::size_t index) {
    const auto& set = sets[index % sets.size()];
    volatile double sink =
        rerank(set.query_id, set.query_embedding, set.candidates, weights)
            .entries.front()
            .score;
    (void)sink;
  };

  for (int w = 0; w < opts.warmup; ++w) run_one(static_cast<std::size_t>(w));

  std::vector<double> qps(static_cast<std::size_t>(opts.trials));
  double total_seconds = 0.0;
  std::size_t cursor = 0;
  for (int t = 0; t < opts.trials; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    int done = 0;
    while (done < opts.min_queries) {
      const int burst = std::min(opts.batch_size, opts.min_queries - done);
      for (int b = 0; b < burst; ++b) run_one(cursor++);
      done += burst;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    qps[static_cast<std::size_t>(t)] = static_cast<double>(done) / secs;
    total_seconds += secs;
  }

  BenchResult res;
  res.trials = opts.trials;
  res.queries_per_trial = opts.min_queries;
  res.wall_seconds = total_seconds;
  double mean = 0.0;
  for (double q : qps) mean += q;
  mean /= static_cast<double>(qps.size());
  double var = 0.0;
  for (double q : qps) var += (q - mean) * (q - mean);
  var = qps.size() > 1 ? var / static_cast<double>(qps.size() - 1) : 0.0;
  res.mean_qps = mean;
  res.std_qps = std::sqrt(var);
  return res;
}

}  // namespace vecrank
