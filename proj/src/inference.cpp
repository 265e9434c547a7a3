// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include "vecrank/inference.hpp"

#include <algorithm>
#include <numeric>

namespace vecrank {

std::vector<double> score(const Embedding& query,
                          const std::vector<PassageRecord>& candidates,
                          const ModelWeights& weights,
                          const EncodeOptions& opts) {
  const Matrix state = encode_sequence(query, candidates, weights, opts);
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = query.dot(state.row(static_cast<Eigen::Index>(i) + 1).transpose());
  return scores;
}

RankedList rerank(const std::string& query_id, const Embedding& query,
                  const std::vector<PassageRecord>& candidates,
                  const ModelWeights& weights, const EncodeOptions& opts) {
  const std::vector<double> scores = score(query, candidates, weights, opts);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RankedList out;
  out.query_id = query_id;
  out.entries.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r)
    out.entries.push_back({candidates[order[r]].passage_id, scores[order[r]],
                           static_cast<int>(r) + 1});
  return out;
}

std::vector<RankedList> rerank_batch(const std::vector<CandidateSet>& sets,
                                     const ModelWeights& weights,
                                     const EncodeOptions& opts) {
  std::vector<RankedList> out;
  out.reserve(sets.size());
  for (const auto& set : sets)
    out.push_back(rerank(set.query_id, set.query_embedding, set.candidates,
                         weights, opts));
  return out;
}

}  // namespace vecrank
