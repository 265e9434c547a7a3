// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "vecrank/encoder.hpp"
#include "vecrank/model.hpp"
#include "vecrank/types.hpp"

namespace vecrank {

struct RankedEntry {
  std::string passage_id;
  double score = 0.0;
  int rank = 0;  // 1-based
};

/// A permutation of the input candidates, scores non-increasing with rank.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;
};

/// s_i = dot(q, p^_i) with the raw query embedding as anchor.
std::vector<double> score(const Embedding& query,
                          const std::vector<PassageRecord>& candidates,
                          const ModelWeights& weights,
                          const EncodeOptions& opts = {});

/// Descending stable sort of the scores; ties keep first-stage order.
RankedList rerank(const std::string& query_id, const Embedding& query,
                  const std::vector<PassageRecord>& candidates,
                  const ModelWeights& weights, const EncodeOptions& opts = {});

/// Reranks each set independently; output order follows input order.
std::vector<RankedList> rerank_batch(const std::vector<CandidateSet>& sets,
                                     const ModelWeights& weights,
                                     const EncodeOptions& opts = {});

}  // namespace vecrank
