// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vecrank/inference.hpp"
#include "vecrank/metrics.hpp"
#include "vecrank/model.hpp"
#include "vecrank/training.hpp"
#include "vecrank/types.hpp"

namespace vecrank {

/// Streams candidate sets from a JSONL file, one query per line:
///   {"query_id": ..., "query_embedding": [...],
///    "candidates": [{"passage_id": ..., "doc_key": ..., "chunk_index": ...,
///                    "embedding": [...], "relevance": ...}, ...]}
/// Validation errors carry the offending line number. `expected_dim` 0 means
/// infer from the first embedding; `k_max` 0 means unbounded.
void for_each_candidate_set(const std::string& path, int expected_dim, int k_max,
                            const std::function<void(CandidateSet)>& sink);

std::vector<CandidateSet> load_candidates(const std::string& path,
                                          int expected_dim = 0, int k_max = 0);

void write_candidates(const std::string& path,
                      const std::vector<CandidateSet>& sets);

/// Binary checkpoint: magic, format version, config block, named float32
/// tensors with explicit shapes, crc32 trailer. Load rejects bad magic,
/// version mismatch, truncation, checksum failure, and shape inconsistency.
void save_checkpoint(const ModelWeights& weights, const std::string& path);
ModelWeights load_checkpoint(const std::string& path);
/// Additionally rejects checkpoints whose stored config differs from
/// `expected` in any architecture field.
ModelWeights load_checkpoint(const std::string& path, const ModelConfig& expected);

/// Six-column run format: query_id Q0 passage_id rank score tag.
void write_run_file(const std::string& path, const std::vector<RankedList>& run,
                    const std::string& tag);
void write_run_file(std::ostream& out, const std::vector<RankedList>& run,
                    const std::string& tag);
std::vector<RankedList> read_run_file(const std::string& path);

/// Four-column qrels: query_id 0 passage_id relevance.
QrelSet read_qrels(const std::string& path);
void write_qrels(const std::string& path, const QrelSet& qrels);

/// Flat key = value configuration mirroring ModelConfig and TrainerConfig.
/// Unknown keys are errors. `seed` applies to both configs.
struct RunSettings {
  ModelConfig model;
  TrainerConfig trainer;
};
RunSettings parse_config_text(const std::string& text);
RunSettings load_config_file(const std::string& path);

/// Tab-separated training log: epoch, train_loss, val_loss, wall_seconds.
void write_training_log(const std::string& path,
                        const std::vector<EpochStats>& log);

}  // namespace vecrank
