// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vecrank/encoder.hpp"
#include "vecrank/model.hpp"
#include "vecrank/types.hpp"

namespace vecrank {

/// A candidate set with exactly one gold candidate (relevance 1, rest 0).
struct TrainingInstance {
  CandidateSet set;
  int gold_index = -1;
};

/// Validates the single-gold contract and records the gold position.
TrainingInstance make_training_instance(CandidateSet set);

/// Builds one training instance from retriever output:
///  - gold already retrieved (matched by passage_id): labels set, order kept;
///  - gold absent and the set is full (k_max): the last-ranked candidate is
///    replaced by the gold;
///  - gold absent below capacity: the gold is appended.
/// The candidate order is then shuffled once with `rng`.
/// A missing gold is an error unless the retrieved list already carries
/// exactly one positive label.
TrainingInstance construct_training_instance(
    const std::string& query_id, const Embedding& query_embedding,
    std::vector<PassageRecord> retrieved, std::optional<PassageRecord> gold,
    std::mt19937_64& rng, int k_max);

/// InfoNCE on raw similarity scores, computed with max subtraction:
/// -log(exp(pos) / (exp(pos) + sum_j exp(neg_j))).
double info_nce_from_sims(double pos_sim, const std::vector<double>& neg_sims);

/// InfoNCE over dot-product similarities against the static query anchor.
double info_nce_loss(const Embedding& query, const Embedding& pos,
                     const std::vector<Embedding>& negs);

struct TrainerConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  int max_epochs = 20;
  int patience = 5;
  int batch_size = 256;
  double temperature = 1.0;  // divides similarities; 1 = raw dot products
  std::uint64_t seed = 42;
  int threads = 1;  // per-batch gradient workers; results are thread-count
                    // independent (fixed chunking, ordered reduction)

  void validate() const;
};

struct InstanceLoss {
  double loss = 0.0;
  std::vector<double> sims;  // dot(q, p^_i) per candidate, instance order
};

/// Loss of one instance under `weights` (no dropout, no gradients).
InstanceLoss instance_loss(const TrainingInstance& inst,
                           const ModelWeights& weights,
                           double temperature = 1.0);

/// Exact analytic gradient of scale * InfoNCE(encode(instance)) with respect
/// to every parameter, doc-slot rows included. `rng` is only consulted when
/// dropout > 0.
struct LossGradient {
  double loss = 0.0;
  ModelWeights grads;
};
LossGradient loss_gradient(const TrainingInstance& inst,
                           const ModelWeights& weights, double scale = 1.0,
                           double temperature = 1.0, double dropout = 0.0,
                           std::mt19937_64* rng = nullptr);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelWeights weights;  // best-validation snapshot, float32-rounded
  std::vector<EpochStats> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Minibatch Adam over shuffled epochs with early stopping: training stops
/// once the validation loss has not improved for more than `patience`
/// epochs, and the best-validation weights are returned.
TrainResult train(const std::vector<TrainingInstance>& train_set,
                  const std::vector<TrainingInstance>& val_set,
                  ModelWeights weights, const TrainerConfig& tc);

}  // namespace vecrank
