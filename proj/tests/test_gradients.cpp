// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>
#include <set>

#include "test_util.hpp"
#include "vecrank/training.hpp"

using namespace vecrank;

namespace {

ModelConfig grad_config(NormPlacement placement = NormPlacement::kPost) {
  ModelConfig c;
  c.dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn_dim = 16;
  c.k_max = 8;
  c.dropout = 0.0;
  c.norm_placement = placement;
  c.seed = 1234;
  return c;
}

TrainingInstance random_instance(std::mt19937_64& rng, int k, int dim, int docs) {
  auto set = testutil::random_candidate_set(rng, k, dim, docs);
  for (auto& r : set.candidates) r.relevance = 0;
  set.candidates[static_cast<std::size_t>(rng() % static_cast<std::size_t>(k))]
      .relevance = 1;
  return make_training_instance(set);
}

struct GradCheckStats {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences on a random subset of parameters; relative
/// error against the analytic gradient. The loss evaluation goes through the
/// inference forward (encode), a separate code path from the cached
/// training forward that produced the analytic gradient.
GradCheckStats finite_difference_check(const TrainingInstance& inst,
                                       ModelWeights& weights,
                                       std::size_t n_samples, double h,
                                       std::mt19937_64& rng,
                                       double temperature = 1.0) {
  LossGradient lg = loss_gradient(inst, weights, 1.0, temperature);
  auto wrefs = parameter_refs(weights);
  auto grefs = parameter_refs(lg.grads);

  // Global flat indexing over all tensors.
  std::vector<std::size_t> tensor_offsets(wrefs.size() + 1, 0);
  for (std::size_t t = 0; t < wrefs.size(); ++t)
    tensor_offsets[t + 1] = tensor_offsets[t] + wrefs[t].size;
  const std::size_t total = tensor_offsets.back();

  // Random sample, forcing a few doc_table entries (tensor 0) in.
  std::set<std::size_t> picks;
  const DocSlotMap slots = build_doc_slot_map(inst.set.candidates);
  const auto dim = static_cast<std::size_t>(weights.config.dim);
  for (int s = 0; s < slots.size() && picks.size() < 8; ++s)
    picks.insert(static_cast<std::size_t>(s) * dim + (rng() % dim));
  while (picks.size() < n_samples) picks.insert(rng() % total);

  GradCheckStats stats;
  for (std::size_t flat : picks) {
    std::size_t t = 0;
    while (tensor_offsets[t + 1] <= flat) ++t;
    const std::size_t i = flat - tensor_offsets[t];

    const double saved = wrefs[t].data[i];
    wrefs[t].data[i] = saved + h;
    const double up = instance_loss(inst, weights, temperature).loss;
    wrefs[t].data[i] = saved - h;
    const double down = instance_loss(inst, weights, temperature).loss;
    wrefs[t].data[i] = saved;

    const double fd = (up - down) / (2.0 * h);
    const double analytic = grefs[t].data[i];
    const double rel = std::abs(analytic - fd) /
                       std::max({std::abs(analytic), std::abs(fd), 1e-3});
    stats.max_rel_err = std::max(stats.max_rel_err, rel);
    ++stats.checked;
  }
  return stats;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences (post-norm)") {
  std::mt19937_64 rng(21);
  auto weights = init_model(grad_config());
  auto inst = random_instance(rng, 4, 8, 2);
  auto stats = finite_difference_check(inst, weights, 120, 1e-4, rng);
  CHECK(stats.checked >= 100);
  CHECK(stats.max_rel_err < 1e-4);
}

TEST_CASE("analytic gradients match finite differences (pre-norm)") {
  std::mt19937_64 rng(22);
  auto weights = init_model(grad_config(NormPlacement::kPre));
  auto inst = random_instance(rng, 4, 8, 2);
  auto stats = finite_difference_check(inst, weights, 120, 1e-4, rng);
  CHECK(stats.max_rel_err < 1e-4);
}

TEST_CASE("analytic gradients match finite differences (relu, temperature)") {
  std::mt19937_64 rng(23);
  auto cfg = grad_config();
  cfg.activation = Activation::kRelu;
  auto weights = init_model(cfg);
  auto inst = random_instance(rng, 4, 8, 2);
  auto stats = finite_difference_check(inst, weights, 120, 1e-4, rng, 0.5);
  // ReLU kinks can make a handful of finite differences one-sided; the bound
  // stays meaningful but looser.
  CHECK(stats.max_rel_err < 1e-3);
}

TEST_CASE("doc table rows for unused slots have exactly zero gradient") {
  std::mt19937_64 rng(24);
  auto weights = init_model(grad_config());
  auto inst = random_instance(rng, 4, 8, 2);
  auto lg = loss_gradient(inst, weights);
  const DocSlotMap slots = build_doc_slot_map(inst.set.candidates);
  for (int row = 0; row < weights.config.k_max; ++row) {
    const double norm = lg.grads.doc_table.row(row).cwiseAbs().maxCoeff();
    if (row >= slots.size()) {
      CHECK(norm == 0.0);
    } else {
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("scaling the loss scales every gradient entry") {
  std::mt19937_64 rng(25);
  auto weights = init_model(grad_config());
  auto inst = random_instance(rng, 5, 8, 3);
  auto base = loss_gradient(inst, weights, 1.0);
  auto scaled = loss_gradient(inst, weights, 2.5);
  CHECK(scaled.loss == doctest::Approx(2.5 * base.loss).epsilon(1e-12));
  auto brefs = parameter_refs(base.grads);
  auto srefs = parameter_refs(scaled.grads);
  double max_err = 0.0;
  for (std::size_t t = 0; t < brefs.size(); ++t)
    for (std::size_t i = 0; i < brefs[t].size; ++i)
      max_err =
          std::max(max_err, std::abs(srefs[t].data[i] - 2.5 * brefs[t].data[i]));
  CHECK(max_err < 1e-12);
}

TEST_CASE("training and inference forwards agree on the loss") {
  std::mt19937_64 rng(26);
  auto weights = init_model(grad_config());
  auto inst = random_instance(rng, 6, 8, 3);
  auto lg = loss_gradient(inst, weights);
  auto il = instance_loss(inst, weights);
  CHECK(lg.loss == doctest::Approx(il.loss).epsilon(1e-12));
}

TEST_CASE("gradients require at least one negative") {
  std::mt19937_64 rng(27);
  auto weights = init_model(grad_config());
  auto set = testutil::random_candidate_set(rng, 1, 8, 1);
  set.candidates[0].relevance = 1;
  auto inst = make_training_instance(set);
  CHECK_THROWS_AS(loss_gradient(inst, weights), Error);
}

TEST_CASE("a null dropout generator matches the deterministic path bitwise") {
  std::mt19937_64 rng(28);
  auto weights = init_model(grad_config());
  auto inst = random_instance(rng, 4, 8, 2);
  std::mt19937_64 drop_rng(99);
  auto with_rng = loss_gradient(inst, weights, 1.0, 1.0, 0.0, &drop_rng);
  auto without = loss_gradient(inst, weights, 1.0, 1.0, 0.0, nullptr);
  CHECK(with_rng.loss == without.loss);
  auto a = parameter_refs(with_rng.grads);
  auto b = parameter_refs(without.grads);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size; ++i)
      CHECK(a[t].data[i] == b[t].data[i]);
}
