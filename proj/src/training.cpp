// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include "vecrank/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>
#include <unordered_set>

namespace vecrank {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_no_duplicate_chunks(const std::vector<PassageRecord>& candidates) {
  std::unordered_set<std::string> seen;
  for (const auto& r : candidates) {
    const std::string key = r.doc_key + "\x1f" + std::to_string(r.chunk_index);
    if (!seen.insert(key).second)
      throw Error("duplicate (doc_key, chunk_index) pair ('" + r.doc_key + "', " +
                  std::to_string(r.chunk_index) + ") in one candidate set");
  }
}

}  // namespace

TrainingInstance make_training_instance(CandidateSet set) {
  if (set.candidates.empty())
    throw Error("training instance for query '" + set.query_id + "' has no candidates");
  int gold = -1;
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    if (set.candidates[i].relevance.value_or(0) > 0) {
      if (gold >= 0)
        throw Error("query '" + set.query_id +
                    "' carries more than one positive candidate; the training "
                    "objective assumes a single gold passage");
      gold = static_cast<int>(i);
    }
  }
  if (gold < 0)
    throw Error("query '" + set.query_id + "' has no positive candidate");
  return TrainingInstance{std::move(set), gold};
}

TrainingInstance construct_training_instance(
    const std::string& query_id, const Embedding& query_embedding,
    std::vector<PassageRecord> retrieved, std::optional<PassageRecord> gold,
    std::mt19937_64& rng, int k_max) {
  if (k_max < 1) throw Error("k_max must be >= 1");
  if (static_cast<int>(retrieved.size()) > k_max)
    throw Error("retrieved list has " + std::to_string(retrieved.size()) +
                " passages, more than k_max=" + std::to_string(k_max));

  if (!gold.has_value()) {
    if (retrieved.empty())
      throw Error("query '" + query_id + "' has no retrieved candidates and no gold passage");
    int positives = 0;
    for (auto& r : retrieved) {
      const bool pos = r.relevance.value_or(0) > 0;
      r.relevance = pos ? 1 : 0;
      positives += pos ? 1 : 0;
    }
    if (positives != 1)
      throw Error("query '" + query_id + "' has no gold passage and " +
                  std::to_string(positives) + " pre-labeled positives");
  } else {
    auto hit = std::find_if(retrieved.begin(), retrieved.end(),
                            [&](const PassageRecord& r) {
                              return r.passage_id == gold->passage_id;
                            });
    for (auto& r : retrieved) r.relevance = 0;
    if (hit != retrieved.end()) {
      hit->relevance = 1;
    } else {
      gold->relevance = 1;
      if (static_cast<int>(retrieved.size()) == k_max) {
        retrieved.back() = std::move(*gold);
      } else {
        retrieved.push_back(std::move(*gold));
      }
    }
  }

  check_no_duplicate_chunks(retrieved);
  std::shuffle(retrieved.begin(), retrieved.end(), rng);
  return make_training_instance(
      CandidateSet{query_id, query_embedding, std::move(retrieved)});
}

double info_nce_from_sims(double pos_sim, const std::vector<double>& neg_sims) {
  if (neg_sims.empty())
    throw Error("InfoNCE requires at least one negative similarity");
  if (!std::isfinite(pos_sim))
    throw Error("non-finite positive similarity in InfoNCE");
  double max_sim = pos_sim;
  for (double s : neg_sims) {
    if (!std::isfinite(s)) throw Error("non-finite negative similarity in InfoNCE");
    max_sim = std::max(max_sim, s);
  }
  double denom = std::exp(pos_sim - max_sim);
  for (double s : neg_sims) denom += std::exp(s - max_sim);
  return (max_sim - pos_sim) + std::log(denom);
}

double info_nce_loss(const Embedding& query, const Embedding& pos,
                     const std::vector<Embedding>& negs) {
  if (negs.empty()) throw Error("InfoNCE requires at least one negative passage");
  if (pos.size() != query.size())
    throw Error("positive embedding dimension does not match the query");
  std::vector<double> neg_sims;
  neg_sims.reserve(negs.size());
  for (const auto& n : negs) {
    if (n.size() != query.size())
      throw Error("negative embedding dimension does not match the query");
    neg_sims.push_back(query.dot(n));
  }
  return info_nce_from_sims(query.dot(pos), neg_sims);
}

void TrainerConfig::validate() const {
  if (learning_rate <= 0.0) throw Error("learning_rate must be positive");
  if (max_epochs < 1) throw Error("max_epochs must be >= 1");
  if (patience < 0) throw Error("patience must be non-negative");
  if (patience > max_epochs) throw Error("patience must not exceed max_epochs");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (temperature <= 0.0) throw Error("temperature must be positive");
  if (weight_decay < 0.0) throw Error("weight_decay must be non-negative");
  if (threads < 1) throw Error("threads must be >= 1");
}

InstanceLoss instance_loss(const TrainingInstance& inst,
                           const ModelWeights& weights, double temperature) {
  const auto& set = inst.set;
  auto p_hats = encode(set.query_embedding, set.candidates, weights);
  InstanceLoss out;
  out.sims.reserve(p_hats.size());
  for (const auto& p : p_hats) out.sims.push_back(set.query_embedding.dot(p));

  std::vector<double> negs;
  negs.reserve(out.sims.size() - 1);
  double pos = 0.0;
  for (std::size_t i = 0; i < out.sims.size(); ++i) {
    const double z = out.sims[i] / temperature;
    if (static_cast<int>(i) == inst.gold_index)
      pos = z;
    else
      negs.push_back(z);
  }
  out.loss = info_nce_from_sims(pos, negs);
  return out;
}

LossGradient loss_gradient(const TrainingInstance& inst,
                           const ModelWeights& weights, double scale,
                           double temperature, double dropout,
                           std::mt19937_64* rng) {
  const auto& set = inst.set;
  const auto& candidates = set.candidates;
  const auto k = static_cast<Eigen::Index>(candidates.size());
  if (k < 2) throw Error("a training instance needs at least one negative candidate");
  if (static_cast<int>(k) > weights.config.k_max)
    throw Error("training instance exceeds the model's k_max");
  check_embedding(set.query_embedding, weights.config.dim, "query");

  const DocSlotMap slot_map = build_doc_slot_map(candidates);
  const Matrix input = build_input_sequence(set.query_embedding, candidates,
                                            weights.doc_table, &slot_map, true);
  const Matrix mask = build_attention_mask(candidates);
  const ForwardCache cache =
      forward_cached(input, mask, weights, true, dropout, rng);

  // InfoNCE over z_i = dot(q, p^_i) / temperature against the static query.
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i)
    z[i] = set.query_embedding.dot(cache.output.row(i + 1).transpose()) / temperature;
  const double z_max = z.maxCoeff();
  const Eigen::VectorXd expz = (z.array() - z_max).exp();
  const double denom = expz.sum();
  const double loss = (z_max - z[inst.gold_index]) + std::log(denom);
  if (!std::isfinite(loss)) throw Error("non-finite InfoNCE loss");

  Matrix d_output = Matrix::Zero(k + 1, weights.config.dim);
  for (Eigen::Index i = 0; i < k; ++i) {
    double dz = expz[i] / denom;
    if (i == inst.gold_index) dz -= 1.0;
    d_output.row(i + 1) =
        (scale * dz / temperature) * set.query_embedding.transpose();
  }

  LossGradient out;
  out.loss = scale * loss;
  out.grads = zeros_like(weights);
  const Matrix d_input = backward_cached(cache, weights, d_output, out.grads);
  for (Eigen::Index i = 0; i < k; ++i) {
    const int slot = slot_map.slot_of(candidates[i].doc_key);
    out.grads.doc_table.row(slot) += d_input.row(i + 1);
  }
  return out;
}

namespace {

class AdamOptimizer {
 public:
  AdamOptimizer(ModelWeights& weights, const TrainerConfig& tc)
      : tc_(tc), refs_(parameter_refs(weights)) {
    std::size_t total = 0;
    for (const auto& r : refs_) total += r.size;
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  }

  void step(ModelWeights& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(tc_.adam_beta1, t_);
    const double bc2 = 1.0 - std::pow(tc_.adam_beta2, t_);
    auto grefs = parameter_refs(grads);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < refs_.size(); ++p) {
      double* w = refs_[p].data;
      const double* g = grefs[p].data;
      for (std::size_t i = 0; i < refs_[p].size; ++i) {
        double gi = g[i] + tc_.weight_decay * w[i];
        double& m = m_[offset + i];
        double& v = v_[offset + i];
        m = tc_.adam_beta1 * m + (1.0 - tc_.adam_beta1) * gi;
        v = tc_.adam_beta2 * v + (1.0 - tc_.adam_beta2) * gi * gi;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        w[i] -= tc_.learning_rate * m_hat / (std::sqrt(v_hat) + tc_.adam_eps);
      }
      offset += refs_[p].size;
    }
  }

 private:
  const TrainerConfig tc_;
  std::vector<ParamRef> refs_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// Fixed-size gradient chunks, folded in chunk order: results do not depend
// on the worker count.
constexpr std::size_t kGradChunk = 8;

struct ChunkResult {
  ModelWeights grads;
  double loss_sum = 0.0;
};

}  // namespace

TrainResult train(const std::vector<TrainingInstance>& train_set,
                  const std::vector<TrainingInstance>& val_set,
                  ModelWeights weights, const TrainerConfig& tc) {
  tc.validate();
  weights.config.validate();
  if (train_set.empty()) throw Error("training set is empty");
  if (val_set.empty()) throw Error("validation set is empty");

  const double dropout = weights.config.dropout;
  AdamOptimizer adam(weights, tc);
  std::mt19937_64 epoch_rng(tc.seed);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  auto mean_val_loss = [&](const ModelWeights& w) {
    double sum = 0.0;
    for (const auto& inst : val_set) sum += instance_loss(inst, w, tc.temperature).loss;
    return sum / static_cast<double>(val_set.size());
  };

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), epoch_rng);

    double epoch_loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      const std::size_t batch = stop - start;
      const std::size_t chunks = (batch + kGradChunk - 1) / kGradChunk;

      auto run_chunk = [&](std::size_t c) {
        ChunkResult res;
        res.grads = zeros_like(weights);
        const std::size_t lo = start + c * kGradChunk;
        const std::size_t hi = std::min(stop, lo + kGradChunk);
        for (std::size_t pos = lo; pos < hi; ++pos) {
          std::mt19937_64 inst_rng(
              mix64(tc.seed ^ mix64((static_cast<std::uint64_t>(epoch) << 32) ^ pos)));
          auto lg = loss_gradient(train_set[order[pos]], weights, 1.0,
                                  tc.temperature, dropout,
                                  dropout > 0.0 ? &inst_rng : nullptr);
          res.loss_sum += lg.loss;
          add_scaled(res.grads, lg.grads, 1.0);
        }
        return res;
      };

      ModelWeights grads = zeros_like(weights);
      double batch_loss_sum = 0.0;
      if (tc.threads <= 1 || chunks <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
          ChunkResult res = run_chunk(c);
          add_scaled(grads, res.grads, 1.0);
          batch_loss_sum += res.loss_sum;
        }
      } else {
        // Waves of `threads` chunks; partials folded in chunk order.
        const auto workers = static_cast<std::size_t>(tc.threads);
        for (std::size_t wave = 0; wave < chunks; wave += workers) {
          const std::size_t wave_end = std::min(chunks, wave + workers);
          std::vector<ChunkResult> partials(wave_end - wave);
          std::vector<std::thread> pool;
          pool.reserve(partials.size());
          for (std::size_t c = wave; c < wave_end; ++c)
            pool.emplace_back([&, c] { partials[c - wave] = run_chunk(c); });
          for (auto& th : pool) th.join();
          for (auto& partial : partials) {
            add_scaled(grads, partial.grads, 1.0);
            batch_loss_sum += partial.loss_sum;
          }
        }
      }

      if (!std::isfinite(batch_loss_sum))
        throw Error("training diverged: non-finite loss at epoch " +
                    std::to_string(epoch));

      // Mean gradient over the batch.
      auto grefs = parameter_refs(grads);
      const double inv_batch = 1.0 / static_cast<double>(batch);
      for (auto& r : grefs)
        for (std::size_t i = 0; i < r.size; ++i) r.data[i] *= inv_batch;

      adam.step(grads);
      epoch_loss_sum += batch_loss_sum;
    }

    const double train_loss = epoch_loss_sum / static_cast<double>(train_set.size());
    const double val_loss = mean_val_loss(weights);
    if (!std::isfinite(val_loss))
      throw Error("training diverged: non-finite validation loss at epoch " +
                  std::to_string(epoch));
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back({epoch, train_loss, val_loss, wall});

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.weights = weights;
    }
    if (epoch - result.best_epoch > tc.patience) break;
  }

  round_to_float32(result.weights);
  return result;
}

}  // namespace vecrank
