// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <vector>

#include "vecrank/enrichment.hpp"
#include "vecrank/model.hpp"
#include "vecrank/types.hpp"

namespace vecrank {

/// Attention probabilities captured from one module in one layer, one
/// (k+1)x(k+1) matrix per head.
struct ModuleTrace {
  std::vector<Matrix> head_probs;
};

struct LayerTrace {
  ModuleTrace shared;
  ModuleTrace dedicated;
  bool has_dedicated = false;
};

struct AttentionTrace {
  std::vector<LayerTrace> layers;
};

struct EncodeOptions {
  /// Overrides first-appearance slot assignment when set. Every candidate's
  /// doc_key must be present in the supplied map.
  const DocSlotMap* slot_map = nullptr;
  /// When false, doc-slot rows and sinusoidal positions are dropped and the
  /// raw embeddings enter the encoder ("w/o Pos").
  bool use_enrichment = true;
  /// When false, the dedicated masked module is removed and only shared
  /// attention runs ("w/o Hybrid").
  bool use_dedicated = true;
  /// Captures per-layer attention probabilities when set.
  AttentionTrace* trace = nullptr;
};

/// Scaled dot-product multi-head attention over the whole sequence.
/// Per head: softmax((Q K^T + mask) / sqrt(d_k)) V; heads are concatenated
/// and passed through the output projection. A null mask is full attention.
Matrix multi_head_attention(const Matrix& state, const AttentionProjections& proj,
                            const Matrix* mask, int heads,
                            ModuleTrace* trace = nullptr);

/// One hybrid encoder layer: shared full attention plus dedicated masked
/// attention, summed, then the FFN, with residuals and layer norm placed
/// per config.norm_placement.
Matrix hybrid_layer_forward(const Matrix& state, const Matrix& mask,
                            const LayerWeights& lw, const ModelConfig& config,
                            bool use_dedicated = true,
                            LayerTrace* trace = nullptr);

/// Full inference forward pass: returns the final (k+1) x d sequence state.
/// Row 0 is the query's (unused) final state, rows 1..k the contextualized
/// passage embeddings.
Matrix encode_sequence(const Embedding& query,
                       const std::vector<PassageRecord>& candidates,
                       const ModelWeights& weights,
                       const EncodeOptions& opts = {});

/// Contextualized passage embeddings p^_1..p^_k.
std::vector<Embedding> encode(const Embedding& query,
                              const std::vector<PassageRecord>& candidates,
                              const ModelWeights& weights,
                              const EncodeOptions& opts = {});

// --- training-time forward/backward -----------------------------------
//
// The cached forward keeps every activation needed for an exact reverse
// pass. Sequence lengths are at most k_max+1, so the caches are small.

struct AttentionCache {
  Matrix x;                      // module input
  Matrix q, k, v;                // projected, heads side by side
  std::vector<Matrix> probs;     // post-softmax, pre-dropout, per head
  std::vector<Matrix> drop;      // dropout keep-masks (scaled), per head
  Matrix ctx;                    // concatenated head outputs, post-dropout
  bool dropped = false;
};

struct FfnCache {
  Matrix input;
  Matrix pre;   // input * w1 + b1
  Matrix act;   // activation(pre)
  Matrix drop;  // dropout keep-mask (scaled)
  bool dropped = false;
};

struct NormCache {
  Matrix input;
  Matrix normalized;    // (x - mean) * inv_std, per row
  Eigen::VectorXd inv_std;
};

struct LayerCache {
  AttentionCache shared;
  AttentionCache dedicated;
  FfnCache ffn;
  NormCache norm1, norm2;
  Matrix input;
  Matrix output;
};

struct ForwardCache {
  Matrix input;  // enriched (k+1) x d sequence
  Matrix mask;
  std::vector<LayerCache> layers;
  Matrix output;
  bool use_dedicated = true;
};

/// Forward pass keeping activations. `rng` draws dropout masks when
/// dropout > 0; pass nullptr (or dropout 0) for a deterministic eval pass.
ForwardCache forward_cached(const Matrix& input_seq, const Matrix& mask,
                            const ModelWeights& weights, bool use_dedicated,
                            double dropout, std::mt19937_64* rng);

/// Exact reverse pass. `d_output` is the loss gradient with respect to the
/// final sequence state; parameter gradients are accumulated into `grads`
/// (shapes per zeros_like). Returns the gradient with respect to the input
/// sequence.
Matrix backward_cached(const ForwardCache& cache, const ModelWeights& weights,
                       const Matrix& d_output, ModelWeights& grads);

}  // namespace vecrank
