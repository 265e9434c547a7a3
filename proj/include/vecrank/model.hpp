// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vecrank/types.hpp"

namespace vecrank {

struct NormParams {
  Embedding scale;  // ones at init
  Embedding shift;  // zeros at init
};

/// One attention module's projections, each d x d. No biases.
struct AttentionProjections {
  Matrix wq, wk, wv, wo;
};

struct LayerWeights {
  AttentionProjections shared;     // full attention, no mask
  AttentionProjections dedicated;  // document-masked attention
  Matrix ffn_w1;                   // d x ffn_dim
  Embedding ffn_b1;                // ffn_dim
  Matrix ffn_w2;                   // ffn_dim x d
  Embedding ffn_b2;                // d
  NormParams norm1, norm2;
};

struct ModelWeights {
  ModelConfig config;
  Matrix doc_table;  // k_max x d, learned document-slot rows
  std::vector<LayerWeights> layers;
};

/// Seeded initialization: scaled-normal (variance 1/fan_in) projections,
/// small-variance normal doc-slot rows, ones/zeros layer norms. All values
/// land on the float32 grid so checkpoints round-trip bitwise.
ModelWeights init_model(const ModelConfig& config);

/// Same shapes as `w`, all values zero. Used as a gradient accumulator.
ModelWeights zeros_like(const ModelWeights& w);

std::size_t parameter_count(const ModelConfig& config);
std::size_t parameter_count(const ModelWeights& w);

/// A named view over one parameter tensor's storage.
struct ParamRef {
  std::string name;
  double* data;
  std::vector<std::size_t> shape;
  std::size_t size;
};

/// Stable-order views over every parameter tensor. The order defines the
/// checkpoint layout and the optimizer state layout.
std::vector<ParamRef> parameter_refs(ModelWeights& w);

/// Rounds every parameter to the nearest float32. Keeps in-memory weights
/// exactly representable in the checkpoint format.
void round_to_float32(ModelWeights& w);

/// Elementwise out += scale * grads. Shapes must match.
void add_scaled(ModelWeights& out, const ModelWeights& grads, double scale);

}  // namespace vecrank
