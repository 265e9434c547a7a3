// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include "vecrank/types.hpp"

namespace vecrank {

void ModelConfig::validate() const {
  if (dim <= 0) throw Error("model dim must be positive, got " + std::to_string(dim));
  if (layers <= 0) throw Error("layer count must be positive, got " + std::to_string(layers));
  if (heads <= 0) throw Error("head count must be positive, got " + std::to_string(heads));
  if (dim % heads != 0)
    throw Error("dim " + std::to_string(dim) + " not divisible by heads " +
                std::to_string(heads));
  if (ffn_dim <= 0) throw Error("ffn_dim must be positive, got " + std::to_string(ffn_dim));
  if (k_max < 1) throw Error("k_max must be >= 1, got " + std::to_string(k_max));
  if (ln_eps <= 0.0) throw Error("ln_eps must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw Error("dropout must lie in [0,1), got " + std::to_string(dropout));
}

void check_embedding(const Embedding& e, int dim, const std::string& what) {
  if (e.size() != dim)
    throw Error(what + " has dimension " + std::to_string(e.size()) +
                ", model expects " + std::to_string(dim));
  if (!e.allFinite()) throw Error(what + " contains a non-finite component");
}

Activation activation_from_string(const std::string& name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "relu") return Activation::kRelu;
  throw Error("unknown activation '" + name + "' (expected gelu or relu)");
}

std::string to_string(Activation a) {
  return a == Activation::kGelu ? "gelu" : "relu";
}

NormPlacement norm_placement_from_string(const std::string& name) {
  if (name == "post") return NormPlacement::kPost;
  if (name == "pre") return NormPlacement::kPre;
  throw Error("unknown norm placement '" + name + "' (expected post or pre)");
}

std::string to_string(NormPlacement p) {
  return p == NormPlacement::kPost ? "post" : "pre";
}

}  // namespace vecrank
