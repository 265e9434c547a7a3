// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vecrank {

using Embedding = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown on any contract violation: malformed input, dimension or
/// candidate-count mismatch, corrupt checkpoint, non-finite model state.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation : std::uint8_t { kGelu = 0, kRelu = 1 };
enum class NormPlacement : std::uint8_t { kPost = 0, kPre = 1 };

/// One retrieved passage: identity, source-document structure, and its
/// precomputed dense embedding. The passage text itself never enters the
/// system.
struct PassageRecord {
  std::string passage_id;
  std::string doc_key;
  std::int64_t chunk_index = 0;  // 0-based order within the source document
  Embedding embedding;
  std::optional<int> relevance;  // non-negative label when known
};

/// A query with its ordered first-stage candidates.
struct CandidateSet {
  std::string query_id;
  Embedding query_embedding;
  std::vector<PassageRecord> candidates;
};

struct ModelConfig {
  int dim = 768;       // embedding dimension d, shared with the retriever
  int layers = 16;     // stacked encoder layers
  int heads = 8;       // attention heads per module
  int ffn_dim = 2048;  // feed-forward hidden size
  int k_max = 20;      // maximum candidates per set
  double ln_eps = 1e-5;
  double dropout = 0.1;  // attention weights and FFN hidden, training only
  std::uint64_t seed = 42;
  NormPlacement norm_placement = NormPlacement::kPost;
  Activation activation = Activation::kGelu;

  int head_dim() const { return dim / heads; }
  void validate() const;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

/// Checks an embedding against the model dimension; `what` names the vector
/// in the error message.
void check_embedding(const Embedding& e, int dim, const std::string& what);

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);
NormPlacement norm_placement_from_string(const std::string& name);
std::string to_string(NormPlacement p);

}  // namespace vecrank
