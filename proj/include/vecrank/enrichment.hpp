// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vecrank/types.hpp"

namespace vecrank {

/// Additive mask entry for disallowed attention pairs. Finite so that a
/// stabilized softmax never sees (-inf) - (-inf); small enough that masked
/// weights underflow to exactly zero.
inline constexpr double kMaskedLogit = -1e9;

/// Per-candidate-set assignment of documents to slot indices. The i-th
/// distinct doc_key in candidate order gets slot i.
class DocSlotMap {
 public:
  DocSlotMap() = default;

  /// Returns the slot for doc_key, or -1 when unknown.
  int slot_of(const std::string& doc_key) const;
  int size() const { return static_cast<int>(order_.size()); }
  bool contains(const std::string& doc_key) const { return slot_of(doc_key) >= 0; }
  /// doc_keys in slot order.
  const std::vector<std::string>& keys() const { return order_; }

  /// Assigns the next free slot when doc_key is new; returns its slot.
  int insert(const std::string& doc_key);

 private:
  std::unordered_map<std::string, int> slots_;
  std::vector<std::string> order_;
};

/// First-appearance slot assignment over the candidate list.
DocSlotMap build_doc_slot_map(const std::vector<PassageRecord>& candidates);

/// (k+1)x(k+1) additive mask for the dedicated module. Index 0 is the query;
/// entry (i,j) is 0 iff j is the query, i is the query, or passages i and j
/// share a document; kMaskedLogit otherwise.
Matrix build_attention_mask(const std::vector<PassageRecord>& candidates);

/// Standard sinusoidal encoding of a chunk index:
/// component 2i   = sin(index / 10000^(2i/d))
/// component 2i+1 = cos(index / 10000^(2i/d))
Embedding sinusoidal_position_encoding(std::int64_t chunk_index, int dim);

/// p~ = p + doc_table[slot(doc_key)] + pos(chunk_index). The query embedding
/// is never enriched.
Embedding enrich(const PassageRecord& record, const DocSlotMap& slot_map,
                 const Matrix& doc_table);

/// Stacks the query (row 0, unenriched) and the enriched candidates into the
/// (k+1) x d encoder input. With enrichment disabled the raw embeddings are
/// used as-is. A null slot_map means first-appearance assignment.
Matrix build_input_sequence(const Embedding& query,
                            const std::vector<PassageRecord>& candidates,
                            const Matrix& doc_table,
                            const DocSlotMap* slot_map = nullptr,
                            bool use_enrichment = true);

}  // namespace vecrank
