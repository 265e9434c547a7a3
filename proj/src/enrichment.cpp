// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include "vecrank/enrichment.hpp"

#include <cmath>

namespace vecrank {

int DocSlotMap::slot_of(const std::string& doc_key) const {
  auto it = slots_.find(doc_key);
  return it == slots_.end() ? -1 : it->second;
}

int DocSlotMap::insert(const std::string& doc_key) {
  auto [it, added] = slots_.try_emplace(doc_key, static_cast<int>(order_.size()));
  if (added) order_.push_back(doc_key);
  return it->second;
}

DocSlotMap build_doc_slot_map(const std::vector<PassageRecord>& candidates) {
  if (candidates.empty()) throw Error("cannot build a doc slot map from an empty candidate list");
  DocSlotMap map;
  for (const auto& record : candidates) map.insert(record.doc_key);
  return map;
}

Matrix build_attention_mask(const std::vector<PassageRecord>& candidates) {
  if (candidates.empty()) throw Error("cannot build an attention mask for an empty candidate list");
  const auto k = static_cast<Eigen::Index>(candidates.size());
  Matrix mask = Matrix::Zero(k + 1, k + 1);
  for (Eigen::Index i = 1; i <= k; ++i) {
    for (Eigen::Index j = 1; j <= k; ++j) {
      if (candidates[i - 1].doc_key != candidates[j - 1].doc_key)
        mask(i, j) = kMaskedLogit;
    }
  }
  return mask;
}

Embedding sinusoidal_position_encoding(std::int64_t chunk_index, int dim) {
  if (chunk_index < 0) throw Error("chunk_index must be non-negative");
  if (dim <= 0) throw Error("position encoding dimension must be positive");
  Embedding pos(dim);
  const auto p = static_cast<double>(chunk_index);
  for (int i = 0; i < dim; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
    pos[i] = std::sin(p * freq);
    if (i + 1 < dim) pos[i + 1] = std::cos(p * freq);
  }
  return pos;
}

Embedding enrich(const PassageRecord& record, const DocSlotMap& slot_map,
                 const Matrix& doc_table) {
  const auto dim = static_cast<int>(doc_table.cols());
  check_embedding(record.embedding, dim, "passage '" + record.passage_id + "'");
  const int slot = slot_map.slot_of(record.doc_key);
  if (slot < 0)
    throw Error("doc_key '" + record.doc_key + "' is not present in the slot map");
  if (slot >= doc_table.rows())
    throw Error("slot " + std::to_string(slot) + " exceeds the doc table (" +
                std::to_string(doc_table.rows()) + " rows)");
  return record.embedding + doc_table.row(slot).transpose() +
         sinusoidal_position_encoding(record.chunk_index, dim);
}

Matrix build_input_sequence(const Embedding& query,
                            const std::vector<PassageRecord>& candidates,
                            const Matrix& doc_table, const DocSlotMap* slot_map,
                            bool use_enrichment) {
  if (candidates.empty()) throw Error("candidate list is empty");
  const auto dim = static_cast<int>(doc_table.cols());
  check_embedding(query, dim, "query");

  DocSlotMap local;
  if (use_enrichment && slot_map == nullptr) {
    local = build_doc_slot_map(candidates);
    slot_map = &local;
  }

  const auto k = static_cast<Eigen::Index>(candidates.size());
  Matrix seq(k + 1, dim);
  seq.row(0) = query.transpose();
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& record = candidates[i];
    if (use_enrichment) {
      seq.row(i + 1) = enrich(record, *slot_map, doc_table).transpose();
    } else {
      check_embedding(record.embedding, dim, "passage '" + record.passage_id + "'");
      seq.row(i + 1) = record.embedding.transpose();
    }
  }
  return seq;
}

}  // namespace vecrank
