# Copyright (C) 2026 the vecrank authors
# SPDX-License-Identifier: Apache-2.0
"""Embedding-space passage reranker with document-aware hybrid attention."""

from vecrank._core import (
    Activation,
    CandidateSet,
    ModelConfig,
    ModelWeights,
    NormPlacement,
    PassageRecord,
    RankedEntry,
    RankedList,
    TrainerConfig,
    VecrankError,
    attention_mask,
    doc_slot_map,
    encode,
    info_nce_loss,
    init_model,
    load_candidates,
    load_checkpoint,
    mrr_at_k,
    ndcg_at_k,
    position_encoding,
    rerank,
    save_checkpoint,
    score,
    train,
    write_candidates,
)

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "CandidateSet",
    "ModelConfig",
    "ModelWeights",
    "NormPlacement",
    "PassageRecord",
    "RankedEntry",
    "RankedList",
    "TrainerConfig",
    "VecrankError",
    "attention_mask",
    "doc_slot_map",
    "encode",
    "info_nce_loss",
    "init_model",
    "load_candidates",
    "load_checkpoint",
    "mrr_at_k",
    "ndcg_at_k",
    "position_encoding",
    "rerank",
    "save_checkpoint",
    "score",
    "train",
    "write_candidates",
]
