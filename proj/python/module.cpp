// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

#include "vecrank/io.hpp"
#include "vecrank/training.hpp"

namespace py = pybind11;
using namespace vecrank;

namespace {

EncodeOptions make_options(bool enrichment, bool dedicated) {
  EncodeOptions opts;
  opts.use_enrichment = enrichment;
  opts.use_dedicated = dedicated;
  return opts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Embedding-space passage reranker with document-aware hybrid attention";

  py::register_exception<Error>(m, "VecrankError");

  py::enum_<Activation>(m, "Activation")
      .value("GELU", Activation::kGelu)
      .value("RELU", Activation::kRelu);
  py::enum_<NormPlacement>(m, "NormPlacement")
      .value("POST", NormPlacement::kPost)
      .value("PRE", NormPlacement::kPre);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](int d, int layers, int heads, int ffn_dim, int k_max,
                       double ln_eps, double dropout, std::uint64_t seed,
                       NormPlacement norm_placement, Activation activation) {
             ModelConfig c{d, layers, heads, ffn_dim, k_max, ln_eps, dropout,
                           seed, norm_placement, activation};
             c.validate();
             return c;
           }),
           py::arg("d") = 768, py::arg("layers") = 16, py::arg("heads") = 8,
           py::arg("ffn_dim") = 2048, py::arg("k_max") = 20,
           py::arg("ln_eps") = 1e-5, py::arg("dropout") = 0.1,
           py::arg("seed") = 42, py::arg("norm_placement") = NormPlacement::kPost,
           py::arg("activation") = Activation::kGelu)
      .def_readwrite("d", &ModelConfig::dim)
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("ffn_dim", &ModelConfig::ffn_dim)
      .def_readwrite("k_max", &ModelConfig::k_max)
      .def_readwrite("ln_eps", &ModelConfig::ln_eps)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def_readwrite("seed", &ModelConfig::seed);

  py::class_<TrainerConfig>(m, "TrainerConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainerConfig::learning_rate)
      .def_readwrite("weight_decay", &TrainerConfig::weight_decay)
      .def_readwrite("max_epochs", &TrainerConfig::max_epochs)
      .def_readwrite("patience", &TrainerConfig::patience)
      .def_readwrite("batch_size", &TrainerConfig::batch_size)
      .def_readwrite("temperature", &TrainerConfig::temperature)
      .def_readwrite("seed", &TrainerConfig::seed)
      .def_readwrite("threads", &TrainerConfig::threads);

  py::class_<PassageRecord>(m, "PassageRecord")
      .def(py::init([](std::string passage_id, std::string doc_key,
                       std::int64_t chunk_index, Embedding embedding,
                       std::optional<int> relevance) {
             return PassageRecord{std::move(passage_id), std::move(doc_key),
                                  chunk_index, std::move(embedding), relevance};
           }),
           py::arg("passage_id"), py::arg("doc_key"), py::arg("chunk_index"),
           py::arg("embedding"), py::arg("relevance") = std::nullopt)
      .def_readwrite("passage_id", &PassageRecord::passage_id)
      .def_readwrite("doc_key", &PassageRecord::doc_key)
      .def_readwrite("chunk_index", &PassageRecord::chunk_index)
      .def_readwrite("embedding", &PassageRecord::embedding)
      .def_readwrite("relevance", &PassageRecord::relevance);

  py::class_<CandidateSet>(m, "CandidateSet")
      .def(py::init([](std::string query_id, Embedding query_embedding,
                       std::vector<PassageRecord> candidates) {
             return CandidateSet{std::move(query_id), std::move(query_embedding),
                                 std::move(candidates)};
           }),
           py::arg("query_id"), py::arg("query_embedding"), py::arg("candidates"))
      .def_readwrite("query_id", &CandidateSet::query_id)
      .def_readwrite("query_embedding", &CandidateSet::query_embedding)
      .def_readwrite("candidates", &CandidateSet::candidates);

  py::class_<RankedEntry>(m, "RankedEntry")
      .def_readonly("passage_id", &RankedEntry::passage_id)
      .def_readonly("score", &RankedEntry::score)
      .def_readonly("rank", &RankedEntry::rank)
      .def("__repr__", [](const RankedEntry& e) {
        return "RankedEntry(" + e.passage_id + ", rank=" + std::to_string(e.rank) +
               ", score=" + std::to_string(e.score) + ")";
      });

  py::class_<RankedList>(m, "RankedList")
      .def_readonly("query_id", &RankedList::query_id)
      .def_readonly("entries", &RankedList::entries);

  py::class_<ModelWeights>(m, "ModelWeights")
      .def_property_readonly("config", [](const ModelWeights& w) { return w.config; })
      .def_property_readonly("parameter_count",
                             [](const ModelWeights& w) { return parameter_count(w); });

  m.def("init_model", &init_model, py::arg("config"));

  m.def("doc_slot_map",
        [](const std::vector<PassageRecord>& candidates) {
          const DocSlotMap map = build_doc_slot_map(candidates);
          std::unordered_map<std::string, int> out;
          for (const auto& key : map.keys()) out[key] = map.slot_of(key);
          return out;
        },
        py::arg("candidates"));
  m.def("attention_mask", &build_attention_mask, py::arg("candidates"));
  m.def("position_encoding", &sinusoidal_position_encoding, py::arg("chunk_index"),
        py::arg("d"));

  m.def("encode",
        [](const Embedding& query, const std::vector<PassageRecord>& candidates,
           const ModelWeights& weights, bool enrichment, bool dedicated) {
          return encode(query, candidates, weights, make_options(enrichment, dedicated));
        },
        py::arg("query"), py::arg("candidates"), py::arg("weights"),
        py::arg("enrichment") = true, py::arg("dedicated") = true);

  m.def("score",
        [](const Embedding& query, const std::vector<PassageRecord>& candidates,
           const ModelWeights& weights, bool enrichment, bool dedicated) {
          return score(query, candidates, weights, make_options(enrichment, dedicated));
        },
        py::arg("query"), py::arg("candidates"), py::arg("weights"),
        py::arg("enrichment") = true, py::arg("dedicated") = true);

  m.def("rerank",
        [](const CandidateSet& set, const ModelWeights& weights, bool enrichment,
           bool dedicated) {
          return rerank(set.query_id, set.query_embedding, set.candidates, weights,
                        make_options(enrichment, dedicated));
        },
        py::arg("candidate_set"), py::arg("weights"), py::arg("enrichment") = true,
        py::arg("dedicated") = true);

  m.def("info_nce_loss", &info_nce_loss, py::arg("query"), py::arg("positive"),
        py::arg("negatives"));

  m.def("train",
        [](const std::vector<CandidateSet>& train_sets,
           const std::vector<CandidateSet>& val_sets, const ModelConfig& config,
           const TrainerConfig& trainer) {
          std::vector<TrainingInstance> train_inst, val_inst;
          for (const auto& s : train_sets) train_inst.push_back(make_training_instance(s));
          for (const auto& s : val_sets) val_inst.push_back(make_training_instance(s));
          TrainResult res = train(train_inst, val_inst, init_model(config), trainer);
          py::list log;
          for (const auto& e : res.log)
            log.append(py::make_tuple(e.epoch, e.train_loss, e.val_loss, e.wall_seconds));
          return py::make_tuple(res.weights, log, res.best_epoch, res.best_val_loss);
        },
        py::arg("train_sets"), py::arg("val_sets"), py::arg("config"),
        py::arg("trainer"));

  m.def("save_checkpoint", &save_checkpoint, py::arg("weights"), py::arg("path"));
  m.def("load_checkpoint",
        [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"));

  m.def("ndcg_at_k",
        [](const std::vector<std::string>& ranked_passages, const std::string& query_id,
           const std::unordered_map<std::string, int>& judgments, int cutoff) {
          RankedList rl{query_id, {}};
          for (std::size_t i = 0; i < ranked_passages.size(); ++i)
            rl.entries.push_back({ranked_passages[i], 0.0, static_cast<int>(i) + 1});
          QrelSet qrels;
          for (const auto& [pid, rel] : judgments) qrels.add(query_id, pid, rel);
          return ndcg_at_k(rl, qrels, cutoff);
        },
        py::arg("ranked_passages"), py::arg("query_id"), py::arg("judgments"),
        py::arg("cutoff") = 10);

  m.def("mrr_at_k",
        [](const std::vector<std::string>& ranked_passages, const std::string& query_id,
           const std::unordered_map<std::string, int>& judgments, int cutoff) {
          RankedList rl{query_id, {}};
          for (std::size_t i = 0; i < ranked_passages.size(); ++i)
            rl.entries.push_back({ranked_passages[i], 0.0, static_cast<int>(i) + 1});
          QrelSet qrels;
          for (const auto& [pid, rel] : judgments) qrels.add(query_id, pid, rel);
          return mrr_at_k(rl, qrels, cutoff);
        },
        py::arg("ranked_passages"), py::arg("query_id"), py::arg("judgments"),
        py::arg("cutoff") = 10);

  m.def("load_candidates",
        [](const std::string& path, int expected_dim, int k_max) {
          return load_candidates(path, expected_dim, k_max);
        },
        py::arg("path"), py::arg("expected_dim") = 0, py::arg("k_max") = 0);
  m.def("write_candidates", &write_candidates, py::arg("path"), py::arg("sets"));

  m.attr("__version__") = "0.1.0";
}
