// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include "vecrank/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace vecrank {

using json = nlohmann::json;

namespace {

[[noreturn]] void fail_at(const std::string& path, std::size_t line, const std::string& msg) {
  throw Error(path + ":" + std::to_string(line) + ": " + msg);
}

Embedding parse_embedding(const json& arr, const std::string& path, std::size_t line,
                          const std::string& what) {
  if (!arr.is_array() || arr.empty())
    fail_at(path, line, what + " must be a non-empty array of numbers");
  Embedding e(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) fail_at(path, line, what + " has a non-numeric component");
    e[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  if (!e.allFinite()) fail_at(path, line, what + " has a non-finite component");
  return e;
}

}  // namespace

void for_each_candidate_set(const std::string& path, int expected_dim, int k_max,
                            const std::function<void(CandidateSet)>& sink) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open candidate file '" + path + "'");

  int dim = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_at(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail_at(path, line_no, "record is not a JSON object");
    if (!j.contains("query_id") || !j["query_id"].is_string())
      fail_at(path, line_no, "missing string field 'query_id'");
    if (!j.contains("query_embedding"))
      fail_at(path, line_no, "missing field 'query_embedding'");
    if (!j.contains("candidates") || !j["candidates"].is_array() || j["candidates"].empty())
      fail_at(path, line_no, "missing non-empty array field 'candidates'");

    CandidateSet set;
    set.query_id = j["query_id"].get<std::string>();
    set.query_embedding = parse_embedding(j["query_embedding"], path, line_no,
                                          "query_embedding");
    if (dim == 0) dim = static_cast<int>(set.query_embedding.size());
    if (set.query_embedding.size() != dim)
      fail_at(path, line_no,
              "query_embedding has dimension " + std::to_string(set.query_embedding.size()) +
                  ", expected " + std::to_string(dim));

    const auto& cands = j["candidates"];
    if (k_max > 0 && static_cast<int>(cands.size()) > k_max)
      fail_at(path, line_no,
              "candidate set has " + std::to_string(cands.size()) +
                  " passages, more than the configured k_max=" + std::to_string(k_max));

    std::unordered_set<std::string> chunk_keys;
    for (const auto& c : cands) {
      if (!c.is_object()) fail_at(path, line_no, "candidate is not a JSON object");
      PassageRecord rec;
      if (!c.contains("passage_id") || !c["passage_id"].is_string())
        fail_at(path, line_no, "candidate missing string field 'passage_id'");
      if (!c.contains("doc_key") || !c["doc_key"].is_string())
        fail_at(path, line_no, "candidate missing string field 'doc_key'");
      if (!c.contains("chunk_index") || !c["chunk_index"].is_number_integer())
        fail_at(path, line_no, "candidate missing integer field 'chunk_index'");
      if (!c.contains("embedding"))
        fail_at(path, line_no, "candidate missing field 'embedding'");
      rec.passage_id = c["passage_id"].get<std::string>();
      rec.doc_key = c["doc_key"].get<std::string>();
      rec.chunk_index = c["chunk_index"].get<std::int64_t>();
      if (rec.chunk_index < 0) fail_at(path, line_no, "chunk_index must be non-negative");
      rec.embedding = parse_embedding(c["embedding"], path, line_no,
                                      "embedding of '" + rec.passage_id + "'");
      if (rec.embedding.size() != dim)
        fail_at(path, line_no,
                "embedding of '" + rec.passage_id + "' has dimension " +
                    std::to_string(rec.embedding.size()) + ", expected " +
                    std::to_string(dim));
      if (c.contains("relevance")) {
        if (!c["relevance"].is_number_integer() || c["relevance"].get<long>() < 0)
          fail_at(path, line_no, "relevance must be a non-negative integer");
        rec.relevance = c["relevance"].get<int>();
      }
      const std::string key = rec.doc_key + "\x1f" + std::to_string(rec.chunk_index);
      if (!chunk_keys.insert(key).second)
        fail_at(path, line_no,
                "duplicate (doc_key, chunk_index) pair ('" + rec.doc_key + "', " +
                    std::to_string(rec.chunk_index) + ")");
      set.candidates.push_back(std::move(rec));
    }
    sink(std::move(set));
  }
}

std::vector<CandidateSet> load_candidates(const std::string& path, int expected_dim,
                                          int k_max) {
  std::vector<CandidateSet> sets;
  for_each_candidate_set(path, expected_dim, k_max,
                         [&](CandidateSet s) { sets.push_back(std::move(s)); });
  if (sets.empty()) throw Error("candidate file '" + path + "' contains no records");
  return sets;
}

void write_candidates(const std::string& path, const std::vector<CandidateSet>& sets) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write candidate file '" + path + "'");
  for (const auto& set : sets) {
    json j;
    j["query_id"] = set.query_id;
    j["query_embedding"] = std::vector<double>(
        set.query_embedding.data(), set.query_embedding.data() + set.query_embedding.size());
    json cands = json::array();
    for (const auto& rec : set.candidates) {
      json c;
      c["passage_id"] = rec.passage_id;
      c["doc_key"] = rec.doc_key;
      c["chunk_index"] = rec.chunk_index;
      c["embedding"] = std::vector<double>(rec.embedding.data(),
                                           rec.embedding.data() + rec.embedding.size());
      if (rec.relevance) c["relevance"] = *rec.relevance;
      cands.push_back(std::move(c));
    }
    j["candidates"] = std::move(cands);
    out << j.dump() << '\n';
  }
}

// --- checkpoint --------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'V', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, std::string path)
      : buf_(buf), path_(std::move(path)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size())
      throw Error("checkpoint '" + path_ + "' is truncated");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    if (pos_ + n > buf_.size())
      throw Error("checkpoint '" + path_ + "' is truncated");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

/// Zero-valued weights with the shapes implied by `config`.
ModelWeights skeleton(const ModelConfig& config) {
  ModelWeights w;
  w.config = config;
  w.doc_table = Matrix::Zero(config.k_max, config.dim);
  w.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& lw : w.layers) {
    auto zero_proj = [&] {
      return AttentionProjections{Matrix::Zero(config.dim, config.dim),
                                  Matrix::Zero(config.dim, config.dim),
                                  Matrix::Zero(config.dim, config.dim),
                                  Matrix::Zero(config.dim, config.dim)};
    };
    lw.shared = zero_proj();
    lw.dedicated = zero_proj();
    lw.ffn_w1 = Matrix::Zero(config.dim, config.ffn_dim);
    lw.ffn_b1 = Embedding::Zero(config.ffn_dim);
    lw.ffn_w2 = Matrix::Zero(config.ffn_dim, config.dim);
    lw.ffn_b2 = Embedding::Zero(config.dim);
    lw.norm1 = {Embedding::Zero(config.dim), Embedding::Zero(config.dim)};
    lw.norm2 = {Embedding::Zero(config.dim), Embedding::Zero(config.dim)};
  }
  return w;
}

}  // namespace

void save_checkpoint(const ModelWeights& weights, const std::string& path) {
  weights.config.validate();
  std::string buf;
  buf.reserve(64 + parameter_count(weights) * sizeof(float));
  buf.append(kMagic, sizeof(kMagic));
  put(buf, kVersion);
  const auto& c = weights.config;
  put(buf, static_cast<std::uint32_t>(c.dim));
  put(buf, static_cast<std::uint32_t>(c.layers));
  put(buf, static_cast<std::uint32_t>(c.heads));
  put(buf, static_cast<std::uint32_t>(c.ffn_dim));
  put(buf, static_cast<std::uint32_t>(c.k_max));
  put(buf, c.ln_eps);
  put(buf, c.dropout);
  put(buf, c.seed);
  put(buf, static_cast<std::uint8_t>(c.norm_placement));
  put(buf, static_cast<std::uint8_t>(c.activation));

  auto refs = parameter_refs(const_cast<ModelWeights&>(weights));
  put(buf, static_cast<std::uint32_t>(refs.size()));
  for (const auto& ref : refs) {
    put(buf, static_cast<std::uint32_t>(ref.name.size()));
    buf.append(ref.name);
    put(buf, static_cast<std::uint32_t>(ref.shape.size()));
    for (std::size_t d : ref.shape) put(buf, static_cast<std::uint64_t>(d));
    for (std::size_t i = 0; i < ref.size; ++i)
      put(buf, static_cast<float>(ref.data[i]));
  }

  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size())));
  put(buf, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("short write while saving checkpoint '" + path + "'");
}

ModelWeights load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof(kMagic) + sizeof(std::uint32_t) * 2)
    throw Error("checkpoint '" + path + "' is truncated");

  const std::size_t body = buf.size() - sizeof(std::uint32_t);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + body, sizeof(stored_crc));
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(body)));
  if (crc != stored_crc)
    throw Error("checkpoint '" + path + "' failed its integrity check (corrupt file)");

  Reader r(buf, path);
  if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw Error("'" + path + "' is not a model checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw Error("checkpoint '" + path + "' has format version " +
                std::to_string(version) + ", this build reads version " +
                std::to_string(kVersion));

  ModelConfig c;
  c.dim = static_cast<int>(r.get<std::uint32_t>());
  c.layers = static_cast<int>(r.get<std::uint32_t>());
  c.heads = static_cast<int>(r.get<std::uint32_t>());
  c.ffn_dim = static_cast<int>(r.get<std::uint32_t>());
  c.k_max = static_cast<int>(r.get<std::uint32_t>());
  c.ln_eps = r.get<double>();
  c.dropout = r.get<double>();
  c.seed = r.get<std::uint64_t>();
  c.norm_placement = static_cast<NormPlacement>(r.get<std::uint8_t>());
  c.activation = static_cast<Activation>(r.get<std::uint8_t>());
  c.validate();

  ModelWeights w = skeleton(c);
  auto refs = parameter_refs(w);
  const auto tensor_count = r.get<std::uint32_t>();
  if (tensor_count != refs.size())
    throw Error("checkpoint '" + path + "' holds " + std::to_string(tensor_count) +
                " tensors, config implies " + std::to_string(refs.size()));
  for (auto& ref : refs) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name = r.get_bytes(name_len);
    if (name != ref.name)
      throw Error("checkpoint '" + path + "' tensor '" + name +
                  "' does not match expected '" + ref.name + "'");
    const auto ndim = r.get<std::uint32_t>();
    if (ndim != ref.shape.size())
      throw Error("checkpoint '" + path + "' tensor '" + name + "' has rank " +
                  std::to_string(ndim) + ", expected " +
                  std::to_string(ref.shape.size()));
    for (std::size_t d = 0; d < ref.shape.size(); ++d) {
      const auto dim = r.get<std::uint64_t>();
      if (dim != ref.shape[d])
        throw Error("checkpoint '" + path + "' tensor '" + name +
                    "' has shape mismatch on axis " + std::to_string(d) + ": " +
                    std::to_string(dim) + " vs " + std::to_string(ref.shape[d]));
    }
    for (std::size_t i = 0; i < ref.size; ++i)
      ref.data[i] = static_cast<double>(r.get<float>());
  }
  if (r.pos() != body)
    throw Error("checkpoint '" + path + "' has trailing bytes");
  return w;
}

ModelWeights load_checkpoint(const std::string& path, const ModelConfig& expected) {
  ModelWeights w = load_checkpoint(path);
  const auto& c = w.config;
  auto mismatch = [&](const std::string& field, long got, long want) {
    throw Error("checkpoint '" + path + "' was built with " + field + "=" +
                std::to_string(got) + ", expected " + field + "=" +
                std::to_string(want));
  };
  if (c.dim != expected.dim) mismatch("d", c.dim, expected.dim);
  if (c.layers != expected.layers) mismatch("layers", c.layers, expected.layers);
  if (c.heads != expected.heads) mismatch("heads", c.heads, expected.heads);
  if (c.ffn_dim != expected.ffn_dim) mismatch("ffn_dim", c.ffn_dim, expected.ffn_dim);
  if (c.k_max != expected.k_max) mismatch("k_max", c.k_max, expected.k_max);
  return w;
}

// --- run files and qrels ------------------------------------------------

void write_run_file(std::ostream& out, const std::vector<RankedList>& run,
                    const std::string& tag) {
  char score_buf[64];
  for (const auto& ranking : run) {
    for (const auto& e : ranking.entries) {
      std::snprintf(score_buf, sizeof(score_buf), "%.17g", e.score);
      out << ranking.query_id << " Q0 " << e.passage_id << ' ' << e.rank << ' '
          << score_buf << ' ' << tag << '\n';
    }
  }
}

void write_run_file(const std::string& path, const std::vector<RankedList>& run,
                    const std::string& tag) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write run file '" + path + "'");
  write_run_file(out, run, tag);
}

std::vector<RankedList> read_run_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open run file '" + path + "'");
  std::vector<RankedList> run;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string qid, q0, pid, tag;
    int rank;
    double score_val;
    if (!(ls >> qid >> q0 >> pid >> rank >> score_val >> tag))
      fail_at(path, line_no, "expected 6 whitespace-separated run columns");
    auto [it, added] = index.try_emplace(qid, run.size());
    if (added) run.push_back(RankedList{qid, {}});
    run[it->second].entries.push_back({pid, score_val, rank});
  }
  for (auto& ranking : run)
    std::sort(ranking.entries.begin(), ranking.entries.end(),
              [](const RankedEntry& a, const RankedEntry& b) { return a.rank < b.rank; });
  if (run.empty()) throw Error("run file '" + path + "' contains no entries");
  return run;
}

QrelSet read_qrels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open qrels file '" + path + "'");
  QrelSet qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string qid, zero, pid;
    int rel;
    if (!(ls >> qid >> zero >> pid >> rel))
      fail_at(path, line_no, "expected 4 whitespace-separated qrels columns");
    if (rel < 0) fail_at(path, line_no, "relevance must be non-negative");
    qrels.add(qid, pid, rel);
  }
  return qrels;
}

void write_qrels(const std::string& path, const QrelSet& qrels) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write qrels file '" + path + "'");
  for (const auto& [qid, pid, rel] : qrels.triples())
    out << qid << " 0 " << pid << ' ' << rel << '\n';
}

void write_training_log(const std::string& path, const std::vector<EpochStats>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write training log '" + path + "'");
  out << "epoch\ttrain_loss\tval_loss\twall_seconds\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d\t%.8g\t%.8g\t%.3f\n", e.epoch, e.train_loss,
                  e.val_loss, e.wall_seconds);
    out << buf;
  }
}

// --- config files --------------------------------------------------------

namespace {

long parse_long(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(value, &used);
  } catch (const std::exception&) {
    throw Error("config key '" + key + "' expects an integer, got '" + value + "'");
  }
  if (used != value.size())
    throw Error("config key '" + key + "' expects an integer, got '" + value + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw Error("config key '" + key + "' expects a number, got '" + value + "'");
  }
  if (used != value.size())
    throw Error("config key '" + key + "' expects a number, got '" + value + "'");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunSettings parse_config_text(const std::string& text) {
  RunSettings rs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(line_no) +
                  ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error("config line " + std::to_string(line_no) + ": empty key or value");

    if (key == "d") rs.model.dim = static_cast<int>(parse_long(key, value));
    else if (key == "layers") rs.model.layers = static_cast<int>(parse_long(key, value));
    else if (key == "heads") rs.model.heads = static_cast<int>(parse_long(key, value));
    else if (key == "ffn_dim") rs.model.ffn_dim = static_cast<int>(parse_long(key, value));
    else if (key == "k_max") rs.model.k_max = static_cast<int>(parse_long(key, value));
    else if (key == "ln_eps") rs.model.ln_eps = parse_double(key, value);
    else if (key == "dropout") rs.model.dropout = parse_double(key, value);
    else if (key == "norm_placement") rs.model.norm_placement = norm_placement_from_string(value);
    else if (key == "activation") rs.model.activation = activation_from_string(value);
    else if (key == "seed") {
      const long s = parse_long(key, value);
      if (s < 0) throw Error("config key 'seed' must be non-negative");
      rs.model.seed = static_cast<std::uint64_t>(s);
      rs.trainer.seed = static_cast<std::uint64_t>(s);
    }
    else if (key == "learning_rate") rs.trainer.learning_rate = parse_double(key, value);
    else if (key == "weight_decay") rs.trainer.weight_decay = parse_double(key, value);
    else if (key == "max_epochs") rs.trainer.max_epochs = static_cast<int>(parse_long(key, value));
    else if (key == "patience") rs.trainer.patience = static_cast<int>(parse_long(key, value));
    else if (key == "batch_size") rs.trainer.batch_size = static_cast<int>(parse_long(key, value));
    else if (key == "temperature") rs.trainer.temperature = parse_double(key, value);
    else if (key == "threads") rs.trainer.threads = static_cast<int>(parse_long(key, value));
    else
      throw Error("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  rs.model.validate();
  rs.trainer.validate();
  return rs;
}

RunSettings load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace vecrank
