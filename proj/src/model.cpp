// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include "vecrank/model.hpp"

#include <cmath>
#include <random>

namespace vecrank {

namespace {

Matrix scaled_normal(Eigen::Index rows, Eigen::Index cols, double stddev,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  return m;
}

AttentionProjections init_projections(int dim, std::mt19937_64& rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  return {scaled_normal(dim, dim, stddev, rng), scaled_normal(dim, dim, stddev, rng),
          scaled_normal(dim, dim, stddev, rng), scaled_normal(dim, dim, stddev, rng)};
}

}  // namespace

ModelWeights init_model(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);

  ModelWeights w;
  w.config = config;
  w.doc_table = scaled_normal(config.k_max, config.dim, 0.02, rng);
  w.layers.reserve(config.layers);
  const double ffn_in = 1.0 / std::sqrt(static_cast<double>(config.dim));
  const double ffn_hid = 1.0 / std::sqrt(static_cast<double>(config.ffn_dim));
  for (int l = 0; l < config.layers; ++l) {
    LayerWeights lw;
    lw.shared = init_projections(config.dim, rng);
    lw.dedicated = init_projections(config.dim, rng);
    lw.ffn_w1 = scaled_normal(config.dim, config.ffn_dim, ffn_in, rng);
    lw.ffn_b1 = Embedding::Zero(config.ffn_dim);
    lw.ffn_w2 = scaled_normal(config.ffn_dim, config.dim, ffn_hid, rng);
    lw.ffn_b2 = Embedding::Zero(config.dim);
    lw.norm1 = {Embedding::Ones(config.dim), Embedding::Zero(config.dim)};
    lw.norm2 = {Embedding::Ones(config.dim), Embedding::Zero(config.dim)};
    w.layers.push_back(std::move(lw));
  }
  round_to_float32(w);
  return w;
}

ModelWeights zeros_like(const ModelWeights& src) {
  ModelWeights z;
  z.config = src.config;
  z.doc_table = Matrix::Zero(src.doc_table.rows(), src.doc_table.cols());
  z.layers.resize(src.layers.size());
  for (std::size_t l = 0; l < src.layers.size(); ++l) {
    const auto& s = src.layers[l];
    auto& d = z.layers[l];
    auto zero_proj = [](const AttentionProjections& p) {
      return AttentionProjections{Matrix::Zero(p.wq.rows(), p.wq.cols()),
                                  Matrix::Zero(p.wk.rows(), p.wk.cols()),
                                  Matrix::Zero(p.wv.rows(), p.wv.cols()),
                                  Matrix::Zero(p.wo.rows(), p.wo.cols())};
    };
    d.shared = zero_proj(s.shared);
    d.dedicated = zero_proj(s.dedicated);
    d.ffn_w1 = Matrix::Zero(s.ffn_w1.rows(), s.ffn_w1.cols());
    d.ffn_b1 = Embedding::Zero(s.ffn_b1.size());
    d.ffn_w2 = Matrix::Zero(s.ffn_w2.rows(), s.ffn_w2.cols());
    d.ffn_b2 = Embedding::Zero(s.ffn_b2.size());
    d.norm1 = {Embedding::Zero(s.norm1.scale.size()), Embedding::Zero(s.norm1.shift.size())};
    d.norm2 = {Embedding::Zero(s.norm2.scale.size()), Embedding::Zero(s.norm2.shift.size())};
  }
  return z;
}

std::size_t parameter_count(const ModelConfig& config) {
  const auto d = static_cast<std::size_t>(config.dim);
  const auto f = static_cast<std::size_t>(config.ffn_dim);
  const std::size_t per_layer = 8 * d * d       // two modules, four projections
                                + d * f + f     // ffn in
                                + f * d + d     // ffn out
                                + 4 * d;        // two norms
  return static_cast<std::size_t>(config.layers) * per_layer +
         static_cast<std::size_t>(config.k_max) * d;
}

std::size_t parameter_count(const ModelWeights& w) {
  return parameter_count(w.config);
}

namespace {

void push(std::vector<ParamRef>& out, const std::string& name, Matrix& m) {
  out.push_back({name, m.data(),
                 {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                 static_cast<std::size_t>(m.size())});
}

void push(std::vector<ParamRef>& out, const std::string& name, Embedding& v) {
  out.push_back({name, v.data(), {static_cast<std::size_t>(v.size())},
                 static_cast<std::size_t>(v.size())});
}

}  // namespace

std::vector<ParamRef> parameter_refs(ModelWeights& w) {
  std::vector<ParamRef> refs;
  push(refs, "doc_table", w.doc_table);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& lw = w.layers[l];
    push(refs, p + "shared.wq", lw.shared.wq);
    push(refs, p + "shared.wk", lw.shared.wk);
    push(refs, p + "shared.wv", lw.shared.wv);
    push(refs, p + "shared.wo", lw.shared.wo);
    push(refs, p + "dedicated.wq", lw.dedicated.wq);
    push(refs, p + "dedicated.wk", lw.dedicated.wk);
    push(refs, p + "dedicated.wv", lw.dedicated.wv);
    push(refs, p + "dedicated.wo", lw.dedicated.wo);
    push(refs, p + "ffn.w1", lw.ffn_w1);
    push(refs, p + "ffn.b1", lw.ffn_b1);
    push(refs, p + "ffn.w2", lw.ffn_w2);
    push(refs, p + "ffn.b2", lw.ffn_b2);
    push(refs, p + "norm1.scale", lw.norm1.scale);
    push(refs, p + "norm1.shift", lw.norm1.shift);
    push(refs, p + "norm2.scale", lw.norm2.scale);
    push(refs, p + "norm2.shift", lw.norm2.shift);
  }
  return refs;
}

void round_to_float32(ModelWeights& w) {
  for (auto& ref : parameter_refs(w))
    for (std::size_t i = 0; i < ref.size; ++i)
      ref.data[i] = static_cast<double>(static_cast<float>(ref.data[i]));
}

void add_scaled(ModelWeights& out, const ModelWeights& grads, double scale) {
  auto dst = parameter_refs(out);
  auto src = parameter_refs(const_cast<ModelWeights&>(grads));
  if (dst.size() != src.size()) throw Error("parameter structure mismatch in add_scaled");
  for (std::size_t t = 0; t < dst.size(); ++t) {
    if (dst[t].size != src[t].size)
      throw Error("parameter shape mismatch for " + dst[t].name);
    for (std::size_t i = 0; i < dst[t].size; ++i)
      dst[t].data[i] += scale * src[t].data[i];
  }
}

}  // namespace vecrank
