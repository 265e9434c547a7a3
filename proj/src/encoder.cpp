// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include "vecrank/encoder.hpp"

#include <cmath>

namespace vecrank {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double activation_value(Activation a, double x) {
  if (a == Activation::kRelu) return x > 0.0 ? x : 0.0;
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double activation_grad(Activation a, double x) {
  if (a == Activation::kRelu) return x > 0.0 ? 1.0 : 0.0;
  const double phi = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * phi;
}

Matrix apply_activation(Activation a, const Matrix& x) {
  return x.unaryExpr([a](double v) { return activation_value(a, v); });
}

Matrix activation_grad_matrix(Activation a, const Matrix& x) {
  return x.unaryExpr([a](double v) { return activation_grad(a, v); });
}

/// Scaled inverted-dropout keep mask: 0 with probability p, 1/(1-p) otherwise.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p,
                    std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = keep(rng) ? scale : 0.0;
  return m;
}

Matrix layer_norm_forward(const Matrix& x, const NormParams& np, double eps,
                          NormCache* cache) {
  const auto n = x.rows();
  const auto d = x.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().sum() / static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * is;
    inv_std[r] = is;
  }
  Matrix y = (xhat.array().rowwise() * np.scale.transpose().array()).rowwise() +
             np.shift.transpose().array();
  if (cache) {
    cache->input = x;
    cache->normalized = xhat;
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const NormCache& c, const NormParams& np,
                           const Matrix& dy, NormParams& grad) {
  const auto n = dy.rows();
  const auto d = dy.cols();
  Matrix dx(n, d);
  const Eigen::ArrayXd scale_arr = np.scale.array();
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::ArrayXd xhat = c.normalized.row(r).transpose().array();
    const Eigen::ArrayXd g = dy.row(r).transpose().array();
    grad.scale.array() += g * xhat;
    grad.shift.array() += g;
    const Eigen::ArrayXd dxhat = g * scale_arr;
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * xhat).mean();
    dx.row(r) = (c.inv_std[r] * (dxhat - m1 - xhat * m2)).matrix().transpose();
  }
  return dx;
}

/// Forward for one attention module. `cache`, `trace`, and dropout are all
/// optional; probabilities recorded in the trace are pre-dropout.
Matrix attention_forward(const Matrix& x, const AttentionProjections& proj,
                         const Matrix* mask, int heads, AttentionCache* cache,
                         ModuleTrace* trace, double dropout,
                         std::mt19937_64* rng) {
  const auto n = x.rows();
  const auto d = x.cols();
  const auto dk = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Matrix q = x * proj.wq;
  Matrix k = x * proj.wk;
  Matrix v = x * proj.wv;

  const bool use_dropout = dropout > 0.0 && rng != nullptr;
  Matrix ctx(n, d);
  if (cache) {
    cache->x = x;
    cache->probs.assign(static_cast<std::size_t>(heads), Matrix());
    cache->drop.clear();
    if (use_dropout) cache->drop.assign(static_cast<std::size_t>(heads), Matrix());
    cache->dropped = use_dropout;
  }
  if (trace) trace->head_probs.assign(static_cast<std::size_t>(heads), Matrix());

  for (int h = 0; h < heads; ++h) {
    const auto qh = q.middleCols(h * dk, dk);
    const auto kh = k.middleCols(h * dk, dk);
    const auto vh = v.middleCols(h * dk, dk);

    Matrix logits = qh * kh.transpose();
    if (mask) logits += *mask;
    logits *= inv_scale;

    Matrix probs(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double row_max = logits.row(r).maxCoeff();
      const Eigen::RowVectorXd e = (logits.row(r).array() - row_max).exp().matrix();
      probs.row(r) = e / e.sum();
    }

    Matrix applied = probs;
    if (use_dropout) {
      Matrix keep = dropout_mask(n, n, dropout, *rng);
      applied = probs.cwiseProduct(keep);
      if (cache) cache->drop[static_cast<std::size_t>(h)] = std::move(keep);
    }
    ctx.middleCols(h * dk, dk) = applied * vh;

    if (cache) cache->probs[static_cast<std::size_t>(h)] = probs;
    if (trace) trace->head_probs[static_cast<std::size_t>(h)] = std::move(probs);
  }

  Matrix out = ctx * proj.wo;
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->ctx = std::move(ctx);
  }
  return out;
}

Matrix attention_backward(const AttentionCache& c, const AttentionProjections& proj,
                          const Matrix& d_out, int heads,
                          AttentionProjections& grad) {
  const auto n = c.x.rows();
  const auto d = c.x.cols();
  const auto dk = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));

  grad.wo += c.ctx.transpose() * d_out;
  const Matrix d_ctx = d_out * proj.wo.transpose();

  Matrix dq(n, d), dkk(n, d), dv(n, d);
  for (int h = 0; h < heads; ++h) {
    const auto qh = c.q.middleCols(h * dk, dk);
    const auto kh = c.k.middleCols(h * dk, dk);
    const auto vh = c.v.middleCols(h * dk, dk);
    const auto& probs = c.probs[static_cast<std::size_t>(h)];
    const auto d_ctx_h = d_ctx.middleCols(h * dk, dk);

    Matrix applied = c.dropped
                         ? Matrix(probs.cwiseProduct(c.drop[static_cast<std::size_t>(h)]))
                         : probs;
    Matrix d_applied = d_ctx_h * vh.transpose();
    dv.middleCols(h * dk, dk) = applied.transpose() * d_ctx_h;

    Matrix d_probs = c.dropped
                         ? Matrix(d_applied.cwiseProduct(c.drop[static_cast<std::size_t>(h)]))
                         : std::move(d_applied);

    Matrix d_scores(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double dot = d_probs.row(r).dot(probs.row(r));
      d_scores.row(r) = probs.row(r).array() * (d_probs.row(r).array() - dot);
    }
    d_scores *= inv_scale;

    dq.middleCols(h * dk, dk) = d_scores * kh;
    dkk.middleCols(h * dk, dk) = d_scores.transpose() * qh;
  }

  grad.wq += c.x.transpose() * dq;
  grad.wk += c.x.transpose() * dkk;
  grad.wv += c.x.transpose() * dv;
  return dq * proj.wq.transpose() + dkk * proj.wk.transpose() +
         dv * proj.wv.transpose();
}

Matrix ffn_forward(const Matrix& x, const LayerWeights& lw, Activation act,
                   FfnCache* cache, double dropout, std::mt19937_64* rng) {
  Matrix pre = (x * lw.ffn_w1).rowwise() + lw.ffn_b1.transpose();
  Matrix hidden = apply_activation(act, pre);
  const bool use_dropout = dropout > 0.0 && rng != nullptr;
  Matrix applied = hidden;
  Matrix keep;
  if (use_dropout) {
    keep = dropout_mask(hidden.rows(), hidden.cols(), dropout, *rng);
    applied = hidden.cwiseProduct(keep);
  }
  Matrix out = (applied * lw.ffn_w2).rowwise() + lw.ffn_b2.transpose();
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
    cache->act = std::move(applied);  // post-dropout hidden, as consumed by w2
    cache->dropped = use_dropout;
    if (use_dropout) cache->drop = std::move(keep);
  }
  return out;
}

Matrix ffn_backward(const FfnCache& c, const LayerWeights& lw, Activation act,
                    const Matrix& d_out, LayerWeights& grad) {
  grad.ffn_w2 += c.act.transpose() * d_out;
  grad.ffn_b2 += d_out.colwise().sum().transpose();
  Matrix d_hidden = d_out * lw.ffn_w2.transpose();
  if (c.dropped) d_hidden = d_hidden.cwiseProduct(c.drop);
  Matrix d_pre = d_hidden.cwiseProduct(activation_grad_matrix(act, c.pre));
  grad.ffn_w1 += c.input.transpose() * d_pre;
  grad.ffn_b1 += d_pre.colwise().sum().transpose();
  return d_pre * lw.ffn_w1.transpose();
}

/// One layer, either norm placement, optionally caching and tracing.
Matrix layer_forward_impl(const Matrix& x, const Matrix& mask,
                          const LayerWeights& lw, const ModelConfig& config,
                          bool use_dedicated, LayerCache* cache,
                          LayerTrace* trace, double dropout,
                          std::mt19937_64* rng) {
  AttentionCache* sc = cache ? &cache->shared : nullptr;
  AttentionCache* dc = cache ? &cache->dedicated : nullptr;
  FfnCache* fc = cache ? &cache->ffn : nullptr;
  NormCache* n1 = cache ? &cache->norm1 : nullptr;
  NormCache* n2 = cache ? &cache->norm2 : nullptr;
  ModuleTrace* st = trace ? &trace->shared : nullptr;
  ModuleTrace* dt = trace ? &trace->dedicated : nullptr;
  if (trace) trace->has_dedicated = use_dedicated;
  if (cache) cache->input = x;

  Matrix y;
  if (config.norm_placement == NormPlacement::kPost) {
    Matrix attn = attention_forward(x, lw.shared, nullptr, config.heads, sc, st,
                                    dropout, rng);
    if (use_dedicated)
      attn += attention_forward(x, lw.dedicated, &mask, config.heads, dc, dt,
                                dropout, rng);
    Matrix y1 = layer_norm_forward(x + attn, lw.norm1, config.ln_eps, n1);
    Matrix f = ffn_forward(y1, lw, config.activation, fc, dropout, rng);
    y = layer_norm_forward(y1 + f, lw.norm2, config.ln_eps, n2);
  } else {
    Matrix normed1 = layer_norm_forward(x, lw.norm1, config.ln_eps, n1);
    Matrix attn = attention_forward(normed1, lw.shared, nullptr, config.heads,
                                    sc, st, dropout, rng);
    if (use_dedicated)
      attn += attention_forward(normed1, lw.dedicated, &mask, config.heads, dc,
                                dt, dropout, rng);
    Matrix y1 = x + attn;
    Matrix normed2 = layer_norm_forward(y1, lw.norm2, config.ln_eps, n2);
    y = y1 + ffn_forward(normed2, lw, config.activation, fc, dropout, rng);
  }
  if (cache) cache->output = y;
  return y;
}

Matrix layer_backward_impl(const LayerCache& c, const LayerWeights& lw,
                           const ModelConfig& config, bool use_dedicated,
                           const Matrix& dy, LayerWeights& grad) {
  if (config.norm_placement == NormPlacement::kPost) {
    Matrix d_r2 = layer_norm_backward(c.norm2, lw.norm2, dy, grad.norm2);
    Matrix d_y1 = d_r2 + ffn_backward(c.ffn, lw, config.activation, d_r2, grad);
    Matrix d_r1 = layer_norm_backward(c.norm1, lw.norm1, d_y1, grad.norm1);
    Matrix dx = d_r1;
    dx += attention_backward(c.shared, lw.shared, d_r1, config.heads, grad.shared);
    if (use_dedicated)
      dx += attention_backward(c.dedicated, lw.dedicated, d_r1, config.heads,
                               grad.dedicated);
    return dx;
  }
  Matrix d_y1 = dy;
  Matrix d_n2 = ffn_backward(c.ffn, lw, config.activation, dy, grad);
  d_y1 += layer_norm_backward(c.norm2, lw.norm2, d_n2, grad.norm2);
  Matrix dx = d_y1;
  Matrix d_n1 =
      attention_backward(c.shared, lw.shared, d_y1, config.heads, grad.shared);
  if (use_dedicated)
    d_n1 += attention_backward(c.dedicated, lw.dedicated, d_y1, config.heads,
                               grad.dedicated);
  dx += layer_norm_backward(c.norm1, lw.norm1, d_n1, grad.norm1);
  return dx;
}

}  // namespace

Matrix multi_head_attention(const Matrix& state, const AttentionProjections& proj,
                            const Matrix* mask, int heads, ModuleTrace* trace) {
  if (state.cols() % heads != 0)
    throw Error("state dimension " + std::to_string(state.cols()) +
                " not divisible by heads " + std::to_string(heads));
  if (mask && (mask->rows() != state.rows() || mask->cols() != state.rows()))
    throw Error("attention mask shape does not match the sequence length");
  return attention_forward(state, proj, mask, heads, nullptr, trace, 0.0, nullptr);
}

Matrix hybrid_layer_forward(const Matrix& state, const Matrix& mask,
                            const LayerWeights& lw, const ModelConfig& config,
                            bool use_dedicated, LayerTrace* trace) {
  return layer_forward_impl(state, mask, lw, config, use_dedicated, nullptr,
                            trace, 0.0, nullptr);
}

Matrix encode_sequence(const Embedding& query,
                       const std::vector<PassageRecord>& candidates,
                       const ModelWeights& weights, const EncodeOptions& opts) {
  const auto& config = weights.config;
  const auto k = candidates.size();
  if (k == 0) throw Error("candidate list is empty");
  if (static_cast<int>(k) > config.k_max)
    throw Error("candidate set has k=" + std::to_string(k) +
                " passages but the model was built for k_max=" +
                std::to_string(config.k_max) +
                "; retrieve fewer candidates or train a larger-k_max model");

  Matrix state = build_input_sequence(query, candidates, weights.doc_table,
                                      opts.slot_map, opts.use_enrichment);
  const Matrix mask =
      opts.use_dedicated ? build_attention_mask(candidates) : Matrix();

  if (opts.trace) opts.trace->layers.assign(weights.layers.size(), LayerTrace());
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    LayerTrace* lt = opts.trace ? &opts.trace->layers[l] : nullptr;
    state = layer_forward_impl(state, mask, weights.layers[l], config,
                               opts.use_dedicated, nullptr, lt, 0.0, nullptr);
  }
  if (!state.allFinite())
    throw Error("encoder produced a non-finite state for query; model weights "
                "or inputs are out of range");
  return state;
}

std::vector<Embedding> encode(const Embedding& query,
                              const std::vector<PassageRecord>& candidates,
                              const ModelWeights& weights,
                              const EncodeOptions& opts) {
  const Matrix state = encode_sequence(query, candidates, weights, opts);
  std::vector<Embedding> out;
  out.reserve(candidates.size());
  for (Eigen::Index i = 1; i < state.rows(); ++i)
    out.push_back(state.row(i).transpose());
  return out;
}

ForwardCache forward_cached(const Matrix& input_seq, const Matrix& mask,
                            const ModelWeights& weights, bool use_dedicated,
                            double dropout, std::mt19937_64* rng) {
  ForwardCache fc;
  fc.input = input_seq;
  fc.mask = mask;
  fc.use_dedicated = use_dedicated;
  fc.layers.resize(weights.layers.size());
  Matrix state = input_seq;
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    state = layer_forward_impl(state, mask, weights.layers[l], weights.config,
                               use_dedicated, &fc.layers[l], nullptr, dropout,
                               rng);
  }
  if (!state.allFinite())
    throw Error("encoder produced a non-finite state during training forward");
  fc.output = std::move(state);
  return fc;
}

Matrix backward_cached(const ForwardCache& cache, const ModelWeights& weights,
                       const Matrix& d_output, ModelWeights& grads) {
  if (cache.layers.size() != weights.layers.size())
    throw Error("forward cache does not match the model depth");
  Matrix dy = d_output;
  for (std::size_t l = weights.layers.size(); l-- > 0;) {
    dy = layer_backward_impl(cache.layers[l], weights.layers[l], weights.config,
                             cache.use_dedicated, dy, grads.layers[l]);
  }
  return dy;
}

}  // namespace vecrank
