// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "vecrank/encoder.hpp"

using namespace vecrank;

namespace {

ModelConfig small_config(int d = 8, int layers = 2, int heads = 2, int ffn = 16,
                         int k_max = 8) {
  ModelConfig c;
  c.dim = d;
  c.layers = layers;
  c.heads = heads;
  c.ffn_dim = ffn;
  c.k_max = k_max;
  c.dropout = 0.0;
  return c;
}

Matrix random_state(std::mt19937_64& rng, int n, int d, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace

TEST_CASE("masked and unmasked attention agree for a single candidate") {
  std::mt19937_64 rng(1);
  auto w = init_model(small_config());
  const auto& proj = w.layers[0].shared;
  Matrix state = random_state(rng, 2, 8);
  Matrix zero_mask = Matrix::Zero(2, 2);
  Matrix with_mask = multi_head_attention(state, proj, &zero_mask, 2);
  Matrix without = multi_head_attention(state, proj, nullptr, 2);
  CHECK(testutil::max_abs_diff(with_mask, without) == 0.0);
}

TEST_CASE("an all-zero mask reproduces unmasked attention") {
  // All candidates from one document: the dedicated module degenerates to
  // full attention.
  std::mt19937_64 rng(2);
  auto w = init_model(small_config());
  auto recs = testutil::random_candidates(rng, 5, 8, 1);
  Matrix mask = build_attention_mask(recs);
  REQUIRE(mask.isZero(0.0));
  Matrix state = random_state(rng, 6, 8);
  Matrix masked = multi_head_attention(state, w.layers[0].dedicated, &mask, 2);
  Matrix unmasked = multi_head_attention(state, w.layers[0].dedicated, nullptr, 2);
  CHECK(testutil::max_abs_diff(masked, unmasked) < 1e-6);
}

TEST_CASE("attention rows are normalized and masked weights vanish") {
  std::mt19937_64 rng(3);
  auto cfg = small_config(16, 2, 4, 32);
  auto w = init_model(cfg);
  for (int trial = 0; trial < 10; ++trial) {
    auto recs = testutil::random_candidates(rng, 6, 16, 3);
    auto set_query = testutil::random_embedding(rng, 16);
    AttentionTrace trace;
    EncodeOptions opts;
    opts.trace = &trace;
    encode(set_query, recs, w, opts);
    Matrix mask = build_attention_mask(recs);

    REQUIRE(trace.layers.size() == static_cast<std::size_t>(cfg.layers));
    for (const auto& layer : trace.layers) {
      for (const auto& probs : layer.shared.head_probs) {
        for (Eigen::Index r = 0; r < probs.rows(); ++r)
          CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
      }
      REQUIRE(layer.has_dedicated);
      for (const auto& probs : layer.dedicated.head_probs) {
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
          CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
          for (Eigen::Index c = 0; c < probs.cols(); ++c)
            if (mask(r, c) != 0.0) CHECK(probs(r, c) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("dedicated attention equals restricted-set softmax") {
  std::mt19937_64 rng(4);
  auto cfg = small_config(8, 1, 2, 16);
  auto w = init_model(cfg);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 6);
    auto recs = testutil::random_candidates(rng, k, 8, 3);
    Matrix state = random_state(rng, k + 1, 8);
    Matrix mask = build_attention_mask(recs);

    ModuleTrace trace;
    multi_head_attention(state, w.layers[0].dedicated, &mask, cfg.heads, &trace);

    const Matrix q = state * w.layers[0].dedicated.wq;
    const Matrix kk = state * w.layers[0].dedicated.wk;
    const auto allowed = testutil::allowed_sets(recs);
    for (int h = 0; h < cfg.heads; ++h) {
      Matrix want = testutil::restricted_softmax_attention_probs(
          q, kk, h, cfg.head_dim(), allowed);
      CHECK(testutil::max_abs_diff(trace.head_probs[static_cast<std::size_t>(h)], want) <
            1e-6);
    }
  }
}

TEST_CASE("zeroed output projections reduce the layer to stacked layer norms") {
  std::mt19937_64 rng(5);
  auto cfg = small_config();
  auto w = init_model(cfg);
  auto& lw = w.layers[0];
  lw.shared.wo.setZero();
  lw.dedicated.wo.setZero();
  lw.ffn_w2.setZero();
  lw.ffn_b2.setZero();

  auto recs = testutil::random_candidates(rng, 3, 8, 2);
  Matrix mask = build_attention_mask(recs);
  Matrix state = random_state(rng, 4, 8);
  Matrix got = hybrid_layer_forward(state, mask, lw, cfg);

  auto naive = testutil::to_rows(state);
  testutil::naive_layer_norm(naive, lw.norm1, cfg.ln_eps);
  testutil::naive_layer_norm(naive, lw.norm2, cfg.ln_eps);
  CHECK(testutil::max_abs_diff(got, testutil::from_rows(naive)) < 1e-12);
}

TEST_CASE("tied modules under an all-zero mask double the attention contribution") {
  std::mt19937_64 rng(6);
  auto cfg = small_config();
  auto w = init_model(cfg);
  auto lw = w.layers[0];
  lw.dedicated = lw.shared;  // tied projections

  auto recs = testutil::random_candidates(rng, 4, 8, 1);  // one document
  Matrix mask = build_attention_mask(recs);
  REQUIRE(mask.isZero(0.0));
  Matrix state = random_state(rng, 5, 8);
  Matrix tied = hybrid_layer_forward(state, mask, lw, cfg);

  // Reference: a single module whose output projection is doubled, dedicated
  // module disconnected.
  auto doubled = lw;
  doubled.shared.wo *= 2.0;
  doubled.dedicated.wo.setZero();
  Matrix reference = hybrid_layer_forward(state, mask, doubled, cfg);
  CHECK(testutil::max_abs_diff(tied, reference) < 1e-12);
}

TEST_CASE("hybrid layer matches the straight-line reference implementation") {
  std::mt19937_64 rng(7);
  auto cfg = small_config(8, 1, 2, 16);
  for (int trial = 0; trial < 20; ++trial) {
    cfg.seed = 100 + static_cast<std::uint64_t>(trial);
    auto w = init_model(cfg);
    auto recs = testutil::random_candidates(rng, 3, 8, 2);
    Matrix mask = build_attention_mask(recs);
    Matrix state = random_state(rng, 4, 8);
    Matrix got = hybrid_layer_forward(state, mask, w.layers[0], cfg);
    Matrix want = testutil::naive_hybrid_layer(state, mask, w.layers[0], cfg);
    CHECK(testutil::max_abs_diff(got, want) < 1e-6);
  }
}

TEST_CASE("pre-norm placement with disconnected blocks is the identity") {
  std::mt19937_64 rng(8);
  auto cfg = small_config();
  cfg.norm_placement = NormPlacement::kPre;
  auto w = init_model(cfg);
  auto& lw = w.layers[0];
  lw.shared.wo.setZero();
  lw.dedicated.wo.setZero();
  lw.ffn_w2.setZero();
  lw.ffn_b2.setZero();

  auto recs = testutil::random_candidates(rng, 3, 8, 2);
  Matrix mask = build_attention_mask(recs);
  Matrix state = random_state(rng, 4, 8);
  Matrix got = hybrid_layer_forward(state, mask, lw, cfg);
  CHECK(testutil::max_abs_diff(got, state) == 0.0);
}

TEST_CASE("encode returns k passage vectors of dimension d") {
  std::mt19937_64 rng(9);
  auto cfg = small_config();
  auto w = init_model(cfg);
  for (int k : {1, 3, 8}) {
    auto recs = testutil::random_candidates(rng, k, 8, 3);
    auto q = testutil::random_embedding(rng, 8);
    auto out = encode(q, recs, w);
    REQUIRE(out.size() == static_cast<std::size_t>(k));
    for (const auto& e : out) {
      CHECK(e.size() == 8);
      CHECK(e.allFinite());
    }
  }
}

TEST_CASE("encode rejects out-of-range and mismatched inputs") {
  std::mt19937_64 rng(10);
  auto cfg = small_config(8, 1, 2, 16, /*k_max=*/4);
  auto w = init_model(cfg);

  auto too_many = testutil::random_candidates(rng, 5, 8, 2);
  auto q = testutil::random_embedding(rng, 8);
  CHECK_THROWS_WITH_AS(encode(q, too_many, w), doctest::Contains("k_max"), Error);

  auto ok = testutil::random_candidates(rng, 3, 8, 2);
  auto bad_q = testutil::random_embedding(rng, 7);
  CHECK_THROWS_AS(encode(bad_q, ok, w), Error);

  auto bad_rec = ok;
  bad_rec[1].embedding = testutil::random_embedding(rng, 9);
  CHECK_THROWS_AS(encode(q, bad_rec, w), Error);

  CHECK_THROWS_AS(encode(q, {}, w), Error);
}

TEST_CASE("encode is bitwise deterministic") {
  std::mt19937_64 rng(11);
  auto w = init_model(small_config());
  auto recs = testutil::random_candidates(rng, 5, 8, 2);
  auto q = testutil::random_embedding(rng, 8);
  auto a = encode(q, recs, w);
  auto b = encode(q, recs, w);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < a[i].size(); ++j) CHECK(a[i][j] == b[i][j]);
}

TEST_CASE("permuting candidates with a fixed slot map permutes the outputs") {
  std::mt19937_64 rng(12);
  auto cfg = small_config();
  auto w = init_model(cfg);
  for (int trial = 0; trial < 20; ++trial) {
    auto recs = testutil::random_candidates(rng, 6, 8, 3);
    auto q = testutil::random_embedding(rng, 8);
    const DocSlotMap slot_map = build_doc_slot_map(recs);
    EncodeOptions opts;
    opts.slot_map = &slot_map;
    auto base = encode(q, recs, w, opts);

    std::vector<std::size_t> perm(recs.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<PassageRecord> shuffled;
    for (auto p : perm) shuffled.push_back(recs[p]);
    auto moved = encode(q, shuffled, w, opts);

    for (std::size_t i = 0; i < perm.size(); ++i)
      CHECK(testutil::max_abs_diff(moved[i], base[perm[i]]) < 1e-6);
  }
}

TEST_CASE("activations stay finite for inputs up to magnitude 10") {
  std::mt19937_64 rng(13);
  auto cfg = small_config(16, 4, 4, 32);
  auto w = init_model(cfg);
  auto recs = testutil::random_candidates(rng, 6, 16, 3);
  for (auto& r : recs)
    r.embedding = 10.0 * r.embedding.unaryExpr([](double v) { return std::tanh(v); });
  Embedding q = 10.0 * Embedding::Ones(16);
  auto out = encode(q, recs, w);
  for (const auto& e : out) CHECK(e.allFinite());
}

TEST_CASE("disabling the dedicated module ignores dedicated weights") {
  std::mt19937_64 rng(14);
  auto cfg = small_config();
  auto w = init_model(cfg);
  auto recs = testutil::random_candidates(rng, 4, 8, 2);
  auto q = testutil::random_embedding(rng, 8);

  EncodeOptions no_ded;
  no_ded.use_dedicated = false;
  auto base = encode(q, recs, w, no_ded);

  auto w2 = w;
  for (auto& lw : w2.layers) {
    lw.dedicated.wq.setRandom();
    lw.dedicated.wo.setRandom();
  }
  auto same = encode(q, recs, w2, no_ded);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(testutil::max_abs_diff(base[i], same[i]) == 0.0);
}
