// Copyright (C) 2026 the vecrank authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <random>

#include "test_util.hpp"
#include "vecrank/enrichment.hpp"

using namespace vecrank;

namespace {

std::vector<PassageRecord> records_with_docs(const std::vector<std::string>& doc_keys) {
  std::vector<PassageRecord> out;
  std::map<std::string, int> next_chunk;
  for (std::size_t i = 0; i < doc_keys.size(); ++i) {
    PassageRecord r;
    r.passage_id = "p" + std::to_string(i);
    r.doc_key = doc_keys[i];
    r.chunk_index = next_chunk[doc_keys[i]]++;
    r.embedding = Embedding::Zero(4);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST_CASE("doc slot map follows first-appearance order") {
  auto recs = records_with_docs({"X", "Y", "X"});
  auto map = build_doc_slot_map(recs);
  CHECK(map.size() == 2);
  CHECK(map.slot_of("X") == 0);
  CHECK(map.slot_of("Y") == 1);

  auto single = build_doc_slot_map(records_with_docs({"A"}));
  CHECK(single.size() == 1);
  CHECK(single.slot_of("A") == 0);

  auto multi = build_doc_slot_map(records_with_docs({"C", "B", "A", "B"}));
  CHECK(multi.size() == 3);
  CHECK(multi.slot_of("C") == 0);
  CHECK(multi.slot_of("B") == 1);
  CHECK(multi.slot_of("A") == 2);
  CHECK(multi.slot_of("missing") == -1);
}

TEST_CASE("doc slot map rejects empty input") {
  CHECK_THROWS_AS(build_doc_slot_map({}), Error);
}

TEST_CASE("doc slot map is stable under appending seen documents") {
  auto recs = records_with_docs({"C", "B", "A"});
  auto before = build_doc_slot_map(recs);
  auto more = records_with_docs({"C", "B", "A", "B", "C", "A", "A"});
  auto after = build_doc_slot_map(more);
  CHECK(after.size() == before.size());
  for (const auto& key : before.keys())
    CHECK(after.slot_of(key) == before.slot_of(key));
}

TEST_CASE("slot order tracks first appearance under permutation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto recs = testutil::random_candidates(rng, 8, 4, 4);
    std::shuffle(recs.begin(), recs.end(), rng);
    auto map = build_doc_slot_map(recs);
    // Re-derive by hand.
    std::vector<std::string> seen;
    for (const auto& r : recs)
      if (std::find(seen.begin(), seen.end(), r.doc_key) == seen.end())
        seen.push_back(r.doc_key);
    for (std::size_t s = 0; s < seen.size(); ++s)
      CHECK(map.slot_of(seen[s]) == static_cast<int>(s));
  }
}

TEST_CASE("attention mask matches the documented 3-candidate example") {
  auto recs = records_with_docs({"A", "A", "B"});
  Matrix mask = build_attention_mask(recs);
  REQUIRE(mask.rows() == 4);
  REQUIRE(mask.cols() == 4);
  for (int j = 0; j < 4; ++j) CHECK(mask(0, j) == 0.0);
  CHECK(mask(1, 0) == 0.0);
  CHECK(mask(1, 1) == 0.0);
  CHECK(mask(1, 2) == 0.0);
  CHECK(mask(1, 3) == kMaskedLogit);
  CHECK(mask(2, 0) == 0.0);
  CHECK(mask(2, 1) == 0.0);
  CHECK(mask(2, 2) == 0.0);
  CHECK(mask(2, 3) == kMaskedLogit);
  CHECK(mask(3, 0) == 0.0);
  CHECK(mask(3, 1) == kMaskedLogit);
  CHECK(mask(3, 2) == kMaskedLogit);
  CHECK(mask(3, 3) == 0.0);
}

TEST_CASE("attention mask degenerate cases") {
  auto same = build_attention_mask(records_with_docs({"D", "D", "D", "D"}));
  CHECK(same.isZero(0.0));

  auto distinct = build_attention_mask(records_with_docs({"A", "B", "C"}));
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j)
      CHECK(distinct(i, j) == (i == j ? 0.0 : kMaskedLogit));
  for (int i = 0; i <= 3; ++i) {
    CHECK(distinct(i, 0) == 0.0);
    CHECK(distinct(0, i) == 0.0);
  }
}

TEST_CASE("attention mask equals the brute-force rule on random sets") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> k_pick(1, 8);
  std::uniform_int_distribution<int> docs_pick(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = k_pick(rng);
    auto recs = testutil::random_candidates(rng, k, 4, docs_pick(rng));
    Matrix got = build_attention_mask(recs);
    Matrix want = testutil::brute_force_mask(recs);
    CHECK(got == want);
    // Invariants: symmetric passage block, zero diagonal.
    for (int i = 0; i <= k; ++i) {
      CHECK(got(i, i) == 0.0);
      for (int j = 0; j <= k; ++j) CHECK(got(i, j) == got(j, i));
    }
  }
}

TEST_CASE("position encoding at index 0 alternates 0 and 1") {
  Embedding p = sinusoidal_position_encoding(0, 8);
  for (int i = 0; i < 8; i += 2) {
    CHECK(p[i] == doctest::Approx(0.0));
    CHECK(p[i + 1] == doctest::Approx(1.0));
  }
}

TEST_CASE("position encoding matches direct evaluation at index 1, d=4") {
  Embedding p = sinusoidal_position_encoding(1, 4);
  CHECK(p[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(std::sin(0.01)).epsilon(1e-12));
  CHECK(p[3] == doctest::Approx(std::cos(0.01)).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.8415).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.5403).epsilon(1e-4));
  CHECK(p[2] == doctest::Approx(0.0100).epsilon(1e-2));
  CHECK(p[3] == doctest::Approx(0.9999).epsilon(1e-4));
}

TEST_CASE("position encoding components stay in [-1, 1] and separate indices") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> idx(0, 9999);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = idx(rng);
    Embedding p = sinusoidal_position_encoding(m, 16);
    CHECK(p.minCoeff() >= -1.0);
    CHECK(p.maxCoeff() <= 1.0);
    const auto n = idx(rng);
    if (n != m) {
      Embedding q = sinusoidal_position_encoding(n, 16);
      CHECK((p - q).cwiseAbs().maxCoeff() > 1e-9);
    }
  }
  CHECK_THROWS_AS(sinusoidal_position_encoding(-1, 16), Error);
}

TEST_CASE("enrich adds passage, doc row, and position terms") {
  const int d = 6;
  Matrix table = Matrix::Zero(4, d);

  PassageRecord rec;
  rec.passage_id = "p0";
  rec.doc_key = "D";
  rec.chunk_index = 0;
  rec.embedding = Embedding::Zero(d);
  DocSlotMap map;
  map.insert("D");

  SUBCASE("zero embedding, zero doc row, chunk 0 leaves only the position term") {
    Embedding got = enrich(rec, map, table);
    Embedding want = sinusoidal_position_encoding(0, d);
    CHECK(testutil::max_abs_diff(got, want) == 0.0);
  }

  SUBCASE("general additive form") {
    std::mt19937_64 rng(5);
    rec.embedding = testutil::random_embedding(rng, d);
    table.row(0) = testutil::random_embedding(rng, d).transpose();
    Embedding want = rec.embedding + table.row(0).transpose() +
                     sinusoidal_position_encoding(0, d);
    CHECK(testutil::max_abs_diff(enrich(rec, map, table), want) == 0.0);
  }

  SUBCASE("unknown doc key is an error") {
    rec.doc_key = "unknown";
    CHECK_THROWS_AS(enrich(rec, map, table), Error);
  }
}

TEST_CASE("same-document passages with equal raw embeddings differ by position terms") {
  const int d = 8;
  std::mt19937_64 rng(9);
  Matrix table(2, d);
  table.row(0) = testutil::random_embedding(rng, d).transpose();
  table.row(1) = testutil::random_embedding(rng, d).transpose();
  DocSlotMap map;
  map.insert("D");
  map.insert("E");

  PassageRecord a{"a", "D", 3, testutil::random_embedding(rng, d), {}};
  PassageRecord b{"b", "D", 7, a.embedding, {}};
  Embedding diff = enrich(a, map, table) - enrich(b, map, table);
  Embedding want = sinusoidal_position_encoding(3, d) - sinusoidal_position_encoding(7, d);
  CHECK(testutil::max_abs_diff(diff, want) < 1e-15);
}

TEST_CASE("enrichment is linear in the raw embedding") {
  const int d = 8;
  std::mt19937_64 rng(13);
  Matrix table(1, d);
  table.row(0) = testutil::random_embedding(rng, d).transpose();
  DocSlotMap map;
  map.insert("D");

  PassageRecord rec{"a", "D", 2, testutil::random_embedding(rng, d), {}};
  Embedding bump = testutil::random_embedding(rng, d);
  PassageRecord bumped = rec;
  bumped.embedding += bump;
  Embedding lhs = enrich(bumped, map, table);
  Embedding rhs = enrich(rec, map, table) + bump;
  CHECK(testutil::max_abs_diff(lhs, rhs) < 1e-15);
}

TEST_CASE("input sequence keeps the query unenriched in row 0") {
  const int d = 6;
  std::mt19937_64 rng(17);
  auto recs = testutil::random_candidates(rng, 3, d, 2);
  Embedding query = testutil::random_embedding(rng, d);
  Matrix table(4, d);
  for (int r = 0; r < 4; ++r) table.row(r) = testutil::random_embedding(rng, d).transpose();

  Matrix seq = build_input_sequence(query, recs, table);
  CHECK(testutil::max_abs_diff(seq.row(0).transpose(), query) == 0.0);

  Matrix raw = build_input_sequence(query, recs, table, nullptr, false);
  for (std::size_t i = 0; i < recs.size(); ++i)
    CHECK(testutil::max_abs_diff(raw.row(static_cast<Eigen::Index>(i) + 1).transpose(),
                                 recs[i].embedding) == 0.0);
}
