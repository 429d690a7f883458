#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "narrground/error.hpp"
#include "narrground/matcher.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace narrground;

namespace {

EmbeddingMatrix random_matrix(std::mt19937_64& rng, std::size_t n, std::uint32_t dim) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  EmbeddingMatrix m;
  m.dim = dim;
  for (std::size_t i = 0; i < n; ++i) m.ids.push_back(i);
  m.values.resize(n * dim);
  for (auto& v : m.values) v = u(rng);
  return m;
}

std::vector<float> random_query(std::mt19937_64& rng, std::uint32_t dim) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> q(dim);
  for (auto& v : q) v = u(rng);
  return q;
}

EmbeddingMatrix hand_fixture() {
  EmbeddingMatrix m;
  m.dim = 2;
  m.ids = {0, 1, 2, 3, 4};
  m.values = {1.0f, 1.0f, 0.3f, 0.4f, -0.8f, 0.6f, 2.0f, 0.0f, 0.0f, -0.9f};
  return m;
}

}  // namespace

TEST_CASE("exact index agrees with a linear scan") {
  std::mt19937_64 rng(1);
  auto m = random_matrix(rng, 1000, 32);
  auto index = EventIndex::build(m, SearchBackend::kExact);
  for (int q = 0; q < 100; ++q) {
    auto query = random_query(rng, 32);
    auto want = oracles::linear_scan(m, query);
    auto got = index.nearest(query);
    REQUIRE(got.has_value());
    CHECK(got->node == want.row);
    CHECK(std::abs(got->distance - want.distance) < 1e-6);
  }
}

TEST_CASE("threshold accepts exactly the oracle set") {
  std::mt19937_64 rng(2);
  // In 8-d with 500 rows the nearest-row distance straddles 0.65.
  auto m = random_matrix(rng, 500, 8);
  auto index = EventIndex::build(m, SearchBackend::kExact);
  int accepted = 0;
  for (int q = 0; q < 200; ++q) {
    auto query = random_query(rng, 8);
    auto want = oracles::linear_scan(m, query);
    auto got = match_event(index, query, 0.65);
    CHECK(got.has_value() == (want.distance <= 0.65));
    if (got) {
      ++accepted;
      CHECK(got->distance <= 0.65);
      CHECK(got->node == want.row);
    }
  }
  CHECK(accepted > 0);
  CHECK(accepted < 200);
}

TEST_CASE("hand-set 2-d fixture") {
  auto index = EventIndex::build(hand_fixture(), SearchBackend::kExact);
  std::vector<float> origin = {0.0f, 0.0f};
  auto hit = match_event(index, origin, 0.65);
  REQUIRE(hit.has_value());
  CHECK(hit->node == 1);
  CHECK(hit->distance == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_FALSE(match_event(index, origin, 0.4).has_value());
  CHECK(kDefaultThreshold == 0.65);
}

TEST_CASE("self query returns distance zero and ties go to the smallest id") {
  auto m = hand_fixture();
  auto index = EventIndex::build(m, SearchBackend::kExact);
  auto r = index.nearest(m.row(3));
  CHECK(r->node == 3);
  CHECK(r->distance == 0.0);

  EmbeddingMatrix dup;
  dup.dim = 1;
  dup.ids = {0, 1, 2};
  dup.values = {1.0f, -1.0f, 1.0f};
  auto tie = EventIndex::build(dup, SearchBackend::kExact);
  std::vector<float> zero = {0.0f};
  CHECK(tie.nearest(zero)->node == 0);
  std::vector<float> right = {2.0f};
  CHECK(tie.nearest(right)->node == 0);
}

TEST_CASE("single row answers everything with node 0") {
  EmbeddingMatrix m;
  m.dim = 3;
  m.ids = {0};
  m.values = {0.1f, 0.2f, 0.3f};
  auto index = EventIndex::build(m, SearchBackend::kExact);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) CHECK(index.nearest(random_query(rng, 3))->node == 0);
}

TEST_CASE("approximate backend recall") {
  std::mt19937_64 rng(1);
  auto m = random_matrix(rng, 1000, 32);
  IndexParams params;
  params.seed = 42;
  auto index = EventIndex::build(m, SearchBackend::kApproximate, params);
  CHECK(index.backend() == SearchBackend::kApproximate);
  int hits = 0;
  for (int q = 0; q < 100; ++q) {
    auto query = random_query(rng, 32);
    if (index.nearest(query)->node == oracles::linear_scan(m, query).row) ++hits;
  }
  CHECK(hits >= 95);

  SUBCASE("same seed, same answers") {
    auto again = EventIndex::build(m, SearchBackend::kApproximate, params);
    std::mt19937_64 qrng(9);
    for (int q = 0; q < 20; ++q) {
      auto query = random_query(qrng, 32);
      CHECK(again.nearest(query)->node == index.nearest(query)->node);
    }
  }
}

TEST_CASE("build and query errors") {
  EmbeddingMatrix empty_dim;
  empty_dim.ids = {0};
  CHECK_THROWS_AS(EventIndex::build(empty_dim, SearchBackend::kExact), ConfigError);
  auto m = hand_fixture();
  m.values[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(EventIndex::build(m, SearchBackend::kExact), ConfigError);
  auto index = EventIndex::build(hand_fixture(), SearchBackend::kExact);
  std::vector<float> wrong = {1.0f, 2.0f, 3.0f};
  CHECK_THROWS_AS(index.nearest(wrong), InvariantError);
}

TEST_CASE("embedding file round-trip") {
  std::mt19937_64 rng(5);
  auto m = random_matrix(rng, 17, 5);
  auto blob = m.serialize();
  CHECK(blob.substr(0, 4) == "EVGE");
  CHECK(blob.size() == 4 + 4 + 8 + 4 + 17 * 8 + 17 * 5 * 4);
  auto back = EmbeddingMatrix::parse(blob);
  CHECK(back.dim == m.dim);
  CHECK(back.ids == m.ids);
  CHECK(back.values == m.values);
  CHECK_THROWS_AS(EmbeddingMatrix::parse(blob.substr(0, blob.size() - 1)), FormatError);

  auto store = testutil::make_store(17, {}, 1);
  CHECK_NOTHROW(back.check_attached_to(store));
  std::swap(back.ids[0], back.ids[1]);
  CHECK_THROWS(back.check_attached_to(store));
  auto small = testutil::make_store(5, {}, 1);
  CHECK_THROWS(m.check_attached_to(small));
}

TEST_CASE("grounding statistics arithmetic") {
  AnchorSets sets;
  FrameRef a{"d", 0, 0}, b{"d", 1, 0};
  sets.events.push_back({a, {{a, 0, 1, 0.1}, {a, 1, 2, 0.2}}});
  sets.events.push_back({b, {{b, 0, 3, 0.3}}});
  auto s = grounding_stats(sets, 4);
  CHECK(s.queries == 4);
  CHECK(s.hits == 3);
  CHECK(s.hit_rate == doctest::Approx(0.75));
  REQUIRE(s.mean_distance.has_value());
  CHECK(*s.mean_distance == doctest::Approx(0.2));

  auto none = grounding_stats(AnchorSets{}, 0);
  CHECK(none.hit_rate == 0.0);
  CHECK_FALSE(none.mean_distance.has_value());
  CHECK(grounding_stats(sets, 3).hit_rate == 1.0);
}

TEST_CASE("ground keeps one anchor per level, ordered and deterministic") {
  auto m = hand_fixture();
  auto index = EventIndex::build(m, SearchBackend::kExact);
  std::vector<GroundQuery> queries = {
      {{"d", 1, 0}, 1, {2.0f, 0.1f}},
      {{"d", 0, 0}, 0, {0.0f, 0.0f}},
      {{"d", 0, 0}, 1, {5.0f, 5.0f}},  // too far
      {{"d", 1, 0}, 0, {0.9f, 1.0f}},
  };
  auto sets = ground(index, queries, 0.65);
  REQUIRE(sets.events.size() == 2);
  CHECK(sets.events[0].event == FrameRef{"d", 0, 0});
  CHECK(sets.events[0].matches.size() == 1);
  CHECK(sets.events[1].matches.size() == 2);
  CHECK(sets.events[1].matches[0].level == 0);
  CHECK(sets.events[1].matches[0].node == 0);
  CHECK(sets.events[1].matches[1].node == 3);

  std::mt19937_64 rng(8);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(queries.begin(), queries.end(), rng);
    CHECK(ground(index, queries, 0.65, 1 + i % 3) == sets);
  }

  std::vector<GroundQuery> far = {{{"d", 0, 0}, 0, {9.0f, 9.0f}}};
  CHECK(ground(index, far, 0.65).events.empty());

  queries.push_back(queries[0]);
  CHECK_THROWS_AS(ground(index, queries, 0.65), InvariantError);
}

TEST_CASE("more abstraction levels never lose matches") {
  std::mt19937_64 rng(12);
  auto m = random_matrix(rng, 300, 6);
  for (auto& v : m.values) v *= 0.3f;
  auto index = EventIndex::build(m, SearchBackend::kExact);
  std::vector<GroundQuery> all;
  for (int e = 0; e < 40; ++e) {
    int levels = 1 + static_cast<int>(rng() % 4);
    for (int l = 0; l < levels; ++l) {
      auto q = random_query(rng, 6);
      for (auto& v : q) v *= 0.35f;
      all.push_back({{"d", e, 0}, l, q});
    }
  }
  std::vector<GroundQuery> base;
  for (const auto& q : all) if (q.level == 0) base.push_back(q);
  auto small = ground(index, base);
  auto big = ground(index, all);
  std::size_t j = 0;
  for (const auto& ev : small.events) {
    while (j < big.events.size() && big.events[j].event != ev.event) ++j;
    REQUIRE(j < big.events.size());
    CHECK(big.events[j].matches.front() == ev.matches.front());
  }
  CHECK(big.events.size() >= small.events.size());
}

TEST_CASE("sentence grounding uses the whole sentence as one query") {
  auto index = EventIndex::build(hand_fixture(), SearchBackend::kExact);
  std::vector<SentenceQuery> qs = {{"d", 0, {0.3f, 0.4f}}, {"d", 1, {7.0f, 7.0f}}};
  auto sets = sentence_ground(index, qs);
  REQUIRE(sets.events.size() == 1);
  CHECK(sets.events[0].event.frame_idx == -1);
  CHECK(sets.events[0].matches[0].distance == 0.0);
}

TEST_CASE("hashing embedder") {
  HashingEmbedder h;
  CHECK(h.dim() == 64);
  auto a = h.embed("[P0] felt sleepy");
  auto b = h.embed("[p0]   FELT sleepy");
  CHECK(a == b);
  double norm = 0;
  for (float v : a) norm += static_cast<double>(v) * v;
  CHECK(norm == doctest::Approx(1.0));
  auto zero = h.embed("   ");
  for (float v : zero) CHECK(v == 0.0f);
  CHECK(HashingEmbedder(16).embed("x").size() == 16);
}
