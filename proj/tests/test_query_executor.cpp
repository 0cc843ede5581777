#include "dark/query_executor.hpp"

#include "doctest.h"
#include "test_support.hpp"

using namespace dark;

TEST_CASE("K4 examples") {
  const KGraph g = testing::k4();
  CHECK(execute(g, q::conj(q::proj(1, q::anchor(1)), q::proj(1, q::anchor(2)))) == AnswerSet{3});
  CHECK(execute(g, q::conj(q::proj(1, q::anchor(2)), q::negate(q::proj(1, q::anchor(1))))) == AnswerSet{4});
  CHECK(execute(g, q::proj(1, q::disj(q::proj(0, q::anchor(0)), q::proj(0, q::anchor(0))))) == AnswerSet{3, 4});
  CHECK(execute(g, q::conj(q::negate(q::proj(1, q::anchor(1))), q::proj(1, q::anchor(2)))) == AnswerSet{4});
}

TEST_CASE("unsupported negation placements") {
  const KGraph g = testing::k4();
  try {
    execute(g, q::negate(q::proj(0, q::anchor(0))));
    FAIL("root negation must be rejected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unsupported);
  }
  CHECK_THROWS_AS(execute(g, q::proj(1, q::negate(q::anchor(0)))), Error);
  CHECK_THROWS_AS(execute(g, q::proj(0, q::anchor(7))), Error);
}

TEST_CASE("double negation under And is the complement of the union") {
  const KGraph g = testing::k4();
  const auto r = execute(g, q::conj(q::negate(q::proj(0, q::anchor(0))), q::negate(q::proj(1, q::anchor(2)))));
  CHECK(r == AnswerSet{0});
}

TEST_CASE("jaccard") {
  const AnswerSet a{3, 4}, b{3}, c{1}, d{2};
  CHECK(jaccard(a, b) == doctest::Approx(0.5));
  CHECK(jaccard(a, a) == 1.0);
  CHECK(jaccard(c, d) == 0.0);
  CHECK(jaccard(AnswerSet{}, AnswerSet{}) == 1.0);
  CHECK(jaccard(AnswerSet{}, a) == 0.0);
}

TEST_CASE("oracle equivalence on random graphs for all patterns") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t ne = 5 + rng() % 26, nr = 1 + rng() % 4;
    const auto ts = testing::random_triples(ne, nr, 2 * ne + rng() % (3 * ne), rng());
    const KGraph g(ne, nr, ts);
    const testing::BruteForce oracle(g.triples(), ne);
    for (Pattern p : kAllPatterns) {
      for (int i = 0; i < 10; ++i) {
        const auto ar = arity(p);
        std::vector<EntityId> a(ar.anchors);
        std::vector<RelationId> r(ar.relations);
        for (auto& x : a) x = static_cast<EntityId>(rng() % ne);
        for (auto& x : r) x = static_cast<RelationId>(rng() % nr);
        const QueryNode qn = instantiate_pattern(p, a, r);
        CHECK(execute(g, qn) == oracle.answers(qn));
      }
    }
  }
}

TEST_CASE("negation-free queries are monotone under graph growth") {
  std::vector<NamedTriple> named;
  for (const auto& t : testing::random_triples(25, 3, 120, 4)) {
    named.push_back({"e" + std::to_string(100 + t.head), "r" + std::to_string(t.relation),
                     "e" + std::to_string(100 + t.tail)});
  }
  const auto sg = build_split_graphs(named, {}, 2);
  std::mt19937_64 rng(9);
  for (Pattern p : kAllPatterns) {
    if (has_negation(p)) continue;
    for (int i = 0; i < 30; ++i) {
      const auto ar = arity(p);
      std::vector<EntityId> a(ar.anchors);
      std::vector<RelationId> r(ar.relations);
      for (auto& x : a) x = static_cast<EntityId>(rng() % sg.num_entities());
      for (auto& x : r) x = static_cast<RelationId>(rng() % sg.num_relations());
      const auto qn = instantiate_pattern(p, a, r);
      const auto small = execute(sg.train, qn), big = execute(sg.test, qn);
      CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
    }
  }
}

TEST_CASE("And(a, Not(b)) equals the set difference") {
  const auto ts = testing::random_triples(12, 2, 40, 8);
  const KGraph g(12, 2, ts);
  for (EntityId x = 0; x < 12; ++x) {
    for (EntityId y = 0; y < 12; ++y) {
      const auto a = q::proj(0, q::anchor(x)), b = q::proj(1, q::anchor(y));
      const auto ea = execute(g, a), eb = execute(g, b);
      AnswerSet diff;
      std::set_difference(ea.begin(), ea.end(), eb.begin(), eb.end(), std::back_inserter(diff));
      CHECK(execute(g, q::conj(a, q::negate(b))) == diff);
    }
  }
}
