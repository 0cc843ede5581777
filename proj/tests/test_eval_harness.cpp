#include "dark/eval_harness.hpp"

#include "doctest.h"
#include "test_models.hpp"
#include "test_support.hpp"

using namespace dark;

namespace {

const Vocabulary kVocab(2, 5);
const CanvasLayout kLayout;

ReasoningPair pair_on(const KGraph& g, QueryNode q, Pattern p) {
  ReasoningPair out;
  out.pattern = p;
  out.split = Split::test;
  out.answers_train = out.answers_valid = out.answers_test = execute(g, q);
  out.query = std::move(q);
  return out;
}

// Filtered ranks computed from an explicit 1/0 score vector.
std::vector<double> score_vector_ranks(const AnswerSet& gen, const AnswerSet& truth, std::size_t ne, double hi) {
  std::vector<double> scores(ne, 0.0);
  for (EntityId e : gen) scores[static_cast<std::size_t>(e)] = hi;
  std::vector<double> out;
  for (EntityId a : truth) {
    std::vector<EntityId> others;
    for (EntityId b : truth) {
      if (b != a) others.push_back(b);
    }
    out.push_back(midrank(scores, a, others));
  }
  return out;
}

AnswerSet random_subset(Rng& rng, std::size_t ne, double p) {
  AnswerSet s;
  for (std::size_t e = 0; e < ne; ++e) {
    if (uniform01(rng) < p) s.push_back(static_cast<EntityId>(e));
  }
  return s;
}

}  // namespace

TEST_CASE("ranking examples") {
  auto r = rank_answers(AnswerSet{1}, AnswerSet{1}, 5);
  CHECK(r.filtered[0] == 1.0);
  RankMetrics m;
  accumulate(m, r.filtered);
  finalize(m);
  CHECK(m.mrr == 1.0);
  CHECK(m.hits1 == 1.0);

  r = rank_answers(AnswerSet{1, 2}, AnswerSet{3}, 5);
  CHECK(r.filtered[0] == 4.0);
  RankMetrics m2;
  accumulate(m2, r.filtered);
  finalize(m2);
  CHECK(m2.mrr == 0.25);
  CHECK(m2.hits3 == 0.0);

  r = rank_answers(AnswerSet{}, AnswerSet{0, 4}, 5);
  for (double x : r.filtered) CHECK(x == (4.0 + 1.0) / 2.0);  // pool = 5 minus one other truth
  for (double x : r.raw) CHECK(x == 3.0);
}

TEST_CASE("filtered ranks match explicit score vectors at any scale") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t ne = 2 + uniform_index<std::size_t>(rng, 30);
    const AnswerSet gen = random_subset(rng, ne, uniform01(rng));
    AnswerSet truth = random_subset(rng, ne, 0.2);
    if (truth.empty()) truth.push_back(static_cast<EntityId>(uniform_index<std::size_t>(rng, ne)));
    const auto r = rank_answers(gen, truth, ne);
    CHECK(r.filtered == score_vector_ranks(gen, truth, ne, 1.0));
    CHECK(r.filtered == score_vector_ranks(gen, truth, ne, 7.0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
      CHECK(r.filtered[i] >= 1.0);
      CHECK(r.filtered[i] <= static_cast<double>(ne - truth.size() + 1));
      CHECK(r.raw[i] >= r.filtered[i]);
      CHECK(r.raw[i] <= static_cast<double>(ne));
    }
  }
}

TEST_CASE("metric bounds and hit ordering") {
  Rng rng(2);
  RankMetrics m;
  for (int q = 0; q < 200; ++q) {
    const AnswerSet gen = random_subset(rng, 40, 0.1);
    AnswerSet truth = random_subset(rng, 40, 0.05);
    if (truth.empty()) truth.push_back(0);
    accumulate(m, rank_answers(gen, truth, 40).filtered);
  }
  finalize(m);
  CHECK(m.queries == 200);
  for (double v : {m.mrr, m.hits1, m.hits3, m.hits10}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(m.hits1 <= m.hits3);
  CHECK(m.hits3 <= m.hits10);
}

TEST_CASE("abduction with the true hypothesis scores 1") {
  const KGraph g = testing::k4();
  const std::vector<ReasoningPair> pairs{pair_on(g, q::proj(1, q::anchor(2)), Pattern::p1),
                                         pair_on(g, q::proj(1, q::proj(0, q::anchor(0))), Pattern::p2)};
  for (const auto& p : pairs) {
    const testing::OracleDenoiser oracle(encode_pair(p.query, p.own_answers(), kVocab, kLayout), kVocab.size());
    const SamplingContext ctx{oracle, kVocab, kLayout, {}};
    const auto r = score_abduction(ctx, std::span(&p, 1), ReflectiveConfig{}, g, 3);
    CHECK(r.average == 1.0);
    CHECK(r.per_pair[0] == 1.0);
    CHECK(r.patterns.at(p.pattern).parse_failures == 0);
  }
}

TEST_CASE("unparseable hypotheses give an all-zero report") {
  const KGraph g = testing::k4();
  const std::vector<ReasoningPair> pairs{pair_on(g, q::proj(1, q::anchor(2)), Pattern::p1),
                                         pair_on(g, q::proj(0, q::anchor(0)), Pattern::p1)};
  const testing::FunctionDenoiser model(kLayout.length(), kVocab.size(),
                                        [](std::span<const TokenId>, std::size_t, TokenId v) {
                                          return v == tok::sep ? 1.0 : 0.0;
                                        });
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  const auto r = score_abduction(ctx, pairs, ReflectiveConfig{}, g, 0);
  CHECK(r.average == 0.0);
  CHECK(r.patterns.at(Pattern::p1).parse_failures == 2);
  const auto j = to_json(r);
  CHECK(j["patterns"].size() == 13);
  CHECK(j["patterns"][1]["jaccard"].is_null());
  CHECK(markdown_table(r).find("| avg |") != std::string::npos);
}

TEST_CASE("reports are deterministic across thread counts") {
  const KGraph g = testing::k4();
  std::vector<ReasoningPair> pairs;
  for (int i = 0; i < 6; ++i) pairs.push_back(pair_on(g, q::proj(1, q::anchor(2)), Pattern::p1));
  const testing::FunctionDenoiser model(kLayout.length(), kVocab.size());
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  ReflectiveConfig cfg;
  cfg.steps = 16;
  cfg.reflect_every = 4;
  const auto a = score_abduction(ctx, pairs, cfg, g, 5, 1);
  const auto b = score_abduction(ctx, pairs, cfg, g, 5, 3);
  CHECK(a.per_pair == b.per_pair);
  CHECK(to_json(a) == to_json(b));
  const auto da = score_deduction(ctx, pairs, cfg, 5, 1);
  const auto db = score_deduction(ctx, pairs, cfg, 5, 2);
  CHECK(to_json(da) == to_json(db));
}

TEST_CASE("deduction with an oracle ranks every answer first") {
  const KGraph g = testing::k4();
  const auto p = pair_on(g, q::proj(1, q::anchor(2)), Pattern::p1);
  const testing::OracleDenoiser oracle(encode_pair(p.query, p.answers_test, kVocab, kLayout), kVocab.size());
  const SamplingContext ctx{oracle, kVocab, kLayout, {}};
  const auto r = score_deduction(ctx, std::span(&p, 1), ReflectiveConfig{}, 0);
  CHECK(r.filtered.mrr == 1.0);
  CHECK(r.filtered.hits1 == 1.0);
  CHECK(r.raw.mrr == doctest::Approx(1.0 / 1.5));
}

TEST_CASE("random baseline stays in range") {
  const KGraph g = testing::k4();
  const std::vector<ReasoningPair> pairs{pair_on(g, q::proj(1, q::anchor(2)), Pattern::p1)};
  const auto r = score_random_baseline(pairs, g, 1);
  CHECK(r.average >= 0.0);
  CHECK(r.average <= 1.0);
}
