#include "dark/reflective_sampler.hpp"

#include "doctest.h"
#include "test_models.hpp"
#include "test_support.hpp"

using namespace dark;

namespace {

const Vocabulary kVocab(2, 5);
const CanvasLayout kLayout;

// Mass spread evenly over the tokens that `a` or `b` hold at each position.
testing::FunctionDenoiser mixture(TokenSequence a, TokenSequence b) {
  return testing::FunctionDenoiser(kLayout.length(), kVocab.size(),
                                   [a, b](std::span<const TokenId>, std::size_t i, TokenId v) {
                                     return (v == a[i] ? 1.0 : 0.0) + (v == b[i] ? 1.0 : 0.0);
                                   });
}

}  // namespace

TEST_CASE("select_best takes the first maximum") {
  const std::vector<double> sims{0.2, 0.8, 0.8};
  CHECK(select_best(sims) == 1);
  CHECK(select_best(std::vector<double>{-1.0, -1.0}) == 0);
  CHECK_THROWS_AS(select_best(std::vector<double>{}), Error);
}

TEST_CASE("config validation") {
  ReflectiveConfig c;
  CHECK(c.reflective_steps() == 8);
  c.reflect_every = 65;
  CHECK_THROWS_AS(c.validate(), Error);
  c.reflect_every = 8;
  c.candidates = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.candidates = 4;
  c.verify = VerifyMode::graph;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("graph verification scores the K4 candidates against the observation") {
  const KGraph g = testing::k4();
  const AnswerSet obs{3, 4};
  const auto good = encode_pair(q::proj(1, q::anchor(2)), obs, kVocab, kLayout);
  const auto half = encode_pair(q::proj(1, q::anchor(1)), obs, kVocab, kLayout);
  const auto model = mixture(good, half);
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  ReflectiveConfig cfg;
  cfg.candidates = 16;
  cfg.verify = VerifyMode::graph;
  cfg.verify_graph = &g;
  Rng rng(4);
  SamplerStats stats;
  const Reflection r = reflect(ctx, abduction_start(obs, ctx), obs, cfg, rng, stats);
  REQUIRE(r.candidates.size() == 16);
  bool saw_good = false, saw_half = false;
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    const auto q = decode_query(query_region(r.candidates[i], kLayout), kVocab);
    if (q == q::proj(1, q::anchor(2))) {
      CHECK(r.sims[i] == 1.0);
      saw_good = true;
    } else {
      CHECK(q == q::proj(1, q::anchor(1)));
      CHECK(r.sims[i] == 0.5);
      saw_half = true;
    }
  }
  CHECK(saw_good);
  CHECK(saw_half);
  CHECK(r.sims[r.chosen] == 1.0);
  CHECK(stats.model_evals == 1);
}

TEST_CASE("unparseable candidates score -1 under graph verification") {
  const KGraph g = testing::k4();
  const AnswerSet obs{3};
  const auto model = testing::FunctionDenoiser(kLayout.length(), kVocab.size(),
                                               [](std::span<const TokenId>, std::size_t, TokenId v) {
                                                 return v == tok::op_and ? 1.0 : 0.0;
                                               });
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  ReflectiveConfig cfg;
  cfg.verify = VerifyMode::graph;
  cfg.verify_graph = &g;
  Rng rng(1);
  SamplerStats stats;
  const Reflection r = reflect(ctx, abduction_start(obs, ctx), obs, cfg, rng, stats);
  for (double s : r.sims) CHECK(s == -1.0);
}

TEST_CASE("model verification deduces each candidate and compares answers") {
  const AnswerSet obs{3, 4};
  const auto target = encode_pair(q::proj(1, q::anchor(2)), obs, kVocab, kLayout);
  const testing::OracleDenoiser model(target, kVocab.size());
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  ReflectiveConfig cfg;
  Rng rng(3);
  SamplerStats stats;
  const Reflection r = reflect(ctx, abduction_start(obs, ctx), obs, cfg, rng, stats);
  for (double s : r.sims) CHECK(s == 1.0);
  CHECK(stats.model_evals == 1 + cfg.candidates);
  const Reflection miss = reflect(ctx, abduction_start(AnswerSet{3}, ctx), AnswerSet{3}, cfg, rng, stats);
  for (double s : miss.sims) CHECK(s == 0.5);
}

TEST_CASE("a single candidate reproduces plain sampling") {
  const AnswerSet obs{3, 4};
  const auto model = mixture(encode_pair(q::proj(1, q::anchor(2)), obs, kVocab, kLayout),
                             encode_pair(q::proj(0, q::anchor(0)), obs, kVocab, kLayout));
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ReflectiveConfig cfg;
    cfg.candidates = 1;
    Rng a(seed), b(seed);
    const auto reflective = abduce(ctx, obs, cfg, a);
    const auto plain = denoise(ctx, abduction_start(obs, ctx), cfg.steps, {DecodeMode::sample, 1.0}, b);
    CHECK(reflective.canvas == plain.canvas);
  }
}

TEST_CASE("reflection schedule and evaluation budget") {
  const AnswerSet obs{3, 4};
  const KGraph g = testing::k4();
  // Uniform rows keep the query region masked for as long as the schedule allows.
  const testing::FunctionDenoiser model(kLayout.length(), kVocab.size());
  const SamplingContext ctx{model, kVocab, kLayout, {}};

  ReflectiveConfig cfg;
  cfg.reflect_every = cfg.steps;
  Rng rng(1);
  auto once = abduce(ctx, obs, cfg, rng);
  CHECK(once.stats.reflections == 1);

  cfg = ReflectiveConfig{};
  const std::size_t m = cfg.reflective_steps();
  const std::size_t bound = 3 * cfg.candidates * m + (cfg.steps - m);
  CHECK(bound == 152);
  for (VerifyMode mode : {VerifyMode::model, VerifyMode::graph}) {
    cfg.verify = mode;
    cfg.verify_graph = &g;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng r(seed);
      const auto res = abduce(ctx, obs, cfg, r);
      CHECK(res.stats.model_evals <= bound);
      CHECK(res.stats.reflections <= m);
      CHECK(res.canvas[0] == tok::bos);
    }
  }
}

TEST_CASE("abduction never touches the observation region") {
  const AnswerSet obs{1, 3, 4};
  const testing::FunctionDenoiser model(kLayout.length(), kVocab.size());
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  const auto start = abduction_start(obs, ctx);
  Rng rng(5);
  const auto res = abduce(ctx, obs, ReflectiveConfig{}, rng);
  for (std::size_t i = 0; i < kLayout.length(); ++i) {
    if (i < kLayout.query_begin() || i >= kLayout.query_end()) CHECK(res.canvas[i] == start.canvas[i]);
  }
  CHECK(std::count(res.canvas.begin(), res.canvas.end(), tok::mask) == 0);
}

TEST_CASE("fixed seed gives identical abductions") {
  const AnswerSet obs{3, 4};
  const testing::FunctionDenoiser model(kLayout.length(), kVocab.size());
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  Rng a(9), b(9);
  CHECK(abduce(ctx, obs, {}, a).canvas == abduce(ctx, obs, {}, b).canvas);
}

TEST_CASE("deduction with an oracle returns the encoded answers") {
  const auto q = q::proj(0, q::anchor(0));
  const auto target = encode_pair(q, AnswerSet{1, 2}, kVocab, kLayout);
  const testing::OracleDenoiser model(target, kVocab.size());
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  Rng rng(0);
  SamplerStats stats;
  CHECK(deduce(ctx, q, ReflectiveConfig{}, rng, &stats) == AnswerSet{1, 2});
  CHECK(stats.model_evals >= 1);
  CHECK(stats.model_evals <= 64);
}

TEST_CASE("deduction decodes leniently") {
  // Unsorted entities with a stray relation token: read up to EOS, sorted.
  TokenSequence target = encode_pair(q::proj(0, q::anchor(0)), AnswerSet{}, kVocab, kLayout);
  target[kLayout.obs_begin()] = kVocab.entity_token(4);
  target[kLayout.obs_begin() + 1] = kVocab.relation_token(1);
  target[kLayout.obs_begin() + 2] = kVocab.entity_token(1);
  const testing::OracleDenoiser model(target, kVocab.size());
  const SamplingContext ctx{model, kVocab, kLayout, {}};
  Rng rng(0);
  CHECK(deduce(ctx, q::proj(0, q::anchor(0)), ReflectiveConfig{}, rng) == AnswerSet{1, 4});
}
