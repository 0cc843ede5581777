#include "dark/pair_sampler.hpp"

#include <fstream>

#include "doctest.h"
#include "test_support.hpp"

using namespace dark;

namespace {

SplitGraphs k4_everywhere() {
  SplitGraphs g;
  g.entities = NameTable::from_names({"e0", "e1", "e2", "e3", "e4"});
  g.relations = NameTable::from_names({"r0", "r1"});
  g.train = g.valid = g.test = testing::k4();
  return g;
}

SplitGraphs synthetic(std::uint64_t seed) {
  SyntheticGraphSpec spec;
  spec.num_entities = 60;
  spec.num_edges = 400;
  return build_split_graphs(synthetic_triples(spec, seed), {}, seed);
}

}  // namespace

TEST_CASE("1p on K4 yields valid pairs and can hit P(r0,e0)") {
  const auto g = k4_everywhere();
  bool seen = false;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(s);
    const auto p = sample_pair(g, Split::train, Pattern::p1, rng);
    CHECK(!p.own_answers().empty());
    CHECK(p.own_answers().size() <= 32);
    if (p.query == q::proj(0, q::anchor(0))) {
      CHECK(p.answers_train == AnswerSet{1, 2});
      seen = true;
    }
  }
  CHECK(seen);
}

TEST_CASE("sample_pair is deterministic and fails loudly when impossible") {
  const auto g = synthetic(3);
  Rng a(5), b(5);
  CHECK(sample_pair(g, Split::valid, Pattern::pi, a) == sample_pair(g, Split::valid, Pattern::pi, b));
  const auto k = k4_everywhere();
  Rng rng(1);
  // An answer cap of zero rejects every grounding.
  try {
    sample_pair(k, Split::train, Pattern::i3, rng, {0, 50});
    FAIL("expected a sampling failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::sampling);
  }
}

TEST_CASE("sampled pairs respect size caps, nesting and stored answers") {
  const auto g = synthetic(4);
  for (Pattern p : kAllPatterns) {
    for (Split s : {Split::train, Split::valid, Split::test}) {
      Rng rng(derive_seed(11, static_cast<std::uint64_t>(p) * 3 + static_cast<std::uint64_t>(s)));
      ReasoningPair pr;
      try {
        pr = sample_pair(g, s, p, rng);
      } catch (const Error&) {
        continue;
      }
      CHECK(pr.pattern == p);
      CHECK(classify_pattern(pr.query) == p);
      CHECK(pr.own_answers().size() >= 1);
      CHECK(pr.own_answers().size() <= 32);
      CHECK(pr.answers_train == execute(g.train, pr.query));
      CHECK(pr.answers_valid == execute(g.valid, pr.query));
      CHECK(pr.answers_test == execute(g.test, pr.query));
      if (!has_negation(p)) {
        CHECK(std::includes(pr.answers_valid.begin(), pr.answers_valid.end(), pr.answers_train.begin(),
                            pr.answers_train.end()));
        CHECK(std::includes(pr.answers_test.begin(), pr.answers_test.end(), pr.answers_valid.begin(),
                            pr.answers_valid.end()));
      }
    }
  }
}

TEST_CASE("build_dataset dedups across splits and round trips through JSONL") {
  const auto g = synthetic(5);
  DatasetRequest req;
  for (Pattern p : kAllPatterns) {
    req.counts[Split::train][p] = 20;
    req.counts[Split::valid][p] = 5;
    req.counts[Split::test][p] = 5;
  }
  const CanvasLayout L;
  const Dataset ds = build_dataset(g, req, L, 9);
  const Vocabulary v(g.num_relations(), g.num_entities());
  std::set<TokenSequence> keys;
  for (const auto& p : ds.pairs) CHECK(keys.insert(query_prefix(p.query, v)).second);
  CHECK(revalidate(ds.pairs, g).empty());

  for (const auto& [split, s] : ds.summary) {
    std::size_t emitted = 0;
    for (const auto& [pattern, t] : s.patterns) {
      CHECK(t.emitted + t.duplicates + t.failures == t.requested);
      emitted += t.emitted;
    }
    CHECK(emitted == s.emitted);
    CHECK(s.unseen_fraction >= 0.0);
    CHECK(s.unseen_fraction <= 1.0);
  }

  // order: splits train, valid, test; within a split by (pattern, tokens)
  for (std::size_t i = 1; i < ds.pairs.size(); ++i) {
    const auto& a = ds.pairs[i - 1];
    const auto& b = ds.pairs[i];
    CHECK(a.split <= b.split);
    if (a.split == b.split) {
      CHECK(a.pattern <= b.pattern);
      if (a.pattern == b.pattern) CHECK(query_prefix(a.query, v) < query_prefix(b.query, v));
    }
  }

  const auto dir = testing::temp_dir("dataset");
  const auto files = write_dataset(ds, g, dir, {{"graph_dir", "x"}});
  CHECK(files.size() == 4);
  std::size_t total = 0;
  for (Split s : {Split::train, Split::valid, Split::test}) {
    const auto back = read_pairs(dir / (std::string(to_string(s)) + ".jsonl"), v);
    const auto want = ds.split(s);
    CHECK(back == want);
    total += back.size();
  }
  CHECK(total == ds.pairs.size());
  std::ifstream mf(dir / "manifest.json");
  const auto m = nlohmann::json::parse(mf);
  CHECK(m["graph_dir"] == "x");
  CHECK(m["seed"] == 9);
  CHECK(m["splits"]["valid"].contains("unseen_fraction"));
  std::filesystem::remove_all(dir);

  const Dataset again = build_dataset(g, req, L, 9);
  CHECK(again.pairs == ds.pairs);
}

TEST_CASE("100 1p requests on a tiny graph give at most the distinct groundings") {
  std::vector<NamedTriple> ts;
  for (int i = 0; i < 10; ++i) ts.push_back({"a" + std::to_string(i), "r", "b" + std::to_string(i % 3)});
  const auto g = build_split_graphs(ts, {}, 0);
  DatasetRequest req;
  req.counts[Split::train][Pattern::p1] = 100;
  const Dataset ds = build_dataset(g, req, CanvasLayout{}, 1);
  CHECK(ds.pairs.size() <= 8);
  CHECK(!ds.pairs.empty());
  for (const auto& p : ds.pairs) CHECK(p.answers_train == p.own_answers());
}

TEST_CASE("pair_from_json rejects inconsistent records") {
  const Vocabulary v(2, 5);
  nlohmann::json good = {{"split", "train"},       {"pattern", "1p"},        {"query_tokens", {4, 8, 10}},
                         {"answers_train", {1, 2}}, {"answers_valid", {1, 2}}, {"answers_test", {1, 2}}};
  CHECK(pair_from_json(good, v).query == q::proj(0, q::anchor(0)));
  auto wrong_pattern = good;
  wrong_pattern["pattern"] = "2p";
  CHECK_THROWS_AS(pair_from_json(wrong_pattern, v), Error);
  auto bad_tokens = good;
  bad_tokens["query_tokens"] = {4, 8};
  CHECK_THROWS(pair_from_json(bad_tokens, v));
  CHECK(pair_to_json(pair_from_json(good, v), v) == good);
}
