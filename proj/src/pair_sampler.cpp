#include "dark/pair_sampler.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

namespace dark {

const AnswerSet& ReasoningPair::answers(Split s) const {
  switch (s) {
    case Split::train: return answers_train;
    case Split::valid: return answers_valid;
    case Split::test: return answers_test;
  }
  throw Error(ErrorCode::invalid_argument, "bad split");
}

ReasoningPair make_pair(const SplitGraphs& graphs, Split split, Pattern pattern, QueryNode query) {
  ReasoningPair p;
  p.pattern = pattern;
  p.split = split;
  p.answers_train = execute(graphs.train, query);
  p.answers_valid = execute(graphs.valid, query);
  p.answers_test = execute(graphs.test, query);
  p.query = std::move(query);
  return p;
}

ReasoningPair sample_pair(const SplitGraphs& graphs, Split split, Pattern pattern, Rng& rng,
                          const SamplerLimits& limits) {
  const KGraph& g = graphs.graph(split);
  std::vector<RelationId> live;
  for (RelationId r = 0; static_cast<std::size_t>(r) < g.num_relations(); ++r) {
    if (!g.heads_of(r).empty()) live.push_back(r);
  }
  if (live.empty()) throw Error(ErrorCode::sampling, "split graph has no edges");

  const auto ar = arity(pattern);
  std::vector<EntityId> anchors(ar.anchors);
  std::vector<RelationId> rels(ar.relations);
  // Relations consumed directly by an anchor, in template order.
  auto anchored_relation = [&](std::size_t anchor_index) -> std::size_t {
    switch (pattern) {
      case Pattern::p1:
      case Pattern::p2:
      case Pattern::i2:
      case Pattern::i3:
      case Pattern::ip:
      case Pattern::u2:
      case Pattern::up:
      case Pattern::in2:
      case Pattern::in3:
      case Pattern::inp: return anchor_index;
      case Pattern::pi:
      case Pattern::pin:
      case Pattern::pni: return anchor_index == 0 ? 0 : 2;
    }
    return anchor_index;
  };

  for (std::size_t attempt = 0; attempt < limits.max_attempts; ++attempt) {
    for (auto& r : rels) r = live[uniform_index(rng, live.size())];
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const auto heads = g.heads_of(rels[anchored_relation(i)]);
      anchors[i] = heads[uniform_index(rng, heads.size())];
    }
    QueryNode query = instantiate_pattern(pattern, anchors, rels);
    const AnswerSet own = execute(g, query);
    if (own.empty() || own.size() > limits.max_answers) continue;
    return make_pair(graphs, split, pattern, std::move(query));
  }
  throw Error(ErrorCode::sampling, "no valid " + std::string(to_string(pattern)) + " grounding on " +
                                       std::string(to_string(split)) + " after " +
                                       std::to_string(limits.max_attempts) + " attempts");
}

std::vector<ReasoningPair> Dataset::split(Split s) const {
  std::vector<ReasoningPair> out;
  for (const auto& p : pairs) {
    if (p.split == s) out.push_back(p);
  }
  return out;
}

Dataset build_dataset(const SplitGraphs& graphs, const DatasetRequest& request, const CanvasLayout& layout,
                      std::uint64_t seed) {
  const Vocabulary vocab(graphs.num_relations(), graphs.num_entities());
  SamplerLimits limits = request.limits;
  limits.max_answers = std::min(limits.max_answers, layout.max_answers());

  Dataset ds;
  ds.seed = seed;
  std::set<TokenSequence> seen;
  for (Split split : {Split::test, Split::valid, Split::train}) {
    const auto it = request.counts.find(split);
    if (it == request.counts.end()) continue;
    SplitSummary& summary = ds.summary[split];
    std::vector<std::pair<TokenSequence, ReasoningPair>> keyed;
    for (const auto& [pattern, count] : it->second) {
      if (count == 0) throw Error(ErrorCode::invalid_argument, "pattern counts must be positive");
      PatternTally& tally = summary.patterns[pattern];
      tally.requested = count;
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(split) * 64 + static_cast<std::uint64_t>(pattern)));
      for (std::size_t i = 0; i < count; ++i) {
        try {
          ReasoningPair p = sample_pair(graphs, split, pattern, rng, limits);
          TokenSequence key = query_prefix(p.query, vocab);
          if (key.size() > layout.query_len) {
            ++tally.failures;
            continue;
          }
          if (!seen.insert(key).second) {
            ++tally.duplicates;
            continue;
          }
          ++tally.emitted;
          keyed.emplace_back(std::move(key), std::move(p));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::sampling) throw;
          ++tally.failures;
          std::fprintf(stderr, "sampling failure: %s\n", e.what());
        }
      }
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
      if (a.second.pattern != b.second.pattern) return a.second.pattern < b.second.pattern;
      return a.first < b.first;
    });
    std::size_t unseen = 0;
    for (auto& [key, p] : keyed) {
      if (p.own_answers() != p.answers_train) ++unseen;
      ds.pairs.push_back(std::move(p));
    }
    summary.emitted = keyed.size();
    summary.unseen_fraction = keyed.empty() ? 0.0 : static_cast<double>(unseen) / static_cast<double>(keyed.size());
  }
  // Present splits in train, valid, test order.
  std::stable_sort(ds.pairs.begin(), ds.pairs.end(),
                   [](const ReasoningPair& a, const ReasoningPair& b) { return a.split < b.split; });
  return ds;
}

std::vector<std::size_t> revalidate(std::span<const ReasoningPair> pairs, const SplitGraphs& graphs) {
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (execute(graphs.train, p.query) != p.answers_train || execute(graphs.valid, p.query) != p.answers_valid ||
        execute(graphs.test, p.query) != p.answers_test) {
      bad.push_back(i);
    }
  }
  return bad;
}

nlohmann::json pair_to_json(const ReasoningPair& p, const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["split"] = to_string(p.split);
  j["pattern"] = to_string(p.pattern);
  j["query_tokens"] = query_prefix(p.query, vocab);
  j["answers_train"] = p.answers_train;
  j["answers_valid"] = p.answers_valid;
  j["answers_test"] = p.answers_test;
  return nlohmann::json(j);
}

ReasoningPair pair_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  try {
    ReasoningPair p;
    p.split = parse_split(j.at("split").get<std::string>());
    p.pattern = parse_pattern(j.at("pattern").get<std::string>());
    p.query = decode_query(j.at("query_tokens").get<std::vector<TokenId>>(), vocab);
    p.answers_train = make_answer_set(j.at("answers_train").get<std::vector<EntityId>>());
    p.answers_valid = make_answer_set(j.at("answers_valid").get<std::vector<EntityId>>());
    p.answers_test = make_answer_set(j.at("answers_test").get<std::vector<EntityId>>());
    if (classify_pattern(p.query) != p.pattern) {
      throw Error(ErrorCode::format, "query shape does not match pattern " + std::string(to_string(p.pattern)));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("bad pair record: ") + e.what());
  }
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<std::filesystem::path> write_dataset(const Dataset& ds, const SplitGraphs& graphs,
                                                 const std::filesystem::path& dir, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  const Vocabulary vocab(graphs.num_relations(), graphs.num_entities());
  std::vector<std::filesystem::path> written;
  for (const auto& [split, summary] : ds.summary) {
    const auto path = dir / (std::string(to_string(split)) + ".jsonl");
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    for (const auto& p : ds.pairs) {
      if (p.split == split) out << pair_to_json(p, vocab).dump() << '\n';
    }
    if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
    written.push_back(path);
  }

  nlohmann::ordered_json m;
  m["seed"] = ds.seed;
  m["graphs"] = {{"train", hex64(graphs.train.fingerprint())},
                 {"valid", hex64(graphs.valid.fingerprint())},
                 {"test", hex64(graphs.test.fingerprint())}};
  m["num_entities"] = graphs.num_entities();
  m["num_relations"] = graphs.num_relations();
  for (const auto& [split, summary] : ds.summary) {
    auto& s = m["splits"][std::string(to_string(split))];
    s["emitted"] = summary.emitted;
    s["unseen_fraction"] = summary.unseen_fraction;
    for (const auto& [pattern, t] : summary.patterns) {
      s["patterns"][std::string(to_string(pattern))] = {{"requested", t.requested},
                                                         {"emitted", t.emitted},
                                                         {"duplicates", t.duplicates},
                                                         {"failures", t.failures}};
    }
  }
  for (const auto& [key, value] : extra.items()) m[key] = value;
  const auto manifest = dir / "manifest.json";
  std::ofstream mo(manifest);
  if (!mo) throw Error(ErrorCode::io, "cannot write " + manifest.string());
  mo << m.dump(2) << '\n';
  written.push_back(manifest);
  return written;
}

std::vector<ReasoningPair> read_pairs(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::vector<ReasoningPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(pair_from_json(j, vocab));
  }
  return out;
}

}  // namespace dark
