#include "dark/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dark {

double midrank(std::span<const double> scores, EntityId target, std::span<const EntityId> excluded) {
  if (target < 0 || static_cast<std::size_t>(target) >= scores.size()) {
    throw Error(ErrorCode::out_of_range, "midrank: target outside the score vector");
  }
  const double st = scores[static_cast<std::size_t>(target)];
  std::size_t higher = 0, equal = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    const auto id = static_cast<EntityId>(e);
    if (id != target && std::find(excluded.begin(), excluded.end(), id) != excluded.end()) continue;
    if (scores[e] > st) ++higher;
    else if (scores[e] == st) ++equal;
  }
  return static_cast<double>(higher) + (static_cast<double>(equal) + 1.0) / 2.0;
}

double binary_midrank(bool target_generated, std::size_t generated_in_pool, std::size_t pool_size) {
  const auto c = static_cast<double>(generated_in_pool);
  if (target_generated) return (c + 1.0) / 2.0;
  return c + (static_cast<double>(pool_size) - c + 1.0) / 2.0;
}

QueryRanks rank_answers(std::span<const EntityId> generated, std::span<const EntityId> truth,
                        std::size_t num_entities) {
  const AnswerSet gen = make_answer_set({generated.begin(), generated.end()});
  const AnswerSet tru = make_answer_set({truth.begin(), truth.end()});
  std::vector<EntityId> gen_truth;
  std::set_intersection(gen.begin(), gen.end(), tru.begin(), tru.end(), std::back_inserter(gen_truth));
  QueryRanks out;
  for (EntityId a : tru) {
    const bool hit = std::binary_search(gen.begin(), gen.end(), a);
    out.raw.push_back(binary_midrank(hit, gen.size(), num_entities));
    // Filtered pool: every entity except the other true answers.
    const std::size_t pool = num_entities - (tru.size() - 1);
    const std::size_t gen_in_pool = gen.size() - gen_truth.size() + (hit ? 1 : 0);
    out.filtered.push_back(binary_midrank(hit, gen_in_pool, pool));
  }
  return out;
}

void accumulate(RankMetrics& m, std::span<const double> ranks) {
  if (ranks.empty()) return;
  double rr = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
  for (double r : ranks) {
    rr += 1.0 / r;
    h1 += r <= 1.0 ? 1.0 : 0.0;
    h3 += r <= 3.0 ? 1.0 : 0.0;
    h10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(ranks.size());
  m.mrr += rr / n;
  m.hits1 += h1 / n;
  m.hits3 += h3 / n;
  m.hits10 += h10 / n;
  ++m.queries;
}

void finalize(RankMetrics& m) {
  if (m.queries == 0) return;
  const auto n = static_cast<double>(m.queries);
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
}

namespace {

void aggregate(AbductionReport& r, std::span<const ReasoningPair> pairs, std::span<const double> scores,
               std::span<const std::uint8_t> failed) {
  r.pairs = pairs.size();
  r.per_pair.assign(scores.begin(), scores.end());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& ps = r.patterns[pairs[i].pattern];
    ++ps.count;
    ps.mean += scores[i];
    if (failed[i]) ++ps.parse_failures;
  }
  for (auto& [p, ps] : r.patterns) {
    ps.mean /= static_cast<double>(ps.count);
    r.average += ps.mean;
  }
  if (!r.patterns.empty()) r.average /= static_cast<double>(r.patterns.size());
}

}  // namespace

AbductionReport score_abduction(const SamplingContext& ctx, std::span<const ReasoningPair> pairs,
                                const ReflectiveConfig& cfg, const KGraph& latent, std::uint64_t seed,
                                std::size_t threads) {
  cfg.validate();
  std::vector<double> scores(pairs.size(), 0.0);
  std::vector<std::uint8_t> failed(pairs.size(), 0);
  std::vector<std::size_t> evals(pairs.size(), 0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    const AnswerSet& obs = pairs[i].own_answers();
    const AbductionResult res = abduce(ctx, obs, cfg, rng);
    evals[i] = res.stats.model_evals;
    bool executed = false;
    if (res.query.ok()) {
      try {
        scores[i] = jaccard(execute(latent, *res.query.query), obs);
        executed = true;
      } catch (const Error&) {
        executed = false;
      }
    }
    failed[i] = executed ? 0 : 1;
  });
  AbductionReport r;
  aggregate(r, pairs, scores, failed);
  for (std::size_t e : evals) r.model_evals += e;
  return r;
}

AbductionReport score_random_baseline(std::span<const ReasoningPair> pairs, const KGraph& latent,
                                      std::uint64_t seed) {
  std::vector<double> scores(pairs.size(), 0.0);
  std::vector<std::uint8_t> failed(pairs.size(), 0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    const PatternArity a = arity(pairs[i].pattern);
    std::vector<EntityId> anchors(a.anchors);
    std::vector<RelationId> rels(a.relations);
    for (auto& e : anchors) e = uniform_index<EntityId>(rng, static_cast<EntityId>(latent.num_entities()));
    for (auto& r : rels) r = uniform_index<RelationId>(rng, static_cast<RelationId>(latent.num_relations()));
    const QueryNode q = instantiate_pattern(pairs[i].pattern, anchors, rels);
    scores[i] = jaccard(execute(latent, q), pairs[i].own_answers());
  }
  AbductionReport r;
  aggregate(r, pairs, scores, failed);
  return r;
}

DeductionReport score_deduction(const SamplingContext& ctx, std::span<const ReasoningPair> pairs,
                                const ReflectiveConfig& cfg, std::uint64_t seed, std::size_t threads) {
  std::vector<QueryRanks> ranks(pairs.size());
  const std::size_t ne = ctx.vocab.num_entities();
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    const AnswerSet gen = deduce(ctx, pairs[i].query, cfg, rng);
    ranks[i] = rank_answers(gen, pairs[i].answers_test, ne);
  });
  DeductionReport r;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    accumulate(r.filtered, ranks[i].filtered);
    accumulate(r.raw, ranks[i].raw);
    accumulate(r.filtered_by_pattern[pairs[i].pattern], ranks[i].filtered);
    accumulate(r.raw_by_pattern[pairs[i].pattern], ranks[i].raw);
  }
  finalize(r.filtered);
  finalize(r.raw);
  for (auto& [p, m] : r.filtered_by_pattern) finalize(m);
  for (auto& [p, m] : r.raw_by_pattern) finalize(m);
  return r;
}

nlohmann::json to_json(const AbductionReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (Pattern p : kAllPatterns) {
    nlohmann::json row{{"pattern", std::string(to_string(p))}};
    if (auto it = r.patterns.find(p); it != r.patterns.end()) {
      row["count"] = it->second.count;
      row["jaccard"] = it->second.mean;
      row["parse_failures"] = it->second.parse_failures;
    } else {
      row["count"] = 0;
      row["jaccard"] = nullptr;
      row["parse_failures"] = 0;
    }
    rows.push_back(row);
  }
  return {{"patterns", rows}, {"average", r.average}, {"pairs", r.pairs}, {"model_evals", r.model_evals}};
}

nlohmann::json to_json(const RankMetrics& m) {
  return {{"queries", m.queries}, {"mrr", m.mrr}, {"hits@1", m.hits1}, {"hits@3", m.hits3}, {"hits@10", m.hits10}};
}

nlohmann::json to_json(const DeductionReport& r) {
  nlohmann::json by = nlohmann::json::array();
  for (Pattern p : kAllPatterns) {
    auto it = r.filtered_by_pattern.find(p);
    if (it == r.filtered_by_pattern.end()) continue;
    nlohmann::json row = to_json(it->second);
    row["pattern"] = std::string(to_string(p));
    row["raw"] = to_json(r.raw_by_pattern.at(p));
    by.push_back(row);
  }
  return {{"filtered", to_json(r.filtered)}, {"raw", to_json(r.raw)}, {"patterns", by}};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string markdown_table(const AbductionReport& r) {
  std::ostringstream head, sep, row;
  head << "|";
  sep << "|";
  row << "|";
  for (Pattern p : kAllPatterns) {
    head << ' ' << to_string(p) << " |";
    sep << "---|";
    auto it = r.patterns.find(p);
    row << ' ' << (it == r.patterns.end() ? std::string("-") : fmt(it->second.mean)) << " |";
  }
  head << " avg |";
  sep << "---|";
  row << ' ' << fmt(r.average) << " |";
  return head.str() + "\n" + sep.str() + "\n" + row.str() + "\n";
}

std::string markdown_table(const DeductionReport& r) {
  std::ostringstream out;
  out << "| ranking | MRR | Hits@1 | Hits@3 | Hits@10 |\n|---|---|---|---|---|\n";
  out << "| filtered | " << fmt(r.filtered.mrr) << " | " << fmt(r.filtered.hits1) << " | " << fmt(r.filtered.hits3)
      << " | " << fmt(r.filtered.hits10) << " |\n";
  out << "| raw | " << fmt(r.raw.mrr) << " | " << fmt(r.raw.hits1) << " | " << fmt(r.raw.hits3) << " | "
      << fmt(r.raw.hits10) << " |\n";
  if (!r.filtered_by_pattern.empty()) {
    out << "\n| pattern | MRR | Hits@1 | Hits@3 | Hits@10 |\n|---|---|---|---|---|\n";
    for (const auto& [p, m] : r.filtered_by_pattern) {
      out << "| " << to_string(p) << " | " << fmt(m.mrr) << " | " << fmt(m.hits1) << " | " << fmt(m.hits3) << " | "
          << fmt(m.hits10) << " |\n";
    }
  }
  return out.str();
}

}  // namespace dark
