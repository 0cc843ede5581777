#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dark/pair_sampler.hpp"
#include "dark/reflective_sampler.hpp"
#include "json.hpp"

namespace dark {

struct PatternScore {
  std::size_t count = 0;
  double mean = 0.0;
  std::size_t parse_failures = 0;
};

struct AbductionReport {
  std::map<Pattern, PatternScore> patterns;  // patterns with at least one pair
  double average = 0.0;                      // mean of the per-pattern means
  std::size_t pairs = 0;
  std::vector<double> per_pair;              // input order
  std::size_t model_evals = 0;
};

struct RankMetrics {
  std::size_t queries = 0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

struct DeductionReport {
  RankMetrics filtered;
  RankMetrics raw;
  std::map<Pattern, RankMetrics> filtered_by_pattern;
  std::map<Pattern, RankMetrics> raw_by_pattern;
};

/// Rank of `target` among `pool_size` candidates: strictly higher scorers
/// plus the mean position among equal scorers. `target` must be in the pool.
double midrank(std::span<const double> scores, EntityId target, std::span<const EntityId> excluded);

/// Midrank under the 1/0 rule: `generated_in_pool` candidates score 1.
double binary_midrank(bool target_generated, std::size_t generated_in_pool, std::size_t pool_size);

/// Per-answer filtered and raw ranks of one generated set against `truth`.
struct QueryRanks {
  std::vector<double> filtered;
  std::vector<double> raw;
};
QueryRanks rank_answers(std::span<const EntityId> generated, std::span<const EntityId> truth,
                        std::size_t num_entities);

/// Adds one query's ranks (averaged over its answers) to a running metric.
void accumulate(RankMetrics& m, std::span<const double> ranks);
/// Divides the accumulated sums by the query count.
void finalize(RankMetrics& m);

/// Abduces a hypothesis from each pair's own answers and scores it on
/// `latent` against those answers. Pair i samples with seed derive_seed(seed, i).
AbductionReport score_abduction(const SamplingContext& ctx, std::span<const ReasoningPair> pairs,
                                const ReflectiveConfig& cfg, const KGraph& latent, std::uint64_t seed,
                                std::size_t threads = 1);

/// Same scoring for hypotheses drawn uniformly: the pair's pattern grounded
/// with uniform relations and anchor entities.
AbductionReport score_random_baseline(std::span<const ReasoningPair> pairs, const KGraph& latent,
                                      std::uint64_t seed);

/// Deduces an answer set per query and ranks the test answers.
DeductionReport score_deduction(const SamplingContext& ctx, std::span<const ReasoningPair> pairs,
                                const ReflectiveConfig& cfg, std::uint64_t seed, std::size_t threads = 1);

nlohmann::json to_json(const AbductionReport& r);
nlohmann::json to_json(const RankMetrics& m);
nlohmann::json to_json(const DeductionReport& r);
std::string markdown_table(const AbductionReport& r);
std::string markdown_table(const DeductionReport& r);

}  // namespace dark
