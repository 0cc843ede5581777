#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "dark/kg_store.hpp"
#include "dark/logic_query.hpp"
#include "dark/query_executor.hpp"
#include "dark/sequence_codec.hpp"

#include "json.hpp"

namespace dark {

struct ReasoningPair {
  Pattern pattern = Pattern::p1;
  QueryNode query;
  AnswerSet answers_train;
  AnswerSet answers_valid;
  AnswerSet answers_test;
  Split split = Split::train;

  const AnswerSet& answers(Split s) const;
  const AnswerSet& own_answers() const { return answers(split); }

  friend bool operator==(const ReasoningPair&, const ReasoningPair&) = default;
};

struct SamplerLimits {
  std::size_t max_answers = 32;
  std::size_t max_attempts = 500;
};

/// Rejection sampling of one grounded pattern on the split graph. Throws
/// Error(sampling) once `max_attempts` groundings were rejected.
ReasoningPair sample_pair(const SplitGraphs& graphs, Split split, Pattern pattern, Rng& rng,
                          const SamplerLimits& limits = {});

/// Fills in all three answer sets for `query`.
ReasoningPair make_pair(const SplitGraphs& graphs, Split split, Pattern pattern, QueryNode query);

using PatternCounts = std::map<Pattern, std::size_t>;

struct DatasetRequest {
  std::map<Split, PatternCounts> counts;
  SamplerLimits limits;
};

struct PatternTally {
  std::size_t requested = 0;
  std::size_t emitted = 0;
  std::size_t duplicates = 0;
  std::size_t failures = 0;
};

struct SplitSummary {
  std::map<Pattern, PatternTally> patterns;
  std::size_t emitted = 0;
  /// Share of pairs whose own-split answers differ from their train-graph answers.
  double unseen_fraction = 0.0;
};

struct Dataset {
  std::vector<ReasoningPair> pairs;  // grouped by split, each sorted by (pattern, tokens)
  std::map<Split, SplitSummary> summary;
  std::uint64_t seed = 0;

  std::vector<ReasoningPair> split(Split s) const;
};

/// Held-out splits are sampled first; a query already emitted for any split
/// is dropped as a duplicate, so train never repeats a valid/test query.
Dataset build_dataset(const SplitGraphs& graphs, const DatasetRequest& request, const CanvasLayout& layout,
                      std::uint64_t seed);

/// Re-executes every pair on all three graphs; returns the mismatching indices.
std::vector<std::size_t> revalidate(std::span<const ReasoningPair> pairs, const SplitGraphs& graphs);

nlohmann::json pair_to_json(const ReasoningPair& p, const Vocabulary& vocab);
ReasoningPair pair_from_json(const nlohmann::json& j, const Vocabulary& vocab);

/// Writes <split>.jsonl for every split present plus manifest.json; keys of
/// `extra` are copied into the manifest.
std::vector<std::filesystem::path> write_dataset(const Dataset& ds, const SplitGraphs& graphs,
                                                 const std::filesystem::path& dir,
                                                 const nlohmann::json& extra = nlohmann::json::object());
std::vector<ReasoningPair> read_pairs(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace dark
