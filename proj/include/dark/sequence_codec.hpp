#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dark/logic_query.hpp"
#include "dark/query_executor.hpp"

namespace dark {

namespace tok {
inline constexpr TokenId bos = 0;
inline constexpr TokenId eos = 1;  // doubles as padding
inline constexpr TokenId sep = 2;
inline constexpr TokenId mask = 3;
inline constexpr TokenId op_proj = 4;
inline constexpr TokenId op_and = 5;
inline constexpr TokenId op_or = 6;
inline constexpr TokenId op_not = 7;
inline constexpr TokenId first_relation = 8;
}  // namespace tok

/// Token id space: 8 specials/operators, then relations, then entities.
class Vocabulary {
 public:
  enum class Kind { special, op, relation, entity };

  Vocabulary() = default;
  Vocabulary(std::size_t num_relations, std::size_t num_entities)
      : num_relations_(num_relations), num_entities_(num_entities) {}

  std::size_t size() const noexcept { return 8 + num_relations_ + num_entities_; }
  std::size_t num_relations() const noexcept { return num_relations_; }
  std::size_t num_entities() const noexcept { return num_entities_; }

  TokenId relation_token(RelationId r) const;
  TokenId entity_token(EntityId e) const;
  bool is_relation(TokenId t) const noexcept;
  bool is_entity(TokenId t) const noexcept;
  RelationId relation_of(TokenId t) const noexcept { return t - tok::first_relation; }
  EntityId entity_of(TokenId t) const noexcept {
    return t - tok::first_relation - static_cast<TokenId>(num_relations_);
  }
  Kind kind(TokenId t) const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::size_t num_relations_ = 0;
  std::size_t num_entities_ = 0;
};

/// Fixed canvas: [BOS] query-region [SEP] observation-region.
struct CanvasLayout {
  std::size_t query_len = 15;
  std::size_t obs_len = 33;

  std::size_t length() const noexcept { return query_len + obs_len + 2; }
  std::size_t query_begin() const noexcept { return 1; }
  std::size_t query_end() const noexcept { return 1 + query_len; }
  std::size_t sep_index() const noexcept { return 1 + query_len; }
  std::size_t obs_begin() const noexcept { return 2 + query_len; }
  std::size_t obs_end() const noexcept { return length(); }
  std::size_t max_answers() const noexcept { return obs_len - 1; }

  friend bool operator==(const CanvasLayout&, const CanvasLayout&) = default;
};

using TokenSequence = std::vector<TokenId>;

/// Prefix serialization without padding.
TokenSequence query_prefix(const QueryNode& q, const Vocabulary& vocab);
/// Prefix serialization EOS-padded to `query_len`; throws on overflow.
TokenSequence encode_query(const QueryNode& q, const Vocabulary& vocab, std::size_t query_len);

struct QueryDecode {
  std::optional<QueryNode> query;
  std::size_t error_index = 0;
  std::string error;

  bool ok() const noexcept { return query.has_value(); }
};

/// Parses a query region. Accepts arbitrary tokens; failures name the first
/// offending index.
QueryDecode try_decode_query(std::span<const TokenId> tokens, const Vocabulary& vocab);
/// Throwing variant of try_decode_query (ParseError).
QueryNode decode_query(std::span<const TokenId> tokens, const Vocabulary& vocab);

TokenSequence encode_answers(std::span<const EntityId> answers, const Vocabulary& vocab, std::size_t obs_len);

struct AnswerDecode {
  AnswerSet answers;
  bool unsorted = false;    // entities were not strictly ascending
  bool non_entity = false;  // a non-entity, non-EOS token was skipped
};

/// Lenient: reads entity tokens up to the first EOS, dedups and re-sorts.
AnswerDecode decode_answers(std::span<const TokenId> obs_region, const Vocabulary& vocab);

TokenSequence encode_pair(const QueryNode& q, std::span<const EntityId> answers, const Vocabulary& vocab,
                          const CanvasLayout& layout);

std::span<const TokenId> query_region(std::span<const TokenId> canvas, const CanvasLayout& layout);
std::span<const TokenId> obs_region(std::span<const TokenId> canvas, const CanvasLayout& layout);

}  // namespace dark
