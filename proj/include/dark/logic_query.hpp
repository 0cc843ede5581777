#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dark/common.hpp"

namespace dark {

/// First-order query tree. `id` is the entity for Anchor and the relation for
/// Proj; And/Or hold two children, Proj/Not hold one.
struct QueryNode {
  enum class Kind : std::uint8_t { anchor, proj, conj, disj, negate };

  Kind kind = Kind::anchor;
  std::int32_t id = 0;
  std::vector<QueryNode> children;

  friend bool operator==(const QueryNode&, const QueryNode&) = default;
  friend auto operator<=>(const QueryNode& a, const QueryNode& b) {
    if (auto c = a.kind <=> b.kind; c != 0) return c;
    if (auto c = a.id <=> b.id; c != 0) return c;
    return std::lexicographical_compare_three_way(a.children.begin(), a.children.end(), b.children.begin(),
                                                  b.children.end());
  }
};

namespace q {
QueryNode anchor(EntityId e);
QueryNode proj(RelationId r, QueryNode child);
QueryNode conj(QueryNode left, QueryNode right);
QueryNode disj(QueryNode left, QueryNode right);
QueryNode negate(QueryNode child);
}  // namespace q

inline constexpr std::size_t kMaxQueryDepth = 8;

std::size_t depth(const QueryNode& q);

/// Checks arity, the Not-directly-under-And rule and the depth bound.
/// Returns an explanation on failure.
std::optional<std::string> structural_error(const QueryNode& q);

/// Debug rendering, e.g. `I(P(r1,e2),N(P(r1,e1)))`.
std::string render(const QueryNode& q);

enum class Pattern : std::uint8_t { p1, p2, i2, i3, ip, pi, u2, up, in2, in3, pni, pin, inp };

inline constexpr std::array<Pattern, 13> kAllPatterns = {
    Pattern::p1, Pattern::p2, Pattern::i2,  Pattern::i3,  Pattern::ip,  Pattern::pi,  Pattern::u2,
    Pattern::up, Pattern::in2, Pattern::in3, Pattern::pni, Pattern::pin, Pattern::inp};

std::string_view to_string(Pattern p);
Pattern parse_pattern(std::string_view tag);
bool has_negation(Pattern p);

struct PatternArity {
  std::size_t anchors;
  std::size_t relations;
};
PatternArity arity(Pattern p);

/// Builds the canonical tree of `p`. Throws on an arity mismatch.
QueryNode instantiate_pattern(Pattern p, std::span<const EntityId> anchors, std::span<const RelationId> rels);

/// The pattern whose canonical shape `q` has, if any.
std::optional<Pattern> classify_pattern(const QueryNode& q);

}  // namespace dark
