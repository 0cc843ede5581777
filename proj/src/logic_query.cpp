#include "dark/logic_query.hpp"

#include <algorithm>

namespace dark {

namespace q {

QueryNode anchor(EntityId e) { return {QueryNode::Kind::anchor, e, {}}; }

QueryNode proj(RelationId r, QueryNode child) {
  QueryNode n{QueryNode::Kind::proj, r, {}};
  n.children.push_back(std::move(child));
  return n;
}

QueryNode conj(QueryNode left, QueryNode right) {
  QueryNode n{QueryNode::Kind::conj, 0, {}};
  n.children.push_back(std::move(left));
  n.children.push_back(std::move(right));
  return n;
}

QueryNode disj(QueryNode left, QueryNode right) {
  QueryNode n{QueryNode::Kind::disj, 0, {}};
  n.children.push_back(std::move(left));
  n.children.push_back(std::move(right));
  return n;
}

QueryNode negate(QueryNode child) {
  QueryNode n{QueryNode::Kind::negate, 0, {}};
  n.children.push_back(std::move(child));
  return n;
}

}  // namespace q

std::size_t depth(const QueryNode& node) {
  std::size_t d = 0;
  for (const auto& c : node.children) d = std::max(d, depth(c));
  return d + 1;
}

namespace {

std::size_t expected_children(QueryNode::Kind k) {
  switch (k) {
    case QueryNode::Kind::anchor: return 0;
    case QueryNode::Kind::proj:
    case QueryNode::Kind::negate: return 1;
    case QueryNode::Kind::conj:
    case QueryNode::Kind::disj: return 2;
  }
  return 0;
}

std::optional<std::string> check(const QueryNode& n, bool parent_is_and) {
  if (n.children.size() != expected_children(n.kind)) return "wrong child count in " + render(n);
  if (n.kind == QueryNode::Kind::negate && !parent_is_and) return "negation outside an intersection";
  for (const auto& c : n.children) {
    if (auto e = check(c, n.kind == QueryNode::Kind::conj)) return e;
  }
  return std::nullopt;
}

// Shape equality ignoring entity/relation ids.
bool same_shape(const QueryNode& a, const QueryNode& b) {
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!same_shape(a.children[i], b.children[i])) return false;
  }
  return true;
}

}  // namespace

std::optional<std::string> structural_error(const QueryNode& node) {
  if (auto e = check(node, false)) return e;
  if (depth(node) > kMaxQueryDepth) return "query deeper than " + std::to_string(kMaxQueryDepth);
  return std::nullopt;
}

std::string render(const QueryNode& n) {
  auto kids = [&](std::string_view head) {
    std::string s(head);
    s += '(';
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      if (i) s += ',';
      s += render(n.children[i]);
    }
    return s + ')';
  };
  switch (n.kind) {
    case QueryNode::Kind::anchor: return "e" + std::to_string(n.id);
    case QueryNode::Kind::proj: {
      std::string s = "P(r" + std::to_string(n.id);
      for (const auto& c : n.children) s += "," + render(c);
      return s + ")";
    }
    case QueryNode::Kind::conj: return kids("I");
    case QueryNode::Kind::disj: return kids("U");
    case QueryNode::Kind::negate: return kids("N");
  }
  return "?";
}

namespace {

constexpr std::array<std::string_view, 13> kTags = {"1p", "2p", "2i",  "3i",  "ip",  "pi", "2u",
                                                    "up", "2in", "3in", "pni", "pin", "inp"};
constexpr std::array<PatternArity, 13> kArity = {{{1, 1}, {1, 2}, {2, 2}, {3, 3}, {2, 3}, {2, 3}, {2, 2},
                                                  {2, 3}, {2, 2}, {3, 3}, {2, 3}, {2, 3}, {2, 3}}};

}  // namespace

std::string_view to_string(Pattern p) { return kTags[static_cast<std::size_t>(p)]; }

Pattern parse_pattern(std::string_view tag) {
  for (std::size_t i = 0; i < kTags.size(); ++i) {
    if (kTags[i] == tag) return static_cast<Pattern>(i);
  }
  throw Error(ErrorCode::invalid_argument, "unknown pattern '" + std::string(tag) + "'");
}

bool has_negation(Pattern p) {
  return p == Pattern::in2 || p == Pattern::in3 || p == Pattern::pni || p == Pattern::pin || p == Pattern::inp;
}

PatternArity arity(Pattern p) { return kArity[static_cast<std::size_t>(p)]; }

QueryNode instantiate_pattern(Pattern p, std::span<const EntityId> a, std::span<const RelationId> r) {
  const auto ar = arity(p);
  if (a.size() != ar.anchors || r.size() != ar.relations) {
    throw Error(ErrorCode::invalid_argument, "pattern " + std::string(to_string(p)) + " expects " +
                                                 std::to_string(ar.anchors) + " anchors and " +
                                                 std::to_string(ar.relations) + " relations, got " +
                                                 std::to_string(a.size()) + "/" + std::to_string(r.size()));
  }
  using namespace q;
  auto P = [](RelationId rel, QueryNode c) { return proj(rel, std::move(c)); };
  switch (p) {
    case Pattern::p1: return P(r[0], anchor(a[0]));
    case Pattern::p2: return P(r[1], P(r[0], anchor(a[0])));
    case Pattern::i2: return conj(P(r[0], anchor(a[0])), P(r[1], anchor(a[1])));
    case Pattern::i3: return conj(P(r[0], anchor(a[0])), conj(P(r[1], anchor(a[1])), P(r[2], anchor(a[2]))));
    case Pattern::ip: return P(r[2], conj(P(r[0], anchor(a[0])), P(r[1], anchor(a[1]))));
    case Pattern::pi: return conj(P(r[1], P(r[0], anchor(a[0]))), P(r[2], anchor(a[1])));
    case Pattern::u2: return disj(P(r[0], anchor(a[0])), P(r[1], anchor(a[1])));
    case Pattern::up: return P(r[2], disj(P(r[0], anchor(a[0])), P(r[1], anchor(a[1]))));
    case Pattern::in2: return conj(P(r[0], anchor(a[0])), negate(P(r[1], anchor(a[1]))));
    case Pattern::in3:
      return conj(P(r[0], anchor(a[0])), conj(P(r[1], anchor(a[1])), negate(P(r[2], anchor(a[2])))));
    case Pattern::inp: return P(r[2], conj(P(r[0], anchor(a[0])), negate(P(r[1], anchor(a[1])))));
    case Pattern::pin: return conj(P(r[1], P(r[0], anchor(a[0]))), negate(P(r[2], anchor(a[1]))));
    case Pattern::pni: return conj(negate(P(r[1], P(r[0], anchor(a[0])))), P(r[2], anchor(a[1])));
  }
  throw Error(ErrorCode::invalid_argument, "bad pattern");
}

std::optional<Pattern> classify_pattern(const QueryNode& node) {
  if (structural_error(node)) return std::nullopt;
  static const std::vector<QueryNode> shapes = [] {
    std::vector<QueryNode> out;
    const std::array<EntityId, 3> a{0, 0, 0};
    const std::array<RelationId, 3> r{0, 0, 0};
    for (auto p : kAllPatterns) {
      const auto ar = arity(p);
      out.push_back(instantiate_pattern(p, std::span(a).first(ar.anchors), std::span(r).first(ar.relations)));
    }
    return out;
  }();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (same_shape(node, shapes[i])) return kAllPatterns[i];
  }
  return std::nullopt;
}

}  // namespace dark
