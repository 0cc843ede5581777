#include "dark/query_executor.hpp"

#include <algorithm>
#include <iterator>

namespace dark {

AnswerSet make_answer_set(std::vector<EntityId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

namespace {

using Kind = QueryNode::Kind;

AnswerSet eval(const KGraph& g, const QueryNode& n);

AnswerSet set_difference(const AnswerSet& a, const AnswerSet& b) {
  AnswerSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

AnswerSet complement(const KGraph& g, const AnswerSet& a) {
  AnswerSet out;
  out.reserve(g.num_entities() - a.size());
  auto it = a.begin();
  for (EntityId e = 0; static_cast<std::size_t>(e) < g.num_entities(); ++e) {
    if (it != a.end() && *it == e) {
      ++it;
    } else {
      out.push_back(e);
    }
  }
  return out;
}

AnswerSet eval_conj(const KGraph& g, const QueryNode& n) {
  const auto& l = n.children[0];
  const auto& r = n.children[1];
  const bool neg_l = l.kind == Kind::negate;
  const bool neg_r = r.kind == Kind::negate;
  if (neg_l && neg_r) {
    // ¬a ∧ ¬b = ¬(a ∨ b); the only case needing a complement over V.
    AnswerSet a = eval(g, l.children[0]);
    AnswerSet b = eval(g, r.children[0]);
    AnswerSet u;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
    return complement(g, u);
  }
  if (neg_r) return set_difference(eval(g, l), eval(g, r.children[0]));
  if (neg_l) return set_difference(eval(g, r), eval(g, l.children[0]));
  AnswerSet a = eval(g, l);
  AnswerSet b = eval(g, r);
  AnswerSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

AnswerSet eval(const KGraph& g, const QueryNode& n) {
  switch (n.kind) {
    case Kind::anchor:
      if (n.id < 0 || static_cast<std::size_t>(n.id) >= g.num_entities()) {
        throw Error(ErrorCode::out_of_range, "anchor entity " + std::to_string(n.id) + " out of range");
      }
      return {n.id};
    case Kind::proj: {
      const AnswerSet src = eval(g, n.children.at(0));
      std::vector<char> hit(g.num_entities(), 0);
      std::size_t count = 0;
      for (EntityId u : src) {
        for (EntityId v : g.neighbors(u, n.id)) {
          if (!hit[static_cast<std::size_t>(v)]) {
            hit[static_cast<std::size_t>(v)] = 1;
            ++count;
          }
        }
      }
      AnswerSet out;
      out.reserve(count);
      for (std::size_t v = 0; v < hit.size(); ++v) {
        if (hit[v]) out.push_back(static_cast<EntityId>(v));
      }
      return out;
    }
    case Kind::conj:
      if (n.children.size() != 2) throw Error(ErrorCode::unsupported, "malformed intersection");
      return eval_conj(g, n);
    case Kind::disj: {
      if (n.children.size() != 2) throw Error(ErrorCode::unsupported, "malformed union");
      AnswerSet a = eval(g, n.children[0]);
      AnswerSet b = eval(g, n.children[1]);
      AnswerSet out;
      std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
      return out;
    }
    case Kind::negate:
      throw Error(ErrorCode::unsupported, "negation is only supported directly under an intersection");
  }
  throw Error(ErrorCode::unsupported, "unknown query node");
}

}  // namespace

AnswerSet execute(const KGraph& g, const QueryNode& q) {
  if (auto err = structural_error(q)) throw Error(ErrorCode::unsupported, *err);
  return eval(g, q);
}

double jaccard(std::span<const EntityId> a, std::span<const EntityId> b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace dark
