#include "dark/sequence_codec.hpp"

namespace dark {

TokenId Vocabulary::relation_token(RelationId r) const {
  if (r < 0 || static_cast<std::size_t>(r) >= num_relations_) {
    throw Error(ErrorCode::out_of_range, "relation id " + std::to_string(r) + " out of range");
  }
  return tok::first_relation + r;
}

TokenId Vocabulary::entity_token(EntityId e) const {
  if (e < 0 || static_cast<std::size_t>(e) >= num_entities_) {
    throw Error(ErrorCode::out_of_range, "entity id " + std::to_string(e) + " out of range");
  }
  return tok::first_relation + static_cast<TokenId>(num_relations_) + e;
}

bool Vocabulary::is_relation(TokenId t) const noexcept {
  return t >= tok::first_relation && t < tok::first_relation + static_cast<TokenId>(num_relations_);
}

bool Vocabulary::is_entity(TokenId t) const noexcept {
  const TokenId first = tok::first_relation + static_cast<TokenId>(num_relations_);
  return t >= first && t < first + static_cast<TokenId>(num_entities_);
}

Vocabulary::Kind Vocabulary::kind(TokenId t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= size()) {
    throw Error(ErrorCode::out_of_range, "token " + std::to_string(t) + " out of range");
  }
  if (t < tok::op_proj) return Kind::special;
  if (t < tok::first_relation) return Kind::op;
  return is_relation(t) ? Kind::relation : Kind::entity;
}

namespace {

void emit(const QueryNode& n, const Vocabulary& v, TokenSequence& out) {
  using K = QueryNode::Kind;
  switch (n.kind) {
    case K::anchor: out.push_back(v.entity_token(n.id)); return;
    case K::proj: out.push_back(tok::op_proj); out.push_back(v.relation_token(n.id)); break;
    case K::conj: out.push_back(tok::op_and); break;
    case K::disj: out.push_back(tok::op_or); break;
    case K::negate: out.push_back(tok::op_not); break;
  }
  for (const auto& c : n.children) emit(c, v, out);
}

class PrefixParser {
 public:
  PrefixParser(std::span<const TokenId> t, const Vocabulary& v) : tokens_(t), vocab_(v) {}

  QueryNode parse(bool under_and, std::size_t level) {
    if (level > kMaxQueryDepth) fail(pos_, "query deeper than " + std::to_string(kMaxQueryDepth));
    if (pos_ >= tokens_.size()) fail(pos_, "unexpected end of query region");
    const std::size_t at = pos_;
    const TokenId t = tokens_[pos_++];
    if (vocab_.is_entity(t)) return q::anchor(vocab_.entity_of(t));
    switch (t) {
      case tok::op_proj: {
        if (pos_ >= tokens_.size()) fail(pos_, "projection missing relation");
        const TokenId r = tokens_[pos_];
        if (!vocab_.is_relation(r)) fail(pos_, "projection expects a relation token");
        ++pos_;
        return q::proj(vocab_.relation_of(r), parse(false, level + 1));
      }
      case tok::op_and: {
        QueryNode l = parse(true, level + 1);
        if (pos_ >= tokens_.size() || tokens_[pos_] == tok::eos) fail(pos_, "intersection missing right operand");
        QueryNode r = parse(true, level + 1);
        return q::conj(std::move(l), std::move(r));
      }
      case tok::op_or: {
        QueryNode l = parse(false, level + 1);
        if (pos_ >= tokens_.size() || tokens_[pos_] == tok::eos) fail(pos_, "union missing right operand");
        QueryNode r = parse(false, level + 1);
        return q::disj(std::move(l), std::move(r));
      }
      case tok::op_not:
        if (!under_and) fail(at, "negation outside an intersection");
        return q::negate(parse(false, level + 1));
      case tok::eos: fail(at, "operand expected, found EOS");
      case tok::bos: fail(at, "BOS inside query region");
      case tok::sep: fail(at, "SEP inside query region");
      case tok::mask: fail(at, "MASK inside query region");
      default: fail(at, "relation token where an operand was expected");
    }
  }

  std::size_t pos() const noexcept { return pos_; }

  [[noreturn]] static void fail(std::size_t index, const std::string& msg) {
    throw ParseError(index, "token " + std::to_string(index) + ": " + msg);
  }

 private:
  std::span<const TokenId> tokens_;
  const Vocabulary& vocab_;
  std::size_t pos_ = 0;
};

}  // namespace

TokenSequence query_prefix(const QueryNode& q, const Vocabulary& vocab) {
  TokenSequence out;
  emit(q, vocab, out);
  return out;
}

TokenSequence encode_query(const QueryNode& q, const Vocabulary& vocab, std::size_t query_len) {
  TokenSequence out = query_prefix(q, vocab);
  if (out.size() > query_len) {
    throw Error(ErrorCode::invalid_argument, "query too long: prefix length " + std::to_string(out.size()) +
                                                 " exceeds " + std::to_string(query_len));
  }
  out.resize(query_len, tok::eos);
  return out;
}

QueryDecode try_decode_query(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  QueryDecode out;
  try {
    PrefixParser parser(tokens, vocab);
    QueryNode node = parser.parse(false, 1);
    for (std::size_t i = parser.pos(); i < tokens.size(); ++i) {
      if (tokens[i] != tok::eos) PrefixParser::fail(i, "trailing tokens after a complete query");
    }
    out.query = std::move(node);
  } catch (const ParseError& e) {
    out.error_index = e.position();
    out.error = e.what();
  }
  return out;
}

QueryNode decode_query(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  QueryDecode d = try_decode_query(tokens, vocab);
  if (!d.ok()) throw ParseError(d.error_index, d.error);
  return std::move(*d.query);
}

TokenSequence encode_answers(std::span<const EntityId> answers, const Vocabulary& vocab, std::size_t obs_len) {
  const AnswerSet sorted = make_answer_set({answers.begin(), answers.end()});
  if (sorted.size() + 1 > obs_len) {
    throw Error(ErrorCode::invalid_argument, "too many answers: " + std::to_string(sorted.size()) + " exceeds " +
                                                 std::to_string(obs_len - 1));
  }
  TokenSequence out;
  out.reserve(obs_len);
  for (EntityId e : sorted) out.push_back(vocab.entity_token(e));
  out.resize(obs_len, tok::eos);
  return out;
}

AnswerDecode decode_answers(std::span<const TokenId> region, const Vocabulary& vocab) {
  AnswerDecode out;
  std::vector<EntityId> ids;
  for (TokenId t : region) {
    if (t == tok::eos) break;
    if (!vocab.is_entity(t)) {
      out.non_entity = true;
      continue;
    }
    const EntityId e = vocab.entity_of(t);
    if (!ids.empty() && e <= ids.back()) out.unsorted = true;
    ids.push_back(e);
  }
  out.answers = make_answer_set(std::move(ids));
  return out;
}

TokenSequence encode_pair(const QueryNode& q, std::span<const EntityId> answers, const Vocabulary& vocab,
                          const CanvasLayout& layout) {
  TokenSequence out;
  out.reserve(layout.length());
  out.push_back(tok::bos);
  const auto qt = encode_query(q, vocab, layout.query_len);
  out.insert(out.end(), qt.begin(), qt.end());
  out.push_back(tok::sep);
  const auto ot = encode_answers(answers, vocab, layout.obs_len);
  out.insert(out.end(), ot.begin(), ot.end());
  return out;
}

std::span<const TokenId> query_region(std::span<const TokenId> canvas, const CanvasLayout& layout) {
  return canvas.subspan(layout.query_begin(), layout.query_len);
}

std::span<const TokenId> obs_region(std::span<const TokenId> canvas, const CanvasLayout& layout) {
  return canvas.subspan(layout.obs_begin(), layout.obs_len);
}

}  // namespace dark
