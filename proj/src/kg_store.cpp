#include "dark/kg_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace dark {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string zero_padded(char prefix, std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

}  // namespace

std::vector<NamedTriple> parse_triples(std::istream& in, std::string_view source) {
  std::vector<NamedTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      std::ostringstream msg;
      msg << source << ":" << line_no << ": expected 3 tab-separated fields, found " << fields.size();
      throw ParseError(line_no, msg.str());
    }
    for (const auto& f : fields) {
      if (f.empty()) {
        throw ParseError(line_no, std::string(source) + ":" + std::to_string(line_no) + ": empty field");
      }
    }
    out.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2])});
  }
  if (out.empty()) throw Error(ErrorCode::parse, std::string(source) + ": no triples");
  return out;
}

std::vector<NamedTriple> load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return parse_triples(in, path.string());
}

NameTable NameTable::from_names(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  NameTable t;
  t.names_ = std::move(names);
  return t;
}

const std::string& NameTable::name(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw Error(ErrorCode::out_of_range, "name id " + std::to_string(id) + " out of range");
  }
  return names_[static_cast<std::size_t>(id)];
}

std::optional<std::int32_t> NameTable::find(std::string_view name) const {
  const auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) return std::nullopt;
  return static_cast<std::int32_t>(it - names_.begin());
}

std::int32_t NameTable::id_of(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw Error(ErrorCode::invalid_argument, "unknown name '" + std::string(name) + "'");
}

KGraph::KGraph(std::size_t num_entities, std::size_t num_relations, std::vector<Triple> triples)
    : num_entities_(num_entities), num_relations_(num_relations), triples_(std::move(triples)) {
  for (const auto& t : triples_) {
    if (t.head < 0 || static_cast<std::size_t>(t.head) >= num_entities_ || t.tail < 0 ||
        static_cast<std::size_t>(t.tail) >= num_entities_ || t.relation < 0 ||
        static_cast<std::size_t>(t.relation) >= num_relations_) {
      throw Error(ErrorCode::out_of_range, "triple id out of range");
    }
  }
  std::sort(triples_.begin(), triples_.end());
  triples_.erase(std::unique(triples_.begin(), triples_.end()), triples_.end());

  const std::size_t keys = num_entities_ * num_relations_;
  auto build = [&](Csr& csr, bool forward) {
    csr.offsets.assign(keys + 1, 0);
    for (const auto& t : triples_) {
      const EntityId src = forward ? t.head : t.tail;
      ++csr.offsets[static_cast<std::size_t>(src) * num_relations_ + static_cast<std::size_t>(t.relation) + 1];
    }
    std::partial_sum(csr.offsets.begin(), csr.offsets.end(), csr.offsets.begin());
    csr.targets.assign(triples_.size(), 0);
    std::vector<std::size_t> fill(csr.offsets.begin(), csr.offsets.end() - 1);
    for (const auto& t : triples_) {
      const EntityId src = forward ? t.head : t.tail;
      const EntityId dst = forward ? t.tail : t.head;
      csr.targets[fill[static_cast<std::size_t>(src) * num_relations_ + static_cast<std::size_t>(t.relation)]++] = dst;
    }
    for (std::size_t k = 0; k < keys; ++k) {
      std::sort(csr.targets.begin() + static_cast<std::ptrdiff_t>(csr.offsets[k]),
                csr.targets.begin() + static_cast<std::ptrdiff_t>(csr.offsets[k + 1]));
    }
  };
  build(fwd_, true);
  build(bwd_, false);

  heads_by_relation_.assign(num_relations_, {});
  for (const auto& t : triples_) {
    auto& heads = heads_by_relation_[static_cast<std::size_t>(t.relation)];
    if (heads.empty() || heads.back() != t.head) heads.push_back(t.head);
  }
}

void KGraph::check_ids(EntityId e, RelationId r) const {
  if (e < 0 || static_cast<std::size_t>(e) >= num_entities_) {
    throw Error(ErrorCode::out_of_range, "entity id " + std::to_string(e) + " out of range");
  }
  if (r < 0 || static_cast<std::size_t>(r) >= num_relations_) {
    throw Error(ErrorCode::out_of_range, "relation id " + std::to_string(r) + " out of range");
  }
}

std::span<const EntityId> KGraph::neighbors(EntityId head, RelationId rel) const {
  check_ids(head, rel);
  const std::size_t k = static_cast<std::size_t>(head) * num_relations_ + static_cast<std::size_t>(rel);
  return std::span<const EntityId>(fwd_.targets).subspan(fwd_.offsets[k], fwd_.offsets[k + 1] - fwd_.offsets[k]);
}

std::span<const EntityId> KGraph::predecessors(EntityId tail, RelationId rel) const {
  check_ids(tail, rel);
  const std::size_t k = static_cast<std::size_t>(tail) * num_relations_ + static_cast<std::size_t>(rel);
  return std::span<const EntityId>(bwd_.targets).subspan(bwd_.offsets[k], bwd_.offsets[k + 1] - bwd_.offsets[k]);
}

bool KGraph::contains(const Triple& t) const {
  const auto tails = neighbors(t.head, t.relation);
  return std::binary_search(tails.begin(), tails.end(), t.tail);
}

std::span<const EntityId> KGraph::heads_of(RelationId rel) const {
  if (rel < 0 || static_cast<std::size_t>(rel) >= num_relations_) {
    throw Error(ErrorCode::out_of_range, "relation id " + std::to_string(rel) + " out of range");
  }
  return heads_by_relation_[static_cast<std::size_t>(rel)];
}

std::uint64_t KGraph::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(num_entities_);
  mix(num_relations_);
  for (const auto& t : triples_) {
    mix(static_cast<std::uint64_t>(t.head));
    mix(static_cast<std::uint64_t>(t.relation));
    mix(static_cast<std::uint64_t>(t.tail));
  }
  return h;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw Error(ErrorCode::invalid_argument, "unknown split '" + std::string(s) + "'");
}

const KGraph& SplitGraphs::graph(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::valid: return valid;
    case Split::test: return test;
  }
  throw Error(ErrorCode::invalid_argument, "bad split");
}

SplitGraphs build_split_graphs(std::span<const NamedTriple> triples, SplitRatios ratios,
                               std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument, "split ratios must be non-negative and sum to 1");
  }
  std::set<NamedTriple> unique(triples.begin(), triples.end());
  if (unique.size() < 3) {
    throw Error(ErrorCode::invalid_argument,
                "need at least 3 distinct triples, got " + std::to_string(unique.size()));
  }

  std::vector<std::string> entity_names, relation_names;
  for (const auto& t : unique) {
    entity_names.push_back(t.head);
    entity_names.push_back(t.tail);
    relation_names.push_back(t.relation);
  }
  SplitGraphs out;
  out.entities = NameTable::from_names(std::move(entity_names));
  out.relations = NameTable::from_names(std::move(relation_names));

  std::vector<Triple> ids;
  ids.reserve(unique.size());
  for (const auto& t : unique) {
    ids.push_back({out.entities.id_of(t.head), out.relations.id_of(t.relation), out.entities.id_of(t.tail)});
  }
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const std::size_t n = ids.size();
  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n))));
  const auto n_valid = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(ratios.valid * static_cast<double>(n))));

  const auto ne = out.entities.size();
  const auto nr = out.relations.size();
  out.train = KGraph(ne, nr, {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train)});
  out.valid = KGraph(ne, nr, {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid)});
  out.test = KGraph(ne, nr, ids);
  return out;
}

namespace {

void write_triples(const SplitGraphs& g, const std::vector<Triple>& triples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  for (const auto& t : triples) {
    out << g.entities.name(t.head) << '\t' << g.relations.name(t.relation) << '\t' << g.entities.name(t.tail) << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
}

std::vector<Triple> difference(const KGraph& big, const KGraph& small) {
  std::vector<Triple> out;
  std::set_difference(big.triples().begin(), big.triples().end(), small.triples().begin(), small.triples().end(),
                      std::back_inserter(out));
  return out;
}

}  // namespace

std::vector<std::filesystem::path> write_split_graphs(const SplitGraphs& graphs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto train_path = dir / "train.tsv";
  const auto valid_path = dir / "valid.tsv";
  const auto test_path = dir / "test.tsv";
  const auto vocab_path = dir / "vocab.tsv";
  write_triples(graphs, {graphs.train.triples().begin(), graphs.train.triples().end()}, train_path);
  write_triples(graphs, difference(graphs.valid, graphs.train), valid_path);
  write_triples(graphs, difference(graphs.test, graphs.valid), test_path);

  std::ofstream vocab(vocab_path);
  if (!vocab) throw Error(ErrorCode::io, "cannot write " + vocab_path.string());
  for (std::size_t i = 0; i < graphs.entities.size(); ++i) {
    vocab << "entity\t" << graphs.entities.names()[i] << '\t' << i << '\n';
  }
  for (std::size_t i = 0; i < graphs.relations.size(); ++i) {
    vocab << "relation\t" << graphs.relations.names()[i] << '\t' << i << '\n';
  }
  if (!vocab) throw Error(ErrorCode::io, "write failed: " + vocab_path.string());
  written = {train_path, valid_path, test_path, vocab_path};
  return written;
}

SplitGraphs read_split_graphs(const std::filesystem::path& dir) {
  const auto vocab_path = dir / "vocab.tsv";
  std::ifstream vocab(vocab_path);
  if (!vocab) throw Error(ErrorCode::io, "cannot open " + vocab_path.string());
  std::vector<std::string> entities, relations;
  std::vector<std::size_t> entity_ids, relation_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(vocab, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 3) throw ParseError(line_no, vocab_path.string() + ":" + std::to_string(line_no) + ": bad vocab line");
    const auto id = static_cast<std::size_t>(std::stoul(std::string(f[2])));
    if (f[0] == "entity") {
      entities.emplace_back(f[1]);
      entity_ids.push_back(id);
    } else if (f[0] == "relation") {
      relations.emplace_back(f[1]);
      relation_ids.push_back(id);
    } else {
      throw ParseError(line_no, vocab_path.string() + ":" + std::to_string(line_no) + ": unknown vocab kind");
    }
  }
  SplitGraphs g;
  g.entities = NameTable::from_names(entities);
  g.relations = NameTable::from_names(relations);
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (static_cast<std::size_t>(g.entities.id_of(entities[i])) != entity_ids[i]) {
      throw Error(ErrorCode::format, "vocab.tsv entity ids are not lexicographic");
    }
  }
  for (std::size_t i = 0; i < relations.size(); ++i) {
    if (static_cast<std::size_t>(g.relations.id_of(relations[i])) != relation_ids[i]) {
      throw Error(ErrorCode::format, "vocab.tsv relation ids are not lexicographic");
    }
  }

  auto intern = [&](const std::filesystem::path& p) {
    std::vector<Triple> out;
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::io, "cannot open " + p.string());
    if (in.peek() == std::ifstream::traits_type::eof()) return out;
    for (const auto& t : parse_triples(in, p.string())) {
      out.push_back({g.entities.id_of(t.head), g.relations.id_of(t.relation), g.entities.id_of(t.tail)});
    }
    return out;
  };
  auto train = intern(dir / "train.tsv");
  auto valid = train;
  for (const auto& t : intern(dir / "valid.tsv")) valid.push_back(t);
  auto test = valid;
  for (const auto& t : intern(dir / "test.tsv")) test.push_back(t);
  const auto ne = g.entities.size();
  const auto nr = g.relations.size();
  g.train = KGraph(ne, nr, std::move(train));
  g.valid = KGraph(ne, nr, std::move(valid));
  g.test = KGraph(ne, nr, std::move(test));
  return g;
}

std::vector<NamedTriple> synthetic_triples(const SyntheticGraphSpec& spec, std::uint64_t seed) {
  if (spec.num_entities < 2 || spec.num_relations < 1 || spec.block_size < 1 ||
      spec.block_size > spec.num_entities || spec.noise_fraction < 0.0 || spec.noise_fraction > 1.0) {
    throw Error(ErrorCode::invalid_argument, "invalid synthetic graph parameters");
  }
  const std::size_t num_blocks = (spec.num_entities + spec.block_size - 1) / spec.block_size;
  const std::size_t max_structured = spec.num_entities * spec.num_relations * spec.block_size;
  if (spec.num_edges > max_structured) {
    throw Error(ErrorCode::invalid_argument, "too many edges requested for the block structure");
  }

  Rng rng(seed);
  std::vector<EntityId> order(spec.num_entities);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> block_of(spec.num_entities);
  std::vector<std::vector<EntityId>> members(num_blocks);
  for (std::size_t i = 0; i < order.size(); ++i) {
    block_of[static_cast<std::size_t>(order[i])] = i / spec.block_size;
    members[i / spec.block_size].push_back(order[i]);
  }
  std::vector<std::vector<std::size_t>> target(spec.num_relations, std::vector<std::size_t>(num_blocks));
  for (auto& perm : target) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
  }

  std::set<Triple> edges;
  const auto noise = static_cast<std::size_t>(std::llround(spec.noise_fraction * static_cast<double>(spec.num_edges)));
  while (edges.size() < spec.num_edges - noise) {
    const auto h = uniform_index<EntityId>(rng, static_cast<EntityId>(spec.num_entities));
    const auto r = uniform_index<RelationId>(rng, static_cast<RelationId>(spec.num_relations));
    const auto& block = members[target[static_cast<std::size_t>(r)][block_of[static_cast<std::size_t>(h)]]];
    edges.insert({h, r, block[uniform_index<std::size_t>(rng, block.size())]});
  }
  const std::size_t total = spec.num_entities * spec.num_relations * spec.num_entities;
  while (edges.size() < std::min(spec.num_edges, total)) {
    edges.insert({uniform_index<EntityId>(rng, static_cast<EntityId>(spec.num_entities)),
                  uniform_index<RelationId>(rng, static_cast<RelationId>(spec.num_relations)),
                  uniform_index<EntityId>(rng, static_cast<EntityId>(spec.num_entities))});
  }

  const std::size_t ew = std::to_string(spec.num_entities - 1).size();
  const std::size_t rw = std::to_string(spec.num_relations - 1).size();
  std::vector<NamedTriple> out;
  out.reserve(edges.size());
  for (const auto& t : edges) {
    out.push_back({zero_padded('e', static_cast<std::size_t>(t.head), ew),
                   zero_padded('r', static_cast<std::size_t>(t.relation), rw),
                   zero_padded('e', static_cast<std::size_t>(t.tail), ew)});
  }
  return out;
}

}  // namespace dark
