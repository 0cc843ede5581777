#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dark/common.hpp"

namespace dark {

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct NamedTriple {
  std::string head;
  std::string relation;
  std::string tail;

  friend auto operator<=>(const NamedTriple&, const NamedTriple&) = default;
};

/// Reads `head \t relation \t tail` lines. Blank lines are skipped, duplicates
/// are kept. Throws ParseError (1-based line number) on a malformed line and
/// Error on an empty input.
std::vector<NamedTriple> parse_triples(std::istream& in, std::string_view source = "<stream>");
std::vector<NamedTriple> load_triples(const std::filesystem::path& path);

/// Dense id <-> name table. Ids follow lexicographic name order.
class NameTable {
 public:
  NameTable() = default;
  static NameTable from_names(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::int32_t id) const;
  std::optional<std::int32_t> find(std::string_view name) const;
  std::int32_t id_of(std::string_view name) const;
  std::span<const std::string> names() const noexcept { return names_; }

  friend bool operator==(const NameTable&, const NameTable&) = default;

 private:
  std::vector<std::string> names_;
};

/// Immutable triple store with CSR adjacency in both directions.
class KGraph {
 public:
  KGraph() = default;
  /// Deduplicates `triples`; every id must be in range.
  KGraph(std::size_t num_entities, std::size_t num_relations, std::vector<Triple> triples);

  std::size_t num_entities() const noexcept { return num_entities_; }
  std::size_t num_relations() const noexcept { return num_relations_; }
  std::size_t num_triples() const noexcept { return triples_.size(); }

  /// Sorted by (head, relation, tail).
  std::span<const Triple> triples() const noexcept { return triples_; }

  /// Sorted tails t with (head, rel, t). Throws on out-of-range ids.
  std::span<const EntityId> neighbors(EntityId head, RelationId rel) const;
  /// Sorted heads h with (h, rel, tail).
  std::span<const EntityId> predecessors(EntityId tail, RelationId rel) const;
  bool contains(const Triple& t) const;

  /// Entities with at least one outgoing `rel` edge, ascending.
  std::span<const EntityId> heads_of(RelationId rel) const;

  /// FNV-1a over the sorted triple list and the vocabulary sizes.
  std::uint64_t fingerprint() const;

 private:
  struct Csr {
    std::vector<std::size_t> offsets;
    std::vector<EntityId> targets;
  };

  void check_ids(EntityId e, RelationId r) const;

  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::vector<Triple> triples_;
  Csr fwd_;
  Csr bwd_;
  std::vector<std::vector<EntityId>> heads_by_relation_;
};

enum class Split { train = 0, valid = 1, test = 2 };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

/// Nested train ⊆ valid ⊆ test graphs over one shared vocabulary.
struct SplitGraphs {
  NameTable entities;
  NameTable relations;
  KGraph train;
  KGraph valid;
  KGraph test;

  const KGraph& graph(Split s) const;
  std::size_t num_entities() const noexcept { return entities.size(); }
  std::size_t num_relations() const noexcept { return relations.size(); }
};

/// Deduplicates, interns names lexicographically, shuffles with `seed` and
/// partitions by `ratios`. Valid holds partitions 1+2, test holds all.
SplitGraphs build_split_graphs(std::span<const NamedTriple> triples, SplitRatios ratios,
                               std::uint64_t seed);

/// Writes train.tsv, valid.tsv and test.tsv (valid/test hold only their
/// incremental edges) plus vocab.tsv. Returns the written paths.
std::vector<std::filesystem::path> write_split_graphs(const SplitGraphs& graphs,
                                                      const std::filesystem::path& dir);
SplitGraphs read_split_graphs(const std::filesystem::path& dir);

/// Community-structured random graph: entities are grouped into blocks and
/// each relation maps every block onto a target block, with edges drawn
/// inside the target block plus a fraction of uniformly random noise edges.
struct SyntheticGraphSpec {
  std::size_t num_entities = 200;
  std::size_t num_relations = 4;
  std::size_t num_edges = 1500;
  std::size_t block_size = 5;
  double noise_fraction = 0.05;
};

std::vector<NamedTriple> synthetic_triples(const SyntheticGraphSpec& spec, std::uint64_t seed);

}  // namespace dark
