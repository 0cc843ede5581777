#pragma once

#include <span>
#include <vector>

#include "dark/kg_store.hpp"
#include "dark/logic_query.hpp"

namespace dark {

/// Sorted, duplicate-free entity ids.
using AnswerSet = std::vector<EntityId>;

AnswerSet make_answer_set(std::vector<EntityId> ids);

/// Exact set-semantics evaluation of `q` on `g`. Negation is only accepted as
/// a direct child of an intersection; a root or nested Not elsewhere throws
/// Error(unsupported). Out-of-range ids throw Error(out_of_range).
AnswerSet execute(const KGraph& g, const QueryNode& q);

/// |a ∩ b| / |a ∪ b|, and 1 when both are empty.
double jaccard(std::span<const EntityId> a, std::span<const EntityId> b);

}  // namespace dark
