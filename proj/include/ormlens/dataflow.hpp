#pragma once

#include "ormlens/afg.hpp"

#include <map>
#include <optional>
#include <set>
#include <utility>

namespace ormlens {

using SinkSet = std::set<std::pair<SinkCategory, int>>;

/// Forward closure over data edges from query node `q`. Paths end at another query
/// (QueryParam), a render/link/form (RenderedInView), a branch (BranchCondition) or a
/// global assignment (GlobalVariable). Terminals outside these categories are dropped.
SinkSet query_sinks(const Afg& afg, int q);

struct SourceTerminal {
    SourceCategory category = SourceCategory::ConstantValue;
    int node = -1;
    Value constant;   // ConstantValue
    std::string name; // UserInput param, UtilityCall, GlobalVariable
};

/// Backward closure over data edges from `node`, stopping at query nodes and at nodes
/// with no incoming data edge.
std::vector<SourceTerminal> source_terminals(const Afg& afg, int node);
std::set<SourceCategory> value_sources(const Afg& afg, int node);

/// Columns of query `q`'s result read on at least one path to the end of the action.
std::set<ColumnRef> used_columns(const Afg& afg, const AppIR& ir, int q);

/// Associations of `q` traversed by some downstream access (with or without a column).
std::set<std::string> traversed_associations(const Afg& afg, const AppIR& ir, int q);

/// Variables holding `q`'s result (record level) together with the association binding they
/// refer to, as reached by alias assignments and loop heads.
struct AliasSite {
    int defNode = -1;
    std::string var;
    std::string binding;
    friend auto operator<=>(const AliasSite&, const AliasSite&) = default;
};
std::set<AliasSite> result_aliases(const Afg& afg, int q);

/// Reaching definitions at the entry of each node (definition = node id), optionally
/// ignoring one control edge (used to separate loop-carried flow from same-iteration flow).
std::vector<std::set<int>> reaching_definitions(const Afg& afg, std::optional<std::pair<int, int>> skip = std::nullopt);

} // namespace ormlens
