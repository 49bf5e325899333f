#pragma once

// Query rewrite suggestions: projection pruning, producer/consumer combining and shared views.

#include "ormlens/detectors.hpp"
#include "ormlens/relational.hpp"

#include <map>

namespace ormlens {

enum class RewriteKind { PruneProjection, CombineQueries, SharedView };
const char* rewrite_kind_name(RewriteKind k);

struct RewriteSuggestion {
    RewriteKind kind = RewriteKind::PruneProjection;
    ActionId action;
    SourceLoc loc;
    DetectorId finding = DetectorId::UnusedColumns; // kind of the finding this answers
    std::vector<int> originalQueries;
    std::vector<std::string> originalSql;
    std::vector<ViewDef> views;
    std::vector<RelQuery> suggested;
    std::vector<std::string> suggestedSql; // view definitions first
    std::string rationale;
};

/// Select only `used` plus the key of every involved table. Throws NothingToPrune when every
/// non-key column is used and InvalidArgument when `used` is empty.
RewriteSuggestion prune_projection(const AppIR& ir, const QueryDescriptor& q, const std::set<ColumnRef>& used);

/// Join the producer into the consumer in place of the consumer's predicate `predicate`, which
/// compares a consumer column with the producer's `linkColumn`. Throws NotCombinable.
RewriteSuggestion combine_queries(const AppIR& ir, const QueryDescriptor& producer, const QueryDescriptor& consumer,
                                  std::size_t predicate, const std::string& linkColumn);

/// Combine producer node `producer` into consumer node `consumer` of one AFG.
RewriteSuggestion combine_query_nodes(const AppIR& ir, const Afg& afg, int producer, int consumer);

/// A view holding the group's stored prefix, plus each member rewritten over the view.
RewriteSuggestion suggest_shared_view(const AppIR& ir, const Afg& afg, const SharedSubexprFinding& group);

struct SkippedRewrite {
    RewriteKind kind = RewriteKind::PruneProjection;
    ActionId action;
    SourceLoc loc;
    std::vector<int> queries;
    std::string reason;
};

struct RewriteReport {
    std::vector<RewriteSuggestion> suggestions;
    std::vector<SkippedRewrite> skipped;
};

RewriteReport suggest_rewrites(const AppIR& ir, const AppAnalysis& analysis);

/// Bind every `:name` parameter found in `bindings`.
void bind_params(RelQuery& q, const std::map<std::string, Value>& bindings);

} // namespace ormlens
