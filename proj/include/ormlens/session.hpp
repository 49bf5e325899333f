#pragma once

// Simulated user sessions: a concrete interpreter for action bodies over a TableStore, a
// seeded random walk over next-action edges, and the caching/prefetching statistics
// computed from the resulting query log.

#include "ormlens/afg.hpp"
#include "ormlens/engine.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ormlens {

struct AppAnalysis;

struct LoggedRow {
    std::string table;
    std::int64_t id = 0;
    std::uint64_t version = 0;
    std::vector<std::string> columns; // retrieved (reads) or written (writes)
    friend bool operator==(const LoggedRow&, const LoggedRow&) = default;
};

enum class LogKind { Read, Write };

struct QueryLogEntry {
    std::size_t seq = 0; // logical timestamp
    int step = 0;
    ActionId action;
    std::optional<HttpMethod> via; // method of the edge that led to this step
    bool restart = false;
    SourceLoc loc;
    LogKind kind = LogKind::Read;
    bool lazy = false;      // association loaded on access
    bool usesInput = false; // some bound value derives from a user-filled form field
    std::string sql;        // bound SQL
    bool scalar = false;
    Value value; // COUNT / ANY result
    std::vector<LoggedRow> rows;
    /// (binding, column) of the result read by the action, id excluded.
    std::set<std::pair<std::string, std::string>> accessed;
    friend bool operator==(const QueryLogEntry&, const QueryLogEntry&) = default;
};

struct SessionStep {
    int index = 0;
    ActionId action;
    std::optional<HttpMethod> via;
    bool restart = false;
    std::map<std::string, Value> params;
    std::set<std::string> inputs; // params filled in by the user
    friend bool operator==(const SessionStep&, const SessionStep&) = default;
};

struct SessionLog {
    std::uint64_t seed = 0;
    std::vector<SessionStep> steps;
    std::vector<QueryLogEntry> entries;
    friend bool operator==(const SessionLog&, const SessionLog&) = default;
};

struct SessionConfig {
    std::uint64_t seed = 1;
    int length = 9;
    std::optional<ActionId> startAction;
    std::map<std::string, Value> startParams;
    int rowsPerModel = 50; // range for generated id-like form values
};

/// A link or form instance produced while running one action.
struct PageLink {
    SourceLoc loc;
    ActionId target;
    HttpMethod method = HttpMethod::Get;
    std::map<std::string, Value> args;
    std::vector<std::string> userFields;
};

struct ActionRun {
    std::vector<QueryLogEntry> entries;
    std::vector<PageLink> links;
};

/// Run one action once against `store` (mutated by its writes). Globals start at their
/// declared values.
ActionRun run_action(const AppIR& ir, TableStore& store, const ActionId& action,
                     const std::map<std::string, Value>& params, std::uint64_t seed = 1);

/// Throws InvalidArgument for an empty application or length < 1.
SessionLog run_session(const AppIR& ir, const ActionGraph& graph, TableStore store, const SessionConfig& cfg);

/// Newline-delimited JSON, one object per log entry.
std::string log_to_ndjson(const SessionLog& log);

struct CacheFlags {
    bool read = false;
    bool hit = false;
    bool syntacticEquiv = false;
    bool equivDifferingResults = false;
    friend bool operator==(const CacheFlags&, const CacheFlags&) = default;
};

struct PrefetchFlags {
    bool counted = false; // reached through an edge (not a start or restart step)
    bool prefetchable = false;
    bool sameTemplate = false;
    friend bool operator==(const PrefetchFlags&, const PrefetchFlags&) = default;
};

/// Per-entry decisions, aligned with log.entries.
std::vector<CacheFlags> classify_cache(const SessionLog& log);
std::vector<PrefetchFlags> classify_prefetch(const SessionLog& log);

struct CacheStats {
    std::size_t reads = 0;
    std::size_t hits = 0;
    std::size_t syntacticEquiv = 0;
    std::size_t equivDifferingResults = 0;
    double hitFraction = 0;
    double syntacticEquivFraction = 0;
    double equivDifferingResultsFraction = 0;
    friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

struct PrefetchStats {
    std::size_t queries = 0;
    std::size_t prefetchable = 0;
    std::size_t sameTemplate = 0;
    double prefetchableFraction = 0;
    double sameTemplateFraction = 0;
    friend bool operator==(const PrefetchStats&, const PrefetchStats&) = default;
};

CacheStats cache_stats(const SessionLog& log);
PrefetchStats prefetch_stats(const SessionLog& log);

struct SimulationConfig {
    std::uint64_t seed = 1;
    int sessions = 50;
    int rowsPerModel = 50;
    int length = 9;
    std::optional<ActionId> startAction;
};

struct ActionSimStats {
    CacheStats cache;
    PrefetchStats prefetch;
    std::size_t visits = 0;
    friend bool operator==(const ActionSimStats&, const ActionSimStats&) = default;
};

struct SimulationResult {
    std::vector<SessionLog> sessions;
    std::vector<CacheStats> cache;       // per session
    std::vector<PrefetchStats> prefetch; // per session
    CacheStats meanCache;                // fractions: mean over sessions with a nonzero denominator
    PrefetchStats meanPrefetch;
    std::map<ActionId, ActionSimStats> perAction; // counts pooled over sessions
};

/// Generates one store for (seed, rowsPerModel), using the analysis' constant domains, and
/// runs `sessions` walks over private copies of it.
SimulationResult simulate(const AppIR& ir, const AppAnalysis& analysis, const SimulationConfig& cfg);

} // namespace ormlens
