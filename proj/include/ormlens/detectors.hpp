#pragma once

// The nine anti-pattern and opportunity analyses run over Action Flow Graphs.

#include "ormlens/afg.hpp"

#include <json.hpp>

#include <optional>
#include <set>

namespace ormlens {

enum class DetectorId {
    Loop,
    UnusedColumns,
    UnusedEagerLoads,
    QueryOnlySinks,
    SharedSubexpressions,
    Boundedness,
    ColumnSources,
    DbSensitiveBranches,
    Prefetchable,
};
inline constexpr int kDetectorCount = 9;
inline constexpr unsigned kAllDetectors = (1u << kDetectorCount) - 1;

const char* detector_name(DetectorId d);
std::optional<DetectorId> detector_from_name(std::string_view name);
inline unsigned detector_bit(DetectorId d) { return 1u << static_cast<unsigned>(d); }
/// Parse a comma-separated detector list; throws Error(InvalidArgument) on unknown names.
unsigned parse_detector_list(std::string_view list);

struct LoopFinding {
    int loopHead = -1;
    SourceLoc loc;
    bool loopCarried = false;
    std::vector<int> queries; // issued queries inside the loop body
    std::vector<std::string> carriedVars;
};

struct LoopReport {
    std::vector<int> inLoopQueries;
    std::vector<LoopFinding> loops;
};

LoopReport detect_loop_queries(const Afg& afg);

struct UnusedColumnsFinding {
    int query = -1;
    SourceLoc loc;
    std::vector<ColumnRef> projection; // non-key columns retrieved
    std::vector<ColumnRef> used;
    std::vector<ColumnRef> unused;
    int wastedBytes = 0;
};

std::vector<UnusedColumnsFinding> detect_unused_columns(const Afg& afg, const AppIR& ir);

struct EagerLoadFinding {
    int query = -1;
    SourceLoc loc;
    std::string eagerLoad;
    bool used = false;
};

std::vector<EagerLoadFinding> detect_unused_eager_loads(const Afg& afg, const AppIR& ir);

struct QueryOnlySinkFinding {
    int query = -1;
    SourceLoc loc;
    std::vector<int> consumers;
};

std::vector<QueryOnlySinkFinding> detect_query_only_sinks(const Afg& afg);

struct SharedSubexprFinding {
    int base = -1;     // root of the stored chain
    SourceLoc loc;
    bool baseIssued = false;
    std::vector<int> members; // issued queries of the group, base included when issued
};

std::vector<SharedSubexprFinding> detect_shared_subexpressions(const Afg& afg);

enum class Boundedness { SingleValue, SingleRecord, Limited, Unbounded };
const char* boundedness_name(Boundedness b);
Boundedness classify_boundedness(const QueryDescriptor& q, const AppIR& ir);

struct BoundednessFinding {
    int query = -1;
    SourceLoc loc;
    Boundedness label = Boundedness::Unbounded;
};

std::vector<BoundednessFinding> detect_boundedness(const Afg& afg, const AppIR& ir);

enum class ColumnSourceLabel { OnlyConst, OnlyOtherQuery, HasInput, OtherWithoutInput, NeverWritten };
const char* column_source_label_name(ColumnSourceLabel l);

struct ColumnWrite {
    ActionId action;
    int node = -1;
    SourceLoc loc;
};

struct ColumnSourceFinding {
    std::string model;
    std::string table;
    std::string column;
    SourceLoc loc; // field declaration
    ColumnSourceLabel label = ColumnSourceLabel::NeverWritten;
    std::set<SourceCategory> sources;
    std::vector<Value> domain;              // OnlyConst
    std::vector<std::string> sourceColumns; // OnlyOtherQuery: table.column
    std::vector<ColumnWrite> writes;
};

std::vector<ColumnSourceFinding> classify_column_sources(const std::vector<Afg>& afgs, const AppIR& ir);

struct BranchFinding {
    int branch = -1;
    SourceLoc loc;
    bool dbSensitive = false;
};

std::vector<BranchFinding> detect_db_sensitive_branches(const Afg& afg);

struct PrefetchFinding {
    ActionId current;
    ActionId next;
    int viaNode = -1;
    HttpMethod method = HttpMethod::Get;
    int query = -1; // node in the next action's AFG
    SourceLoc loc;
    bool prefetchable = false;
    bool sameTemplate = false;
};

std::vector<PrefetchFinding> detect_prefetchable(const ActionGraph& graph);

/// All per-action results for one action.
struct ActionFindings {
    ActionId action;
    HttpMethod method = HttpMethod::Get;
    int queries = 0;     // issued queries
    int readQueries = 0; // issued SELECTs
    LoopReport loops;
    std::vector<UnusedColumnsFinding> unusedColumns;
    std::vector<EagerLoadFinding> eagerLoads;
    std::vector<QueryOnlySinkFinding> queryOnlySinks;
    std::vector<SharedSubexprFinding> shared;
    std::vector<BoundednessFinding> boundedness;
    std::vector<BranchFinding> branches;
};

struct AppAnalysis {
    std::string app;
    unsigned detectors = kAllDetectors;
    ActionGraph graph;
    std::vector<ActionFindings> actions;
    std::vector<ColumnSourceFinding> columns;
    std::vector<PrefetchFinding> prefetch;

    bool enabled(DetectorId d) const { return (detectors & detector_bit(d)) != 0; }
};

AppAnalysis analyze_app(const AppIR& ir, unsigned detectors = kAllDetectors);

/// Uniform finding record used in reports.
struct Finding {
    DetectorId kind = DetectorId::Loop;
    ActionId action;
    SourceLoc loc;
    int node = -1;
    nlohmann::json payload;
};

/// Flatten an analysis into findings, ordered by action declaration, then location, then kind.
std::vector<Finding> collect_findings(const AppAnalysis& analysis);

nlohmann::json finding_to_json(const Finding& f);

} // namespace ormlens
