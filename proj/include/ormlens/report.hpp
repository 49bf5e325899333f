#pragma once

// Per-application summaries and the report documents built from them.

#include "ormlens/detectors.hpp"
#include "ormlens/rewrite.hpp"
#include "ormlens/session.hpp"

#include <array>
#include <optional>

namespace ormlens {

inline constexpr int kReportVersion = 1;

/// One detector's tally for one action: `numerator / denominator` is the per-action fraction.
struct Tally {
    int findings = 0;
    int numerator = 0;
    int denominator = 0;
    friend bool operator==(const Tally&, const Tally&) = default;
};

struct ActionSummary {
    ActionId action;
    HttpMethod method = HttpMethod::Get;
    int queries = 0;
    int readQueries = 0;
    std::array<Tally, kDetectorCount> tallies{}; // indexed by DetectorId
    int wastedBytes = 0;
    int sameTemplate = 0; // numerator next to the prefetchable tally
    friend bool operator==(const ActionSummary&, const ActionSummary&) = default;

    const Tally& tally(DetectorId d) const { return tallies[static_cast<std::size_t>(d)]; }
    Tally& tally(DetectorId d) { return tallies[static_cast<std::size_t>(d)]; }
};

struct ColumnSourceSummary {
    std::array<int, 5> counts{}; // indexed by ColumnSourceLabel
    // Shares of the written columns (NeverWritten excluded); nullopt when none are written.
    std::optional<double> onlyConst, onlyOtherQuery, hasInput, otherWithoutInput;
    friend bool operator==(const ColumnSourceSummary&, const ColumnSourceSummary&) = default;
};

struct SimulationSummary {
    std::uint64_t seed = 0;
    int sessions = 0;
    int rowsPerModel = 0;
    int length = 0;
    CacheStats cache;       // counts summed, fractions averaged over sessions
    PrefetchStats prefetch;
    std::map<ActionId, ActionSimStats> perAction;
    friend bool operator==(const SimulationSummary&, const SimulationSummary&) = default;
};

struct AppSummary {
    std::string app;
    unsigned detectors = kAllDetectors;
    std::vector<ActionSummary> actions;
    // Unweighted means over actions whose denominator is nonzero, indexed by DetectorId.
    std::array<std::optional<double>, kDetectorCount> means{};
    std::optional<double> meanWastedBytes; // over actions with at least one read
    std::optional<double> sameTemplateFraction;
    ColumnSourceSummary columns;
    std::optional<SimulationSummary> simulation;
    friend bool operator==(const AppSummary&, const AppSummary&) = default;

    bool enabled(DetectorId d) const { return (detectors & detector_bit(d)) != 0; }
    const std::optional<double>& mean(DetectorId d) const { return means[static_cast<std::size_t>(d)]; }
};

/// Per-action tallies from an analysis, then unweighted means over actions.
AppSummary aggregate(const AppAnalysis& analysis, const SimulationResult* sim = nullptr,
                     const SimulationConfig* simConfig = nullptr);

/// Mean of the per-action fractions (numerator / denominator) over actions with denominator > 0.
std::optional<double> mean_fraction(const std::vector<ActionSummary>& actions, DetectorId d);

/// One application's section of a report. Findings and suggestions are carried as JSON so
/// that merged documents keep them verbatim.
struct AppReport {
    AppSummary summary;
    nlohmann::json findings = nlohmann::json::array();
    nlohmann::json suggestions = nlohmann::json::array();
    nlohmann::json skipped = nlohmann::json::array();
};

struct ReportDoc {
    std::vector<AppReport> apps;
};

enum class ReportFormat { Json, Csv, Text };
/// Throws UnsupportedFormat.
ReportFormat report_format_from_name(std::string_view name);

AppReport make_app_report(const AppAnalysis& analysis, const RewriteReport* rewrites = nullptr,
                          const SimulationResult* sim = nullptr, const SimulationConfig* simConfig = nullptr);

nlohmann::json suggestion_to_json(const RewriteSuggestion& s);
nlohmann::ordered_json summary_to_json(const AppSummary& s);
/// Throws InvalidArgument on schema mismatch.
AppSummary summary_from_json(const nlohmann::json& j);

std::string emit_report(const ReportDoc& doc, ReportFormat format);
/// Parse a JSON report document. Throws InvalidArgument (or UnsupportedFormat for another version).
ReportDoc parse_report(const std::string& text);

/// Concatenate documents. Entries for the same application are merged: the later entry wins,
/// except that a missing simulation section keeps the earlier one.
ReportDoc merge_reports(const std::vector<ReportDoc>& docs);

/// Suggested SQL of every application, one statement per line.
std::string suggested_sql_lines(const ReportDoc& doc);

} // namespace ormlens
