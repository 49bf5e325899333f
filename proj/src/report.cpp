#include "ormlens/report.hpp"

#include "ormlens/error.hpp"

#include <cstdlib>
#include <cstdio>
#include <sstream>

namespace ormlens {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::array<ColumnSourceLabel, 5> kLabels{ColumnSourceLabel::OnlyConst, ColumnSourceLabel::OnlyOtherQuery,
                                                    ColumnSourceLabel::HasInput, ColumnSourceLabel::OtherWithoutInput,
                                                    ColumnSourceLabel::NeverWritten};

DetectorId detector_at(std::size_t i) { return static_cast<DetectorId>(i); }

// Detectors with a per-action fraction (column sources is application-wide).
bool per_action(DetectorId d) { return d != DetectorId::ColumnSources; }

std::optional<double> ratio(long num, long den)
{
    if (den <= 0)
        return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

ActionId parse_action(const std::string& s)
{
    auto hash = s.find('#');
    if (hash == std::string::npos)
        throw Error(ErrorCode::InvalidArgument, "malformed action '" + s + "'");
    return {s.substr(0, hash), s.substr(hash + 1)};
}

HttpMethod parse_method(const std::string& s)
{
    if (s == "GET")
        return HttpMethod::Get;
    if (s == "POST")
        return HttpMethod::Post;
    throw Error(ErrorCode::InvalidArgument, "unknown HTTP method '" + s + "'");
}

template <class J>
J opt_json(const std::optional<double>& v)
{
    return v ? J(*v) : J(nullptr);
}

std::optional<double> opt_from(const json& j)
{
    if (j.is_null())
        return std::nullopt;
    return j.get<double>();
}

ojson cache_json(const CacheStats& c)
{
    ojson j;
    j["reads"] = c.reads;
    j["hits"] = c.hits;
    j["syntacticEquiv"] = c.syntacticEquiv;
    j["equivDifferingResults"] = c.equivDifferingResults;
    j["hitFraction"] = c.hitFraction;
    j["syntacticEquivFraction"] = c.syntacticEquivFraction;
    j["equivDifferingResultsFraction"] = c.equivDifferingResultsFraction;
    return j;
}

CacheStats cache_from(const json& j)
{
    CacheStats c;
    c.reads = j.at("reads").get<std::size_t>();
    c.hits = j.at("hits").get<std::size_t>();
    c.syntacticEquiv = j.at("syntacticEquiv").get<std::size_t>();
    c.equivDifferingResults = j.at("equivDifferingResults").get<std::size_t>();
    c.hitFraction = j.at("hitFraction").get<double>();
    c.syntacticEquivFraction = j.at("syntacticEquivFraction").get<double>();
    c.equivDifferingResultsFraction = j.at("equivDifferingResultsFraction").get<double>();
    return c;
}

ojson prefetch_json(const PrefetchStats& p)
{
    ojson j;
    j["queries"] = p.queries;
    j["prefetchable"] = p.prefetchable;
    j["sameTemplate"] = p.sameTemplate;
    j["prefetchableFraction"] = p.prefetchableFraction;
    j["sameTemplateFraction"] = p.sameTemplateFraction;
    return j;
}

PrefetchStats prefetch_from(const json& j)
{
    PrefetchStats p;
    p.queries = j.at("queries").get<std::size_t>();
    p.prefetchable = j.at("prefetchable").get<std::size_t>();
    p.sameTemplate = j.at("sameTemplate").get<std::size_t>();
    p.prefetchableFraction = j.at("prefetchableFraction").get<double>();
    p.sameTemplateFraction = j.at("sameTemplateFraction").get<double>();
    return p;
}

} // namespace

std::optional<double> mean_fraction(const std::vector<ActionSummary>& actions, DetectorId d)
{
    double sum = 0;
    int n = 0;
    for (const auto& a : actions) {
        const Tally& t = a.tally(d);
        if (t.denominator > 0) {
            sum += static_cast<double>(t.numerator) / static_cast<double>(t.denominator);
            ++n;
        }
    }
    if (n == 0)
        return std::nullopt;
    return sum / n;
}

AppSummary aggregate(const AppAnalysis& analysis, const SimulationResult* sim, const SimulationConfig* simConfig)
{
    AppSummary s;
    s.app = analysis.app;
    s.detectors = analysis.detectors;
    for (const auto& af : analysis.actions) {
        ActionSummary a;
        a.action = af.action;
        a.method = af.method;
        a.queries = af.queries;
        a.readQueries = af.readQueries;

        Tally& loop = a.tally(DetectorId::Loop);
        for (const auto& l : af.loops.loops)
            loop.findings += !l.queries.empty() || l.loopCarried;
        loop.numerator = static_cast<int>(af.loops.inLoopQueries.size());

        Tally& cols = a.tally(DetectorId::UnusedColumns);
        for (const auto& u : af.unusedColumns) {
            cols.findings += !u.unused.empty();
            cols.numerator += static_cast<int>(u.unused.size());
            cols.denominator += static_cast<int>(u.projection.size());
            if (!u.unused.empty())
                a.wastedBytes += u.wastedBytes;
        }

        Tally& eager = a.tally(DetectorId::UnusedEagerLoads);
        std::set<int> eagerQueries;
        for (const auto& e : af.eagerLoads) {
            ++eager.denominator;
            if (!e.used) {
                ++eager.numerator;
                eagerQueries.insert(e.query);
            }
        }
        eager.findings = static_cast<int>(eagerQueries.size());

        Tally& sinks = a.tally(DetectorId::QueryOnlySinks);
        sinks.findings = sinks.numerator = static_cast<int>(af.queryOnlySinks.size());

        Tally& shared = a.tally(DetectorId::SharedSubexpressions);
        std::set<int> members;
        for (const auto& g : af.shared)
            members.insert(g.members.begin(), g.members.end());
        shared.findings = static_cast<int>(af.shared.size());
        shared.numerator = static_cast<int>(members.size());

        Tally& bounded = a.tally(DetectorId::Boundedness);
        for (const auto& b : af.boundedness) {
            ++bounded.findings;
            ++bounded.denominator;
            bounded.numerator += b.label != Boundedness::Unbounded;
        }

        Tally& branches = a.tally(DetectorId::DbSensitiveBranches);
        for (const auto& b : af.branches) {
            ++branches.denominator;
            branches.numerator += b.dbSensitive;
        }
        branches.findings = branches.numerator;

        Tally& pre = a.tally(DetectorId::Prefetchable);
        for (const auto& p : analysis.prefetch) {
            if (p.current != af.action)
                continue;
            ++pre.findings;
            ++pre.denominator;
            pre.numerator += p.prefetchable;
            a.sameTemplate += p.sameTemplate;
        }

        for (DetectorId d : {DetectorId::Loop, DetectorId::QueryOnlySinks, DetectorId::SharedSubexpressions})
            a.tally(d).denominator = a.queries;
        for (std::size_t i = 0; i < kDetectorCount; ++i)
            if (!analysis.enabled(detector_at(i)))
                a.tallies[i] = {};
        if (!analysis.enabled(DetectorId::Prefetchable))
            a.sameTemplate = 0;
        if (!analysis.enabled(DetectorId::UnusedColumns))
            a.wastedBytes = 0;
        s.actions.push_back(a);
    }

    for (std::size_t i = 0; i < kDetectorCount; ++i)
        if (s.enabled(detector_at(i)) && per_action(detector_at(i)))
            s.means[i] = mean_fraction(s.actions, detector_at(i));

    if (s.enabled(DetectorId::UnusedColumns)) {
        double sum = 0;
        int n = 0;
        for (const auto& a : s.actions)
            if (a.readQueries > 0) {
                sum += a.wastedBytes;
                ++n;
            }
        if (n > 0)
            s.meanWastedBytes = sum / n;
    }
    if (s.enabled(DetectorId::Prefetchable)) {
        double sum = 0;
        int n = 0;
        for (const auto& a : s.actions) {
            const Tally& t = a.tally(DetectorId::Prefetchable);
            if (t.denominator > 0) {
                sum += static_cast<double>(a.sameTemplate) / t.denominator;
                ++n;
            }
        }
        if (n > 0)
            s.sameTemplateFraction = sum / n;
    }

    if (s.enabled(DetectorId::ColumnSources)) {
        for (const auto& c : analysis.columns)
            ++s.columns.counts[static_cast<std::size_t>(c.label)];
        const auto& k = s.columns.counts;
        long written = k[0] + k[1] + k[2] + k[3];
        s.columns.onlyConst = ratio(k[0], written);
        s.columns.onlyOtherQuery = ratio(k[1], written);
        s.columns.hasInput = ratio(k[2], written);
        s.columns.otherWithoutInput = ratio(k[3], written);
    }

    if (sim) {
        SimulationSummary m;
        if (simConfig) {
            m.seed = simConfig->seed;
            m.rowsPerModel = simConfig->rowsPerModel;
            m.length = simConfig->length;
        }
        m.sessions = static_cast<int>(sim->sessions.size());
        m.cache = sim->meanCache;
        m.prefetch = sim->meanPrefetch;
        m.perAction = sim->perAction;
        s.simulation = std::move(m);
    }
    return s;
}

ReportFormat report_format_from_name(std::string_view name)
{
    if (name == "json")
        return ReportFormat::Json;
    if (name == "csv")
        return ReportFormat::Csv;
    if (name == "text")
        return ReportFormat::Text;
    throw Error(ErrorCode::UnsupportedFormat, "unsupported report format '" + std::string(name) + "'");
}

json suggestion_to_json(const RewriteSuggestion& s)
{
    return json{{"kind", rewrite_kind_name(s.kind)},
                {"action", to_string(s.action)},
                {"loc", {{"line", s.loc.line}, {"column", s.loc.column}}},
                {"finding", detector_name(s.finding)},
                {"originalQueries", s.originalQueries},
                {"originalSql", s.originalSql},
                {"suggestedSql", s.suggestedSql},
                {"rationale", s.rationale}};
}

AppReport make_app_report(const AppAnalysis& analysis, const RewriteReport* rewrites, const SimulationResult* sim,
                          const SimulationConfig* simConfig)
{
    AppReport r;
    r.summary = aggregate(analysis, sim, simConfig);
    for (const auto& f : collect_findings(analysis))
        r.findings.push_back(finding_to_json(f));
    if (rewrites) {
        for (const auto& s : rewrites->suggestions)
            r.suggestions.push_back(suggestion_to_json(s));
        for (const auto& k : rewrites->skipped)
            r.skipped.push_back({{"kind", rewrite_kind_name(k.kind)},
                                 {"action", to_string(k.action)},
                                 {"loc", {{"line", k.loc.line}, {"column", k.loc.column}}},
                                 {"queries", k.queries},
                                 {"reason", k.reason}});
    }
    return r;
}

ojson summary_to_json(const AppSummary& s)
{
    ojson j;
    j["app"] = s.app;
    ojson dets = ojson::array();
    for (std::size_t i = 0; i < kDetectorCount; ++i)
        if (s.enabled(detector_at(i)))
            dets.push_back(detector_name(detector_at(i)));
    j["detectors"] = dets;
    j["actionCount"] = s.actions.size();

    ojson avg = ojson::object();
    for (std::size_t i = 0; i < kDetectorCount; ++i)
        if (s.enabled(detector_at(i)) && per_action(detector_at(i)))
            avg[detector_name(detector_at(i))] = opt_json<ojson>(s.means[i]);
    if (s.enabled(DetectorId::UnusedColumns))
        avg["unusedColumnBytes"] = opt_json<ojson>(s.meanWastedBytes);
    if (s.enabled(DetectorId::Prefetchable))
        avg["prefetchSameTemplate"] = opt_json<ojson>(s.sameTemplateFraction);
    j["averages"] = avg;

    if (s.enabled(DetectorId::ColumnSources)) {
        ojson counts = ojson::object();
        for (auto l : kLabels)
            counts[column_source_label_name(l)] = s.columns.counts[static_cast<std::size_t>(l)];
        j["columnSources"] = {{"counts", counts},
                              {"fractions",
                               {{"onlyConst", opt_json<ojson>(s.columns.onlyConst)},
                                {"onlyOtherQuery", opt_json<ojson>(s.columns.onlyOtherQuery)},
                                {"hasInput", opt_json<ojson>(s.columns.hasInput)},
                                {"otherWithoutInput", opt_json<ojson>(s.columns.otherWithoutInput)}}}};
    }

    ojson actions = ojson::array();
    for (const auto& a : s.actions) {
        ojson aj;
        aj["action"] = to_string(a.action);
        aj["method"] = http_method_name(a.method);
        aj["queries"] = a.queries;
        aj["readQueries"] = a.readQueries;
        aj["wastedBytes"] = a.wastedBytes;
        aj["sameTemplate"] = a.sameTemplate;
        ojson tallies = ojson::object();
        for (std::size_t i = 0; i < kDetectorCount; ++i) {
            if (!s.enabled(detector_at(i)) || !per_action(detector_at(i)))
                continue;
            const Tally& t = a.tallies[i];
            tallies[detector_name(detector_at(i))] = {{"findings", t.findings},
                                                      {"numerator", t.numerator},
                                                      {"denominator", t.denominator},
                                                      {"fraction", opt_json<ojson>(ratio(t.numerator, t.denominator))}};
        }
        aj["detectors"] = tallies;
        actions.push_back(aj);
    }
    j["actions"] = actions;

    if (s.simulation) {
        const SimulationSummary& m = *s.simulation;
        ojson sj;
        sj["seed"] = m.seed;
        sj["sessions"] = m.sessions;
        sj["rowsPerModel"] = m.rowsPerModel;
        sj["sessionLength"] = m.length;
        sj["cache"] = cache_json(m.cache);
        sj["prefetch"] = prefetch_json(m.prefetch);
        ojson per = ojson::array();
        for (const auto& [id, st] : m.perAction)
            per.push_back({{"action", to_string(id)},
                           {"visits", st.visits},
                           {"cache", cache_json(st.cache)},
                           {"prefetch", prefetch_json(st.prefetch)}});
        sj["perAction"] = per;
        j["simulation"] = sj;
    } else {
        j["simulation"] = nullptr;
    }
    return j;
}

AppSummary summary_from_json(const json& j)
{
    try {
        AppSummary s;
        s.app = j.at("app").get<std::string>();
        s.detectors = 0;
        for (const auto& d : j.at("detectors")) {
            auto id = detector_from_name(d.get<std::string>());
            if (!id)
                throw Error(ErrorCode::InvalidArgument, "unknown detector '" + d.get<std::string>() + "'");
            s.detectors |= detector_bit(*id);
        }
        const json& avg = j.at("averages");
        for (std::size_t i = 0; i < kDetectorCount; ++i)
            if (s.enabled(detector_at(i)) && per_action(detector_at(i)))
                s.means[i] = opt_from(avg.at(detector_name(detector_at(i))));
        if (s.enabled(DetectorId::UnusedColumns))
            s.meanWastedBytes = opt_from(avg.at("unusedColumnBytes"));
        if (s.enabled(DetectorId::Prefetchable))
            s.sameTemplateFraction = opt_from(avg.at("prefetchSameTemplate"));

        if (s.enabled(DetectorId::ColumnSources)) {
            const json& cs = j.at("columnSources");
            for (auto l : kLabels)
                s.columns.counts[static_cast<std::size_t>(l)] = cs.at("counts").at(column_source_label_name(l)).get<int>();
            const json& fr = cs.at("fractions");
            s.columns.onlyConst = opt_from(fr.at("onlyConst"));
            s.columns.onlyOtherQuery = opt_from(fr.at("onlyOtherQuery"));
            s.columns.hasInput = opt_from(fr.at("hasInput"));
            s.columns.otherWithoutInput = opt_from(fr.at("otherWithoutInput"));
        }

        for (const auto& aj : j.at("actions")) {
            ActionSummary a;
            a.action = parse_action(aj.at("action").get<std::string>());
            a.method = parse_method(aj.at("method").get<std::string>());
            a.queries = aj.at("queries").get<int>();
            a.readQueries = aj.at("readQueries").get<int>();
            a.wastedBytes = aj.at("wastedBytes").get<int>();
            a.sameTemplate = aj.at("sameTemplate").get<int>();
            for (std::size_t i = 0; i < kDetectorCount; ++i) {
                if (!s.enabled(detector_at(i)) || !per_action(detector_at(i)))
                    continue;
                const json& t = aj.at("detectors").at(detector_name(detector_at(i)));
                a.tallies[i] = {t.at("findings").get<int>(), t.at("numerator").get<int>(), t.at("denominator").get<int>()};
            }
            s.actions.push_back(a);
        }
        if (j.at("actionCount").get<std::size_t>() != s.actions.size())
            throw Error(ErrorCode::InvalidArgument, "actionCount does not match the action list");

        const json& sj = j.at("simulation");
        if (!sj.is_null()) {
            SimulationSummary m;
            m.seed = sj.at("seed").get<std::uint64_t>();
            m.sessions = sj.at("sessions").get<int>();
            m.rowsPerModel = sj.at("rowsPerModel").get<int>();
            m.length = sj.at("sessionLength").get<int>();
            m.cache = cache_from(sj.at("cache"));
            m.prefetch = prefetch_from(sj.at("prefetch"));
            for (const auto& pj : sj.at("perAction")) {
                ActionSimStats st;
                st.visits = pj.at("visits").get<std::size_t>();
                st.cache = cache_from(pj.at("cache"));
                st.prefetch = prefetch_from(pj.at("prefetch"));
                m.perAction[parse_action(pj.at("action").get<std::string>())] = st;
            }
            s.simulation = std::move(m);
        }
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed summary: ") + e.what());
    }
}

namespace {

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fmt_double(const std::optional<double>& v)
{
    if (!v)
        return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return buf;
}

std::string percent(const std::optional<double>& v)
{
    if (!v)
        return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", *v * 100.0);
    return buf;
}

// Corpus-level means over applications.
ojson corpus_json(const ReportDoc& doc)
{
    ojson avg = ojson::object();
    for (std::size_t i = 0; i < kDetectorCount; ++i) {
        if (!per_action(detector_at(i)))
            continue;
        double sum = 0;
        int n = 0, enabled = 0;
        for (const auto& a : doc.apps) {
            enabled += a.summary.enabled(detector_at(i));
            if (a.summary.means[i]) {
                sum += *a.summary.means[i];
                ++n;
            }
        }
        if (enabled)
            avg[detector_name(detector_at(i))] = n ? ojson(sum / n) : ojson(nullptr);
    }
    return ojson{{"applications", doc.apps.size()}, {"averages", avg}};
}

std::string emit_json(const ReportDoc& doc)
{
    ojson j;
    j["reportVersion"] = kReportVersion;
    ojson apps = ojson::array();
    for (const auto& a : doc.apps) {
        ojson aj;
        aj["summary"] = summary_to_json(a.summary);
        aj["findings"] = ojson::parse(a.findings.dump());
        aj["suggestions"] = ojson::parse(a.suggestions.dump());
        aj["skipped"] = ojson::parse(a.skipped.dump());
        apps.push_back(aj);
    }
    j["applications"] = apps;
    j["corpus"] = corpus_json(doc);
    return j.dump(2) + "\n";
}

std::string emit_csv(const ReportDoc& doc)
{
    std::ostringstream out;
    out << "app,action,method,detector,findings,numerator,denominator,fraction\n";
    for (const auto& r : doc.apps) {
        const AppSummary& s = r.summary;
        for (const auto& a : s.actions)
            for (std::size_t i = 0; i < kDetectorCount; ++i) {
                if (!s.enabled(detector_at(i)) || !per_action(detector_at(i)))
                    continue;
                const Tally& t = a.tallies[i];
                out << csv_field(s.app) << ',' << csv_field(to_string(a.action)) << ',' << http_method_name(a.method)
                    << ',' << detector_name(detector_at(i)) << ',' << t.findings << ',' << t.numerator << ','
                    << t.denominator << ',' << fmt_double(ratio(t.numerator, t.denominator)) << '\n';
            }
        if (s.enabled(DetectorId::ColumnSources)) {
            const auto& k = s.columns.counts;
            int total = k[0] + k[1] + k[2] + k[3] + k[4];
            int written = total - k[4];
            out << csv_field(s.app) << ",*,," << detector_name(DetectorId::ColumnSources) << ',' << total << ','
                << written << ',' << total << ',' << fmt_double(ratio(written, total)) << '\n';
        }
    }
    return out.str();
}

class Boxes {
public:
    explicit Boxes(bool color) : color_(color) {}

    void box(const std::string& title, const std::vector<std::string>& lines)
    {
        const std::string rule = "+" + std::string(kWidth + 2, '-') + "+\n";
        out_ << rule;
        std::string t = "Observation: " + title;
        out_ << "| " << (color_ ? "\x1b[1m" + t + "\x1b[0m" : t) << pad(t) << " |\n";
        for (const auto& l : lines)
            out_ << "|   " << l << pad("  " + l) << " |\n";
        out_ << rule;
    }

    std::ostringstream& raw() { return out_; }

private:
    static constexpr std::size_t kWidth = 68;

    static std::string pad(const std::string& s) { return s.size() < kWidth ? std::string(kWidth - s.size(), ' ') : ""; }

    bool color_;
    std::ostringstream out_;
};

const char* title_of(DetectorId d)
{
    switch (d) {
    case DetectorId::Loop: return "queries issued inside loops";
    case DetectorId::UnusedColumns: return "retrieved columns never used";
    case DetectorId::UnusedEagerLoads: return "eager loads never used";
    case DetectorId::QueryOnlySinks: return "results that only feed other queries";
    case DetectorId::SharedSubexpressions: return "queries sharing a stored subexpression";
    case DetectorId::Boundedness: return "queries with a bounded result size";
    case DetectorId::ColumnSources: return "where stored column values come from";
    case DetectorId::DbSensitiveBranches: return "branches that depend on query results";
    case DetectorId::Prefetchable: return "next-page queries that can be prefetched";
    }
    return "?";
}

std::string emit_text(const ReportDoc& doc)
{
    const char* env = std::getenv("ORMLENS_COLOR");
    Boxes b(env && std::string(env) == "1");
    for (const auto& r : doc.apps) {
        const AppSummary& s = r.summary;
        b.raw() << "== " << s.app << " (" << s.actions.size() << " actions, " << r.findings.size()
                << " findings) ==\n";
        for (std::size_t i = 0; i < kDetectorCount; ++i) {
            DetectorId d = detector_at(i);
            if (!s.enabled(d))
                continue;
            std::vector<std::string> lines;
            if (per_action(d)) {
                long num = 0, den = 0, findings = 0, contributing = 0;
                for (const auto& a : s.actions) {
                    num += a.tallies[i].numerator;
                    den += a.tallies[i].denominator;
                    findings += a.tallies[i].findings;
                    contributing += a.tallies[i].denominator > 0;
                }
                lines.push_back("mean per action: " + percent(s.means[i]) + " over " + std::to_string(contributing) +
                                " actions");
                lines.push_back("total: " + std::to_string(num) + " of " + std::to_string(den) + ", " +
                                std::to_string(findings) + " findings");
                if (d == DetectorId::UnusedColumns && s.meanWastedBytes)
                    lines.push_back("unused bytes per action: " + fmt_double(s.meanWastedBytes));
                if (d == DetectorId::Prefetchable)
                    lines.push_back("same template: " + percent(s.sameTemplateFraction));
            } else {
                for (auto l : kLabels)
                    lines.push_back(std::string(column_source_label_name(l)) + ": " +
                                    std::to_string(s.columns.counts[static_cast<std::size_t>(l)]));
                lines.push_back("only constants: " + percent(s.columns.onlyConst) +
                                ", only other queries: " + percent(s.columns.onlyOtherQuery));
            }
            b.box(title_of(d), lines);
        }
        if (s.simulation) {
            const SimulationSummary& m = *s.simulation;
            b.box("simulated sessions",
                  {std::to_string(m.sessions) + " sessions of " + std::to_string(m.length) + " pages, " +
                       std::to_string(m.rowsPerModel) + " rows per model, seed " + std::to_string(m.seed),
                   "cache hits: " + percent(m.cache.hitFraction) +
                       ", syntactically equal: " + percent(m.cache.syntacticEquivFraction),
                   "equal queries with differing results: " + percent(m.cache.equivDifferingResultsFraction),
                   "prefetchable: " + percent(m.prefetch.prefetchableFraction) +
                       ", same template: " + percent(m.prefetch.sameTemplateFraction)});
        }
        if (!r.suggestions.empty())
            b.raw() << r.suggestions.size() << " rewrite suggestions\n";
    }
    return b.raw().str();
}

} // namespace

std::string emit_report(const ReportDoc& doc, ReportFormat format)
{
    switch (format) {
    case ReportFormat::Json: return emit_json(doc);
    case ReportFormat::Csv: return emit_csv(doc);
    case ReportFormat::Text: return emit_text(doc);
    }
    throw Error(ErrorCode::UnsupportedFormat, "unsupported report format");
}

ReportDoc parse_report(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("report is not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("reportVersion"))
        throw Error(ErrorCode::InvalidArgument, "not a report document");
    if (j["reportVersion"] != kReportVersion)
        throw Error(ErrorCode::UnsupportedFormat, "unsupported reportVersion " + j["reportVersion"].dump());
    ReportDoc doc;
    try {
        for (const auto& a : j.at("applications")) {
            AppReport r;
            r.summary = summary_from_json(a.at("summary"));
            r.findings = a.at("findings");
            r.suggestions = a.at("suggestions");
            r.skipped = a.at("skipped");
            doc.apps.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed report: ") + e.what());
    }
    return doc;
}

ReportDoc merge_reports(const std::vector<ReportDoc>& docs)
{
    ReportDoc out;
    for (const auto& d : docs)
        for (const auto& a : d.apps) {
            auto it = std::find_if(out.apps.begin(), out.apps.end(),
                                   [&](const AppReport& o) { return o.summary.app == a.summary.app; });
            if (it == out.apps.end()) {
                out.apps.push_back(a);
                continue;
            }
            std::optional<SimulationSummary> keep = it->summary.simulation;
            *it = a;
            if (!it->summary.simulation)
                it->summary.simulation = keep;
        }
    return out;
}

std::string suggested_sql_lines(const ReportDoc& doc)
{
    std::string out;
    for (const auto& a : doc.apps)
        for (const auto& s : a.suggestions)
            for (const auto& sql : s.at("suggestedSql"))
                out += sql.get<std::string>() + "\n";
    return out;
}

} // namespace ormlens
