#include "ormlens/ormlens.h"

#include "ormlens/error.hpp"
#include "ormlens/ir_json.hpp"
#include "ormlens/parser.hpp"
#include "ormlens/report.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

using namespace ormlens;

struct ormlens_app {
    AppIR ir;
    std::optional<AppAnalysis> analysis;
    std::optional<AppAnalysis> full; // all detectors; feeds the data generator
    std::optional<SimulationConfig> simConfig;
    std::optional<SimulationResult> sim;
};

struct ormlens_report {
    ReportDoc doc;
};

namespace {

thread_local std::string g_error;
thread_local SourceLoc g_errorLoc;

ormlens_status status_of(ErrorCode c)
{
    switch (c) {
    case ErrorCode::Syntax: return ORMLENS_E_SYNTAX;
    case ErrorCode::UnresolvedReference: return ORMLENS_E_UNRESOLVED_REFERENCE;
    case ErrorCode::DuplicateDeclaration: return ORMLENS_E_DUPLICATE_DECLARATION;
    case ErrorCode::UnknownAction: return ORMLENS_E_UNKNOWN_ACTION;
    case ErrorCode::UnroutedTarget: return ORMLENS_E_UNROUTED_TARGET;
    case ErrorCode::UnboundParameter: return ORMLENS_E_UNBOUND_PARAMETER;
    case ErrorCode::UnknownColumn: return ORMLENS_E_UNKNOWN_COLUMN;
    case ErrorCode::NothingToPrune: return ORMLENS_E_NOTHING_TO_PRUNE;
    case ErrorCode::NotCombinable: return ORMLENS_E_NOT_COMBINABLE;
    case ErrorCode::InvalidArgument: return ORMLENS_E_INVALID_ARGUMENT;
    case ErrorCode::UnsupportedFormat: return ORMLENS_E_UNSUPPORTED_FORMAT;
    case ErrorCode::Io: return ORMLENS_E_IO;
    case ErrorCode::Analysis: return ORMLENS_E_ANALYSIS;
    }
    return ORMLENS_E_INTERNAL;
}

ormlens_status fail(ormlens_status s, std::string msg, SourceLoc loc = {})
{
    g_error = std::move(msg);
    g_errorLoc = loc;
    return s;
}

template <class F>
ormlens_status guarded(F&& f)
{
    g_error.clear();
    g_errorLoc = {};
    try {
        return f();
    } catch (const Error& e) {
        return fail(status_of(e.code()), e.what(), e.location());
    } catch (const std::bad_alloc&) {
        return fail(ORMLENS_E_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(ORMLENS_E_INTERNAL, e.what());
    }
}

ormlens_status give(const std::string& s, char** out)
{
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p)
        return fail(ORMLENS_E_INTERNAL, "out of memory");
    std::memcpy(p, s.c_str(), s.size() + 1);
    *out = p;
    return ORMLENS_OK;
}

#define REQUIRE_ARG(cond)                                                                          \
    do {                                                                                           \
        if (!(cond))                                                                               \
            return fail(ORMLENS_E_INVALID_ARGUMENT, "null or invalid argument: " #cond);           \
    } while (0)

} // namespace

extern "C" {

const char* ormlens_version(void) { return "0.1.0"; }

const char* ormlens_status_name(ormlens_status status)
{
    switch (status) {
    case ORMLENS_OK: return "OK";
    case ORMLENS_E_SYNTAX: return "SyntaxError";
    case ORMLENS_E_UNRESOLVED_REFERENCE: return "UnresolvedReference";
    case ORMLENS_E_DUPLICATE_DECLARATION: return "DuplicateDeclaration";
    case ORMLENS_E_UNKNOWN_ACTION: return "UnknownAction";
    case ORMLENS_E_UNROUTED_TARGET: return "UnroutedTarget";
    case ORMLENS_E_UNBOUND_PARAMETER: return "UnboundParameter";
    case ORMLENS_E_UNKNOWN_COLUMN: return "UnknownColumn";
    case ORMLENS_E_NOTHING_TO_PRUNE: return "NothingToPrune";
    case ORMLENS_E_NOT_COMBINABLE: return "NotCombinable";
    case ORMLENS_E_INVALID_ARGUMENT: return "InvalidArgument";
    case ORMLENS_E_UNSUPPORTED_FORMAT: return "UnsupportedFormat";
    case ORMLENS_E_IO: return "IoError";
    case ORMLENS_E_ANALYSIS: return "AnalysisError";
    case ORMLENS_E_STATE: return "StateError";
    case ORMLENS_E_INTERNAL: return "InternalError";
    }
    return "Unknown";
}

const char* ormlens_last_error(void) { return g_error.c_str(); }

void ormlens_last_error_location(int* line, int* column)
{
    if (line)
        *line = g_errorLoc.line;
    if (column)
        *column = g_errorLoc.column;
}

void ormlens_string_free(char* s) { std::free(s); }

ormlens_status ormlens_app_parse(const char* source, size_t length, const char* name, ormlens_app** out)
{
    REQUIRE_ARG(source && out);
    return guarded([&] {
        auto app = std::make_unique<ormlens_app>();
        app->ir = parse_app(std::string_view(source, length), name ? name : "app");
        *out = app.release();
        return ORMLENS_OK;
    });
}

ormlens_status ormlens_app_load_file(const char* path, ormlens_app** out)
{
    REQUIRE_ARG(path && out);
    return guarded([&] {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            return fail(ORMLENS_E_IO, std::string("cannot open '") + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        std::string src = ss.str();
        std::string stem = std::filesystem::path(path).stem().string();
        return ormlens_app_parse(src.data(), src.size(), stem.c_str(), out);
    });
}

void ormlens_app_free(ormlens_app* app) { delete app; }

ormlens_status ormlens_app_name(const ormlens_app* app, char** out)
{
    REQUIRE_ARG(app && out);
    return guarded([&] { return give(app->ir.name, out); });
}

ormlens_status ormlens_parse_detectors(const char* list, unsigned* mask)
{
    REQUIRE_ARG(list && mask);
    return guarded([&] {
        *mask = parse_detector_list(list);
        return ORMLENS_OK;
    });
}

ormlens_status ormlens_app_analyze(ormlens_app* app, const char* detectors)
{
    REQUIRE_ARG(app);
    return guarded([&] {
        unsigned mask = detectors ? parse_detector_list(detectors) : kAllDetectors;
        app->analysis = analyze_app(app->ir, mask);
        return ORMLENS_OK;
    });
}

ormlens_status ormlens_app_finding_count(const ormlens_app* app, size_t* out)
{
    REQUIRE_ARG(app && out);
    if (!app->analysis)
        return fail(ORMLENS_E_STATE, "application has not been analyzed");
    return guarded([&] {
        *out = collect_findings(*app->analysis).size();
        return ORMLENS_OK;
    });
}

void ormlens_sim_options_init(ormlens_sim_options* options)
{
    if (!options)
        return;
    SimulationConfig d;
    options->seed = d.seed;
    options->sessions = d.sessions;
    options->rows_per_model = d.rowsPerModel;
    options->session_length = d.length;
}

ormlens_status ormlens_app_simulate(ormlens_app* app, const ormlens_sim_options* options)
{
    REQUIRE_ARG(app && options);
    if (options->sessions < 0 || options->rows_per_model < 0 || options->session_length < 1)
        return fail(ORMLENS_E_INVALID_ARGUMENT, "sessions and rows must be >= 0 and session length >= 1");
    return guarded([&] {
        if (!app->full)
            app->full = analyze_app(app->ir);
        SimulationConfig cfg;
        cfg.seed = options->seed;
        cfg.sessions = options->sessions;
        cfg.rowsPerModel = options->rows_per_model;
        cfg.length = options->session_length;
        app->sim = simulate(app->ir, *app->full, cfg);
        app->simConfig = cfg;
        return ORMLENS_OK;
    });
}

ormlens_status ormlens_app_session_count(const ormlens_app* app, size_t* out)
{
    REQUIRE_ARG(app && out);
    *out = app->sim ? app->sim->sessions.size() : 0;
    return ORMLENS_OK;
}

ormlens_status ormlens_app_session_log(const ormlens_app* app, size_t session, char** out)
{
    REQUIRE_ARG(app && out);
    if (!app->sim)
        return fail(ORMLENS_E_STATE, "application has not been simulated");
    if (session >= app->sim->sessions.size())
        return fail(ORMLENS_E_INVALID_ARGUMENT, "session index out of range");
    return guarded([&] { return give(log_to_ndjson(app->sim->sessions[session]), out); });
}

ormlens_status ormlens_app_ir_json(const ormlens_app* app, char** out)
{
    REQUIRE_ARG(app && out);
    return guarded([&] { return give(app_to_json(app->ir).dump(2) + "\n", out); });
}

ormlens_status ormlens_app_dot(const ormlens_app* app, char** out)
{
    REQUIRE_ARG(app && out);
    return guarded([&] {
        const AppAnalysis* a = app->analysis ? &*app->analysis : app->full ? &*app->full : nullptr;
        if (a)
            return give(to_dot(a->graph), out);
        return give(to_dot(build_action_graph(app->ir, build_all_afgs(app->ir))), out);
    });
}

ormlens_status ormlens_report_new(ormlens_report** out)
{
    REQUIRE_ARG(out);
    return guarded([&] {
        *out = new ormlens_report();
        return ORMLENS_OK;
    });
}

void ormlens_report_free(ormlens_report* report) { delete report; }

ormlens_status ormlens_report_add_app(ormlens_report* report, const ormlens_app* app)
{
    REQUIRE_ARG(report && app);
    if (!app->analysis && !app->sim)
        return fail(ORMLENS_E_STATE, "application has been neither analyzed nor simulated");
    return guarded([&] {
        const AppAnalysis& a = app->analysis ? *app->analysis : *app->full;
        RewriteReport rw = suggest_rewrites(app->ir, a);
        AppReport r = make_app_report(a, &rw, app->sim ? &*app->sim : nullptr,
                                      app->simConfig ? &*app->simConfig : nullptr);
        report->doc = merge_reports({report->doc, ReportDoc{{std::move(r)}}});
        return ORMLENS_OK;
    });
}

ormlens_status ormlens_report_merge_json(ormlens_report* report, const char* text, size_t length)
{
    REQUIRE_ARG(report && text);
    return guarded([&] {
        ReportDoc other = parse_report(std::string(text, length));
        report->doc = merge_reports({report->doc, other});
        return ORMLENS_OK;
    });
}

ormlens_status ormlens_report_emit(const ormlens_report* report, const char* format, char** out)
{
    REQUIRE_ARG(report && format && out);
    return guarded([&] { return give(emit_report(report->doc, report_format_from_name(format)), out); });
}

ormlens_status ormlens_report_sql(const ormlens_report* report, char** out)
{
    REQUIRE_ARG(report && out);
    return guarded([&] { return give(suggested_sql_lines(report->doc), out); });
}

} // extern "C"
