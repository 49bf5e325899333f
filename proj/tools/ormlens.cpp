// ormlens command-line driver. Talks to the analyzer only through the C interface.

#include "ormlens/ormlens.h"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDiagnostics = 1;
constexpr int kExitUsage = 2;

struct Options {
    std::vector<std::string> inputs;
    std::string format = "json";
    std::string out;
    std::string detectors;
    bool sqlOnly = false;
    std::string dot;
    std::string emitIr;
    std::uint64_t seed = 1;
    int sessions = 50;
    int rowsPerModel = 50;
    int sessionLength = 9;
    std::string log;
};

struct CString {
    char* p = nullptr;
    ~CString() { ormlens_string_free(p); }
    std::string str() const { return p ? std::string(p) : std::string(); }
};

struct App {
    ormlens_app* h = nullptr;
    explicit App(ormlens_app* a) : h(a) {}
    App(App&& o) noexcept : h(o.h) { o.h = nullptr; }
    App(const App&) = delete;
    ~App() { ormlens_app_free(h); }
};

void diagnose(const std::string& where, ormlens_status s)
{
    int line = 0, column = 0;
    ormlens_last_error_location(&line, &column);
    std::cerr << where;
    if (line > 0)
        std::cerr << ':' << line << ':' << column;
    std::cerr << ": error: " << ormlens_status_name(s) << ": " << ormlens_last_error() << '\n';
}

// Files named directly, plus the .rlite files of named directories in name order.
std::vector<std::string> expand(const std::vector<std::string>& inputs, bool& ok)
{
    std::vector<std::string> out;
    for (const auto& in : inputs) {
        std::error_code ec;
        if (fs::is_directory(in, ec)) {
            std::vector<std::string> found;
            for (const auto& e : fs::directory_iterator(in, ec))
                if (e.is_regular_file() && e.path().extension() == ".rlite")
                    found.push_back(e.path().string());
            std::sort(found.begin(), found.end());
            if (found.empty())
                std::cerr << in << ": warning: no .rlite files\n";
            out.insert(out.end(), found.begin(), found.end());
        } else if (fs::exists(in, ec)) {
            out.push_back(in);
        } else {
            std::cerr << in << ": error: file not found\n";
            ok = false;
        }
    }
    return out;
}

bool write_output(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return static_cast<bool>(std::cout);
    }
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) {
        std::cerr << path << ": error: cannot write\n";
        return false;
    }
    return true;
}

bool read_file(const std::string& path, std::string& text)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        return false;
    std::ostringstream ss;
    ss << f.rdbuf();
    text = ss.str();
    return true;
}

// Emit the report (or its SQL) to --out.
bool finish(ormlens_report* report, const Options& o)
{
    CString text;
    ormlens_status s = o.sqlOnly ? ormlens_report_sql(report, &text.p)
                                 : ormlens_report_emit(report, o.format.c_str(), &text.p);
    if (s != ORMLENS_OK) {
        diagnose("report", s);
        return false;
    }
    return write_output(o.out, text.str());
}

int run_apps(const Options& o, bool simulateToo)
{
    bool ok = true;
    std::vector<std::string> files = expand(o.inputs, ok);
    if ((!o.dot.empty() || !o.emitIr.empty()) && files.size() != 1) {
        std::cerr << "error: --dot and --emit-ir need exactly one application\n";
        return kExitUsage;
    }
    ormlens_report* report = nullptr;
    if (ormlens_report_new(&report) != ORMLENS_OK)
        return kExitDiagnostics;
    std::string logText;
    for (const auto& path : files) {
        ormlens_app* raw = nullptr;
        ormlens_status s = ormlens_app_load_file(path.c_str(), &raw);
        if (s != ORMLENS_OK) {
            diagnose(path, s);
            ok = false;
            continue;
        }
        App app(raw);
        s = ormlens_app_analyze(app.h, o.detectors.empty() ? nullptr : o.detectors.c_str());
        if (s == ORMLENS_OK && simulateToo) {
            ormlens_sim_options so;
            ormlens_sim_options_init(&so);
            so.seed = o.seed;
            so.sessions = o.sessions;
            so.rows_per_model = o.rowsPerModel;
            so.session_length = o.sessionLength;
            s = ormlens_app_simulate(app.h, &so);
        }
        if (s == ORMLENS_OK)
            s = ormlens_report_add_app(report, app.h);
        if (s != ORMLENS_OK) {
            diagnose(path, s);
            ok = false;
            continue;
        }
        if (simulateToo && !o.log.empty()) {
            std::size_t n = 0;
            ormlens_app_session_count(app.h, &n);
            for (std::size_t i = 0; i < n; ++i) {
                CString l;
                if (ormlens_app_session_log(app.h, i, &l.p) == ORMLENS_OK)
                    logText += l.str();
            }
        }
        if (!o.dot.empty()) {
            CString d;
            if (ormlens_app_dot(app.h, &d.p) != ORMLENS_OK || !write_output(o.dot, d.str()))
                ok = false;
        }
        if (!o.emitIr.empty()) {
            CString d;
            if (ormlens_app_ir_json(app.h, &d.p) != ORMLENS_OK || !write_output(o.emitIr, d.str()))
                ok = false;
        }
    }
    if (!o.log.empty() && !write_output(o.log, logText))
        ok = false;
    if ((ok || !files.empty()) && !finish(report, o))
        ok = false;
    ormlens_report_free(report);
    return ok ? kExitOk : kExitDiagnostics;
}

int run_report(const Options& o)
{
    ormlens_report* report = nullptr;
    if (ormlens_report_new(&report) != ORMLENS_OK)
        return kExitDiagnostics;
    bool ok = true;
    for (const auto& path : o.inputs) {
        std::string text;
        if (!read_file(path, text)) {
            std::cerr << path << ": error: file not found\n";
            ok = false;
            continue;
        }
        ormlens_status s = ormlens_report_merge_json(report, text.data(), text.size());
        if (s != ORMLENS_OK) {
            diagnose(path, s);
            ok = false;
        }
    }
    if (!finish(report, o))
        ok = false;
    ormlens_report_free(report);
    return ok ? kExitOk : kExitDiagnostics;
}

void output_flags(CLI::App* cmd, Options& o)
{
    cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"json", "csv", "text"}));
    cmd->add_option("--out", o.out, "Write the report here (default: standard output)");
    cmd->add_flag("--sql-only", o.sqlOnly, "Print only the suggested SQL, one statement per line");
}

void analysis_flags(CLI::App* cmd, Options& o)
{
    cmd->add_option("paths", o.inputs, "RailLite files or directories")->required();
    cmd->add_option("--detectors", o.detectors, "Comma-separated detector names (default: all)");
    cmd->add_option("--dot", o.dot, "Write the action graph in Graphviz form");
    cmd->add_option("--emit-ir", o.emitIr, "Write the canonical IR document");
    output_flags(cmd, o);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App cli{"ormlens: static and simulated analysis of ORM-backed web applications"};
    cli.set_version_flag("--version", ormlens_version());
    cli.require_subcommand(1);
    Options o;

    auto* analyze = cli.add_subcommand("analyze", "Run the static detectors");
    analysis_flags(analyze, o);

    auto* sim = cli.add_subcommand("simulate", "Analyze, then simulate user sessions");
    analysis_flags(sim, o);
    sim->add_option("--seed", o.seed, "Seed for data generation and sessions");
    sim->add_option("--sessions", o.sessions, "Sessions per application")->check(CLI::NonNegativeNumber);
    sim->add_option("--rows-per-model", o.rowsPerModel, "Generated rows per model")->check(CLI::NonNegativeNumber);
    sim->add_option("--session-length", o.sessionLength, "Pages per session")->check(CLI::PositiveNumber);
    sim->add_option("--log", o.log, "Write the query logs as newline-delimited JSON");

    auto* report = cli.add_subcommand("report", "Merge previously written JSON reports");
    report->add_option("inputs", o.inputs, "JSON report files")->required();
    output_flags(report, o);

    try {
        cli.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return cli.exit(e);
    } catch (const CLI::ParseError& e) {
        cli.exit(e);
        return kExitUsage;
    }
    unsigned mask = 0;
    if (!o.detectors.empty() && ormlens_parse_detectors(o.detectors.c_str(), &mask) != ORMLENS_OK) {
        std::cerr << "error: --detectors: " << ormlens_last_error() << '\n';
        return kExitUsage;
    }
    if (*analyze)
        return run_apps(o, false);
    if (*sim)
        return run_apps(o, true);
    return run_report(o);
}
