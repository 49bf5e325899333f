#ifndef ORMLENS_H
#define ORMLENS_H

/* C interface to the ormlens analyzer. Every call returns a status code; on failure the
 * message is available from ormlens_last_error() on the calling thread. Strings returned
 * through `char**` out parameters are owned by the caller and released with
 * ormlens_string_free(). */

#include <stddef.h>
#include <stdint.h>

#if defined(ORMLENS_BUILD_SHARED)
#define ORMLENS_API __attribute__((visibility("default")))
#else
#define ORMLENS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ormlens_status {
    ORMLENS_OK = 0,
    ORMLENS_E_SYNTAX = 1,
    ORMLENS_E_UNRESOLVED_REFERENCE = 2,
    ORMLENS_E_DUPLICATE_DECLARATION = 3,
    ORMLENS_E_UNKNOWN_ACTION = 4,
    ORMLENS_E_UNROUTED_TARGET = 5,
    ORMLENS_E_UNBOUND_PARAMETER = 6,
    ORMLENS_E_UNKNOWN_COLUMN = 7,
    ORMLENS_E_NOTHING_TO_PRUNE = 8,
    ORMLENS_E_NOT_COMBINABLE = 9,
    ORMLENS_E_INVALID_ARGUMENT = 10,
    ORMLENS_E_UNSUPPORTED_FORMAT = 11,
    ORMLENS_E_IO = 12,
    ORMLENS_E_ANALYSIS = 13,
    ORMLENS_E_STATE = 14,   /* call made in the wrong order, e.g. simulate before analyze */
    ORMLENS_E_INTERNAL = 15
} ormlens_status;

/* A parsed application together with its latest analysis and simulation. */
typedef struct ormlens_app ormlens_app;
/* A report document: one section per application. */
typedef struct ormlens_report ormlens_report;

typedef struct ormlens_sim_options {
    uint64_t seed;
    int sessions;
    int rows_per_model;
    int session_length;
} ormlens_sim_options;

ORMLENS_API const char* ormlens_version(void);
ORMLENS_API const char* ormlens_status_name(ormlens_status status);
ORMLENS_API const char* ormlens_last_error(void);
/* Line and column of the last error's source location, 0 when it has none. */
ORMLENS_API void ormlens_last_error_location(int* line, int* column);
ORMLENS_API void ormlens_string_free(char* s);

/* `name` names the application in reports; NULL means "app". */
ORMLENS_API ormlens_status ormlens_app_parse(const char* source, size_t length, const char* name, ormlens_app** out);
/* The application is named after the file stem. */
ORMLENS_API ormlens_status ormlens_app_load_file(const char* path, ormlens_app** out);
ORMLENS_API void ormlens_app_free(ormlens_app* app);
ORMLENS_API ormlens_status ormlens_app_name(const ormlens_app* app, char** out);

/* Validate a comma-separated detector list and return its bit mask. */
ORMLENS_API ormlens_status ormlens_parse_detectors(const char* list, unsigned* mask);
/* Comma-separated detector names, or NULL for all of them. */
ORMLENS_API ormlens_status ormlens_app_analyze(ormlens_app* app, const char* detectors);
ORMLENS_API ormlens_status ormlens_app_finding_count(const ormlens_app* app, size_t* out);

ORMLENS_API void ormlens_sim_options_init(ormlens_sim_options* options);
ORMLENS_API ormlens_status ormlens_app_simulate(ormlens_app* app, const ormlens_sim_options* options);
/* Newline-delimited JSON query log of one simulated session. */
ORMLENS_API ormlens_status ormlens_app_session_log(const ormlens_app* app, size_t session, char** out);
ORMLENS_API ormlens_status ormlens_app_session_count(const ormlens_app* app, size_t* out);

/* Canonical IR document and the action graph in Graphviz form. */
ORMLENS_API ormlens_status ormlens_app_ir_json(const ormlens_app* app, char** out);
ORMLENS_API ormlens_status ormlens_app_dot(const ormlens_app* app, char** out);

ORMLENS_API ormlens_status ormlens_report_new(ormlens_report** out);
ORMLENS_API void ormlens_report_free(ormlens_report* report);
/* Add the analyzed application (with its simulation, if any). */
ORMLENS_API ormlens_status ormlens_report_add_app(ormlens_report* report, const ormlens_app* app);
/* Merge a previously emitted JSON report into this one. */
ORMLENS_API ormlens_status ormlens_report_merge_json(ormlens_report* report, const char* text, size_t length);
/* `format` is "json", "csv" or "text". */
ORMLENS_API ormlens_status ormlens_report_emit(const ormlens_report* report, const char* format, char** out);
/* Suggested rewrite SQL, one statement per line. */
ORMLENS_API ormlens_status ormlens_report_sql(const ormlens_report* report, char** out);

#ifdef __cplusplus
}
#endif

#endif
