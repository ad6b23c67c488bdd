#ifndef CTXMATCH_CTXMATCH_H
#define CTXMATCH_CTXMATCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CTXMATCH_BUILDING)
#    define CTXM_API __declspec(dllexport)
#  else
#    define CTXM_API __declspec(dllimport)
#  endif
#else
#  define CTXM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctxm_status {
  CTXM_OK = 0,
  CTXM_E_ARGUMENT = 1, /* null handle or bad parameter */
  CTXM_E_SCENARIO = 2, /* scenario failed to load or validate */
  CTXM_E_IO = 3,       /* file could not be read or written */
  CTXM_E_TRACE = 4,    /* malformed trace file */
  CTXM_E_INTERNAL = 5
} ctxm_status;

typedef struct ctxm_scenario ctxm_scenario;
typedef struct ctxm_trace ctxm_trace;

/* Message for the most recent failure on this thread; never NULL. */
CTXM_API const char* ctxm_last_error(void);
CTXM_API const char* ctxm_version(void);
/* Frees strings returned through char** out-parameters. */
CTXM_API void ctxm_string_free(char* s);

CTXM_API ctxm_status ctxm_scenario_load(const char* path, ctxm_scenario** out);
CTXM_API ctxm_status ctxm_scenario_parse(const char* json, ctxm_scenario** out);
CTXM_API void ctxm_scenario_free(ctxm_scenario* s);
/* Scenario `until` in millis; *has_until is 0 when the file gives none. */
CTXM_API ctxm_status ctxm_scenario_until(const ctxm_scenario* s, int64_t* until_ms, int* has_until);
/* JSON object with counts of nodes, regions, facts, matchlets, sensors and so on. */
CTXM_API ctxm_status ctxm_scenario_summary(const ctxm_scenario* s, char** json);

/* Runs the scenario to until_ms (0 = setup only). The returned trace is
   independent of the scenario handle. */
CTXM_API ctxm_status ctxm_run(const ctxm_scenario* s, uint64_t seed, int64_t until_ms, ctxm_trace** out);

CTXM_API ctxm_status ctxm_trace_load(const char* path, ctxm_trace** out);
CTXM_API void ctxm_trace_free(ctxm_trace* t);
CTXM_API size_t ctxm_trace_size(const ctxm_trace* t);
/* JSON-lines, one record per line. */
CTXM_API ctxm_status ctxm_trace_write(const ctxm_trace* t, const char* path);
CTXM_API ctxm_status ctxm_trace_stats(const ctxm_trace* t, char** metrics_json);
/* Evaluates the scenario's assertions. *all_passed is 1 or 0; `report`
   (optional) receives one line per assertion. */
CTXM_API ctxm_status ctxm_trace_assert(const ctxm_trace* t, const ctxm_scenario* s, int* all_passed, char** report);

#ifdef __cplusplus
}
#endif

#endif
