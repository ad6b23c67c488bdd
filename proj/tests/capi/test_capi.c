/* Exercises the C API from plain C: handles, status codes and ownership. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "ctxmatch/ctxmatch.h"

static int failures = 0;

#define CHECK(cond)                                              \
  do {                                                           \
    if (!(cond)) {                                               \
      fprintf(stderr, "%s:%d: CHECK(%s) failed: %s\n", __FILE__, \
              __LINE__, #cond, ctxm_last_error());               \
      ++failures;                                                \
    }                                                            \
  } while (0)

static const char* kTiny =
    "{\"name\":\"tiny\",\"epoch\":\"2003-06-25T16:00\",\"until\":5000,"
    "\"topology\":{\"regions\":[\"r\"],\"nodes\":["
    "{\"id\":\"a\",\"region\":\"r\",\"coords\":[56.34,-2.79]},"
    "{\"id\":\"b\",\"region\":\"r\",\"coords\":[56.35,-2.80]}]},"
    "\"facts\":[{\"kind\":\"note\",\"body\":{\"x\":1}}],"
    "\"assertions\":[{\"kind\":\"no_event\",\"type\":\"MeetSuggestion\"},"
    "{\"kind\":\"metric_bound\",\"label\":\"impossible\",\"name\":\"messages.sent\",\"op\":\"lt\",\"value\":0}]}";

int main(int argc, char** argv) {
  /* usage: test_capi OUT_DIR SCENARIO_DIR */
  if (argc < 3) return EXIT_FAILURE;
  char fixture[1024], out[1024];
  snprintf(fixture, sizeof fixture, "%s/icecream.scenario.json", argv[2]);
  snprintf(out, sizeof out, "%s/capi_trace.jsonl", argv[1]);

  ctxm_scenario* s = NULL;
  ctxm_trace* t = NULL;
  char* text = NULL;
  int has = 0, passed = -1;
  int64_t until = 0;

  CHECK(strlen(ctxm_version()) > 0);

  /* argument and load errors */
  CHECK(ctxm_scenario_parse(NULL, &s) == CTXM_E_ARGUMENT);
  CHECK(ctxm_scenario_load("/nonexistent/x.json", &s) == CTXM_E_IO);
  CHECK(s == NULL);
  CHECK(ctxm_scenario_parse("{\"name\":\"x\"", &s) == CTXM_E_SCENARIO);
  CHECK(strstr(ctxm_last_error(), "line") != NULL);
  CHECK(ctxm_scenario_parse("{\"name\":\"x\",\"topology\":{\"regions\":[],\"nodes\":[]}}", &s) == CTXM_E_SCENARIO);
  CHECK(ctxm_trace_load("/nonexistent/t.jsonl", &t) == CTXM_E_IO);
  CHECK(ctxm_run(NULL, 1, 0, &t) == CTXM_E_ARGUMENT);

  /* run, write, reload, assert */
  CHECK(ctxm_scenario_parse(kTiny, &s) == CTXM_OK);
  CHECK(ctxm_scenario_until(s, &until, &has) == CTXM_OK);
  CHECK(has == 1 && until == 5000);
  CHECK(ctxm_run(s, 1, -1, &t) == CTXM_E_ARGUMENT);
  CHECK(ctxm_scenario_summary(s, &text) == CTXM_OK);
  CHECK(text != NULL && strstr(text, "\"nodes\":2") != NULL);
  ctxm_string_free(text);

  CHECK(ctxm_run(s, 7, until, &t) == CTXM_OK);
  CHECK(ctxm_trace_size(t) > 0);
  CHECK(ctxm_trace_write(t, out) == CTXM_OK);
  CHECK(ctxm_trace_assert(t, s, &passed, &text) == CTXM_OK);
  CHECK(passed == 0);
  CHECK(text != NULL && strstr(text, "FAIL impossible") != NULL && strstr(text, "PASS no_event#0") != NULL);
  ctxm_string_free(text);

  ctxm_trace* back = NULL;
  CHECK(ctxm_trace_load(out, &back) == CTXM_OK);
  CHECK(ctxm_trace_size(back) == ctxm_trace_size(t));
  char *m1 = NULL, *m2 = NULL;
  CHECK(ctxm_trace_stats(t, &m1) == CTXM_OK);
  CHECK(ctxm_trace_stats(back, &m2) == CTXM_OK);
  CHECK(m1 && m2 && strcmp(m1, m2) == 0);
  ctxm_string_free(m1);
  ctxm_string_free(m2);
  ctxm_trace_free(back);
  ctxm_trace_free(t);

  /* trace handles outlive the scenario */
  CHECK(ctxm_run(s, 7, 1000, &t) == CTXM_OK);
  ctxm_scenario_free(s);
  CHECK(ctxm_trace_size(t) > 0);
  ctxm_trace_free(t);

  /* the fixture passes end to end */
  CHECK(ctxm_scenario_load(fixture, &s) == CTXM_OK);
  CHECK(ctxm_scenario_until(s, &until, &has) == CTXM_OK);
  CHECK(ctxm_run(s, 2, until, &t) == CTXM_OK);
  CHECK(ctxm_trace_assert(t, s, &passed, NULL) == CTXM_OK);
  CHECK(passed == 1);
  ctxm_trace_free(t);
  ctxm_scenario_free(s);

  ctxm_scenario_free(NULL);
  ctxm_trace_free(NULL);
  ctxm_string_free(NULL);

  if (failures == 0) printf("capi: all checks passed\n");
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
