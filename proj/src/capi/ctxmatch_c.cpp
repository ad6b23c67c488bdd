#include "ctxmatch/ctxmatch.h"

#include <cstring>
#include <fstream>
#include <string>

#include "ctxmatch/harness/assertions.hpp"
#include "ctxmatch/harness/metrics.hpp"
#include "ctxmatch/harness/world.hpp"

using namespace ctxmatch;

struct ctxm_scenario {
  harness::Scenario scenario;
};

struct ctxm_trace {
  sim::Trace trace;
};

namespace {

thread_local std::string g_error;

ctxm_status fail(ctxm_status code, std::string msg) {
  g_error = std::move(msg);
  return code;
}

char* dup(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename F>
ctxm_status guarded(F&& f) {
  try {
    return f();
  } catch (const harness::ScenarioError& e) {
    return fail(CTXM_E_SCENARIO, e.what());
  } catch (const std::exception& e) {
    return fail(CTXM_E_INTERNAL, e.what());
  } catch (...) {
    return fail(CTXM_E_INTERNAL, "unknown error");
  }
}

}  // namespace

extern "C" {

const char* ctxm_last_error(void) { return g_error.c_str(); }
const char* ctxm_version(void) { return "0.1.0"; }
void ctxm_string_free(char* s) { delete[] s; }

ctxm_status ctxm_scenario_load(const char* path, ctxm_scenario** out) {
  if (path == nullptr || out == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  *out = nullptr;
  {
    std::ifstream probe(path);
    if (!probe) return fail(CTXM_E_IO, std::string(path) + ": cannot open file");
  }
  return guarded([&] {
    *out = new ctxm_scenario{harness::load_scenario(path)};
    return CTXM_OK;
  });
}

ctxm_status ctxm_scenario_parse(const char* json, ctxm_scenario** out) {
  if (json == nullptr || out == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new ctxm_scenario{harness::parse_scenario(json)};
    return CTXM_OK;
  });
}

void ctxm_scenario_free(ctxm_scenario* s) { delete s; }

ctxm_status ctxm_scenario_until(const ctxm_scenario* s, int64_t* until_ms, int* has_until) {
  if (s == nullptr || until_ms == nullptr || has_until == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  *has_until = s->scenario.until.has_value();
  *until_ms = s->scenario.until.value_or(0);
  return CTXM_OK;
}

ctxm_status ctxm_scenario_summary(const ctxm_scenario* s, char** json) {
  if (s == nullptr || json == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  return guarded([&] {
    const auto& sc = s->scenario;
    std::size_t sensors = 0;
    for (const auto& c : sc.components) sensors += c.sensor;
    Json j{{"name", sc.name},
           {"epoch", sc.epoch_text},
           {"regions", sc.regions},
           {"nodes", sc.nodes.size()},
           {"facts", sc.facts.size()},
           {"gazetteer", sc.gazetteer.size()},
           {"matchlets", sc.matchlets.size()},
           {"bundles", sc.bundles.size()},
           {"components", sc.components.size() - sensors},
           {"sensors", sensors},
           {"sensor_events", sc.sensor_event_count()},
           {"constraints", sc.constraints.size()},
           {"churn", sc.churn.size()},
           {"assertions", sc.assertions.size()}};
    if (sc.until) j["until"] = *sc.until;
    *json = dup(j.dump());
    return CTXM_OK;
  });
}

ctxm_status ctxm_run(const ctxm_scenario* s, uint64_t seed, int64_t until_ms, ctxm_trace** out) {
  if (s == nullptr || out == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  if (until_ms < 0) return fail(CTXM_E_ARGUMENT, "until must be non-negative");
  *out = nullptr;
  return guarded([&] {
    auto r = harness::run(s->scenario, seed, SimTime{until_ms});
    *out = new ctxm_trace{std::move(r.trace)};
    return CTXM_OK;
  });
}

ctxm_status ctxm_trace_load(const char* path, ctxm_trace** out) {
  if (path == nullptr || out == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  *out = nullptr;
  std::ifstream in(path);
  if (!in) return fail(CTXM_E_IO, std::string(path) + ": cannot open file");
  try {
    *out = new ctxm_trace{sim::Trace::read_jsonl(in)};
    return CTXM_OK;
  } catch (const std::exception& e) {
    return fail(CTXM_E_TRACE, std::string(path) + ": " + e.what());
  }
}

void ctxm_trace_free(ctxm_trace* t) { delete t; }

size_t ctxm_trace_size(const ctxm_trace* t) { return t == nullptr ? 0 : t->trace.size(); }

ctxm_status ctxm_trace_write(const ctxm_trace* t, const char* path) {
  if (t == nullptr || path == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return fail(CTXM_E_IO, std::string(path) + ": cannot open for writing");
  t->trace.write_jsonl(out);
  out.flush();
  if (!out) return fail(CTXM_E_IO, std::string(path) + ": write failed");
  return CTXM_OK;
}

ctxm_status ctxm_trace_stats(const ctxm_trace* t, char** metrics_json) {
  if (t == nullptr || metrics_json == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  return guarded([&] {
    *metrics_json = dup(harness::stats(t->trace).dump(2));
    return CTXM_OK;
  });
}

ctxm_status ctxm_trace_assert(const ctxm_trace* t, const ctxm_scenario* s, int* all_passed, char** report) {
  if (t == nullptr || s == nullptr || all_passed == nullptr) return fail(CTXM_E_ARGUMENT, "null argument");
  return guarded([&] {
    const auto r = harness::assert_outcomes(t->trace, s->scenario.assertions);
    *all_passed = r.all_passed() ? 1 : 0;
    if (report != nullptr) *report = dup(r.to_text());
    return CTXM_OK;
  });
}

}  // extern "C"
