// ctxmatch: run, validate and check simulation scenarios.
//
// Exit codes: 0 all assertions pass, 1 an assertion failed, 2 load or IO error.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "ctxmatch/ctxmatch.h"

namespace {

constexpr int kPass = 0;
constexpr int kAssertFail = 1;
constexpr int kLoadError = 2;

struct ScenarioDeleter {
  void operator()(ctxm_scenario* s) const { ctxm_scenario_free(s); }
};
struct TraceDeleter {
  void operator()(ctxm_trace* t) const { ctxm_trace_free(t); }
};
struct StringDeleter {
  void operator()(char* s) const { ctxm_string_free(s); }
};
using ScenarioPtr = std::unique_ptr<ctxm_scenario, ScenarioDeleter>;
using TracePtr = std::unique_ptr<ctxm_trace, TraceDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

int report_error(const char* what) {
  std::cerr << "ctxmatch: " << what << ": " << ctxm_last_error() << "\n";
  return kLoadError;
}

ScenarioPtr load(const std::string& path) {
  ctxm_scenario* s = nullptr;
  if (ctxm_scenario_load(path.c_str(), &s) != CTXM_OK) return nullptr;
  return ScenarioPtr(s);
}

int check(ctxm_trace* trace, ctxm_scenario* scenario) {
  int passed = 0;
  char* text = nullptr;
  if (ctxm_trace_assert(trace, scenario, &passed, &text) != CTXM_OK) return report_error("assert");
  StringPtr owned(text);
  std::cout << text;
  return passed ? kPass : kAssertFail;
}

int cmd_run(const std::string& scenario_path, std::uint64_t seed, std::int64_t until, const std::string& trace_path,
            const std::string& metrics_path) {
  auto s = load(scenario_path);
  if (!s) return report_error("load");
  if (until < 0) {
    int has = 0;
    ctxm_scenario_until(s.get(), &until, &has);
    if (!has) {
      std::cerr << "ctxmatch: --until is required when the scenario gives none\n";
      return kLoadError;
    }
  }
  ctxm_trace* raw = nullptr;
  if (ctxm_run(s.get(), seed, until, &raw) != CTXM_OK) return report_error("run");
  TracePtr trace(raw);
  if (ctxm_trace_write(trace.get(), trace_path.c_str()) != CTXM_OK) return report_error("trace");
  if (!metrics_path.empty()) {
    char* m = nullptr;
    if (ctxm_trace_stats(trace.get(), &m) != CTXM_OK) return report_error("stats");
    StringPtr owned(m);
    std::ofstream out(metrics_path, std::ios::binary | std::ios::trunc);
    out << m << "\n";
    if (!out) {
      std::cerr << "ctxmatch: cannot write " << metrics_path << "\n";
      return kLoadError;
    }
  }
  return check(trace.get(), s.get());
}

int cmd_validate(const std::string& scenario_path) {
  auto s = load(scenario_path);
  if (!s) return report_error("invalid scenario");
  char* summary = nullptr;
  if (ctxm_scenario_summary(s.get(), &summary) != CTXM_OK) return report_error("summary");
  StringPtr owned(summary);
  std::cout << summary << "\n";
  return kPass;
}

int cmd_stats(const std::string& trace_path) {
  ctxm_trace* raw = nullptr;
  if (ctxm_trace_load(trace_path.c_str(), &raw) != CTXM_OK) return report_error("trace");
  TracePtr trace(raw);
  char* m = nullptr;
  if (ctxm_trace_stats(trace.get(), &m) != CTXM_OK) return report_error("stats");
  StringPtr owned(m);
  std::cout << m << "\n";
  return kPass;
}

int cmd_assert(const std::string& scenario_path, const std::string& trace_path) {
  auto s = load(scenario_path);
  if (!s) return report_error("load");
  ctxm_trace* raw = nullptr;
  if (ctxm_trace_load(trace_path.c_str(), &raw) != CTXM_OK) return report_error("trace");
  TracePtr trace(raw);
  return check(trace.get(), s.get());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware matching simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ctxm_version()));

  std::string scenario, trace, metrics;
  std::uint64_t seed = 1;
  std::int64_t until = -1;

  auto* run = app.add_subcommand("run", "Run a scenario and write its trace");
  run->add_option("--scenario", scenario, "Scenario file")->required();
  run->add_option("--seed", seed, "Random seed")->required();
  run->add_option("--until", until, "Sim time to stop at, in millis (default: the scenario's until)");
  run->add_option("--trace", trace, "Trace output (JSON lines)")->required();
  run->add_option("--metrics", metrics, "Metrics output (JSON)");

  auto* validate = app.add_subcommand("validate", "Load and validate a scenario");
  validate->add_option("--scenario", scenario, "Scenario file")->required();

  auto* stats = app.add_subcommand("stats", "Compute metrics from a trace");
  stats->add_option("--trace", trace, "Trace file")->required();

  auto* assert_cmd = app.add_subcommand("assert", "Check a scenario's assertions against a trace");
  assert_cmd->add_option("--scenario", scenario, "Scenario file")->required();
  assert_cmd->add_option("--trace", trace, "Trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kLoadError;
  }

  if (*run) return cmd_run(scenario, seed, until, trace, metrics);
  if (*validate) return cmd_validate(scenario);
  if (*stats) return cmd_stats(trace);
  return cmd_assert(scenario, trace);
}
