#pragma once

#include <string>
#include <vector>

#include "ctxmatch/harness/scenario.hpp"
#include "ctxmatch/sim/trace.hpp"

namespace ctxmatch::harness {

struct AssertionResult {
  std::string label;
  std::string kind;
  bool pass = false;
  std::string message;
  /// 1-based trace line numbers backing the verdict.
  std::vector<std::size_t> cited;

  Json to_json() const;
};

struct Report {
  std::vector<AssertionResult> results;

  bool all_passed() const;
  Json to_json() const;
  /// One "PASS label: message [lines]" line per assertion.
  std::string to_text() const;
};

/// Evaluates each assertion against the trace alone.
Report assert_outcomes(const sim::Trace& trace, const std::vector<Assertion>& assertions);

}  // namespace ctxmatch::harness
