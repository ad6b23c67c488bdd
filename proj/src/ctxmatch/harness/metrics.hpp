#pragma once

#include <optional>
#include <vector>

#include "ctxmatch/core/json_types.hpp"
#include "ctxmatch/sim/trace.hpp"

namespace ctxmatch::harness {

struct Summary {
  std::size_t count = 0;
  Millis p50 = 0;
  Millis p95 = 0;
  Millis max = 0;

  Json to_json() const;
};

/// Nearest-rank percentiles; all zero for an empty sample.
Summary summarize(std::vector<Millis> samples);

/// Live instance count of a min_instances constraint over time, replayed
/// from deploy.accept / deploy.undeploy / sim.crash / sim.leave records.
/// One point per sim time at which the count changed; `record` is the
/// index of the last record applied at that time.
struct InstancePoint {
  Millis t = 0;
  std::size_t count = 0;
  std::size_t record = 0;
};
std::vector<InstancePoint> instance_series(const sim::Trace& trace, const Json& constraint);
/// Instance count at time t (after every record at t).
std::size_t instances_at(const sim::Trace& trace, const Json& constraint, Millis t);

/// Index of the latest kb.census record at or before t.
std::optional<std::size_t> census_at(const sim::Trace& trace, Millis t);

/// Message counts, delivery and match latency, replica availability,
/// constraint violation intervals and drops. Deterministic in the trace.
Json stats(const sim::Trace& trace);

/// Looks up a dotted metric path such as "delivery_latency_ms.p95".
std::optional<double> metric_value(const Json& metrics, const std::string& name);

}  // namespace ctxmatch::harness
