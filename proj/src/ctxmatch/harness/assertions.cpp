#include "ctxmatch/harness/assertions.hpp"

#include <sstream>

#include "ctxmatch/core/error.hpp"
#include "ctxmatch/harness/metrics.hpp"
#include "ctxmatch/pubsub/subscription.hpp"

namespace ctxmatch::harness {

namespace {

constexpr std::size_t kMaxCited = 20;

bool attributes_match(const Json& event, const Json& wanted) {
  const Json& attrs = event.contains("attributes") ? event["attributes"] : Json::object();
  for (const auto& [name, expected] : wanted.items()) {
    if (!attrs.contains(name)) return false;
    try {
      const auto a = TypedValue::from_json(attrs[name]);
      const auto b = TypedValue::from_json(expected);
      if (a.kind() == TypedValue::Kind::Geo || b.kind() == TypedValue::Kind::Geo) {
        if (!(a == b)) return false;
      } else if (!values_equal(a, b)) {
        return false;
      }
    } catch (const Error&) {
      return false;
    }
  }
  return true;
}

std::vector<std::size_t> matching_events(const sim::Trace& trace, const Json& spec) {
  const std::string kind = spec["source"] == "publish" ? "pubsub.publish" : "match.emit";
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    if (r.kind != kind || !r.detail.contains("event")) continue;
    const Json& e = r.detail["event"];
    if (e.value("type", "") != spec["type"].get<std::string>()) continue;
    if (spec.contains("window")) {
      if (r.t.millis < spec["window"][0].get<Millis>() || r.t.millis > spec["window"][1].get<Millis>()) continue;
    }
    if (attributes_match(e, spec["attributes"])) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> lines(const std::vector<std::size_t>& indexes) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < indexes.size() && i < kMaxCited; ++i) out.push_back(indexes[i] + 1);
  return out;
}

std::string describe_filter(const Json& spec) {
  std::string s = spec["type"].get<std::string>();
  if (!spec["attributes"].empty()) s += " " + spec["attributes"].dump();
  if (spec.contains("window")) s += " in [" + std::to_string(spec["window"][0].get<Millis>()) + ", " + std::to_string(spec["window"][1].get<Millis>()) + "]";
  return s;
}

AssertionResult event_emitted(const sim::Trace& trace, const Json& spec) {
  AssertionResult r;
  const auto found = matching_events(trace, spec);
  r.cited = lines(found);
  if (spec.contains("count")) {
    const auto want = spec["count"].get<std::size_t>();
    r.pass = found.size() == want;
    r.message = std::to_string(found.size()) + " of expected " + std::to_string(want) + " record(s) for " + describe_filter(spec);
  } else {
    r.pass = !found.empty();
    r.message = r.pass ? std::to_string(found.size()) + " record(s) for " + describe_filter(spec)
                       : "no record for " + describe_filter(spec);
  }
  return r;
}

AssertionResult no_event(const sim::Trace& trace, const Json& spec) {
  AssertionResult r;
  const auto found = matching_events(trace, spec);
  r.cited = lines(found);
  r.pass = found.empty();
  r.message = r.pass ? "no record for " + describe_filter(spec)
                     : std::to_string(found.size()) + " offending record(s) for " + describe_filter(spec);
  return r;
}

AssertionResult replica_count_at(const sim::Trace& trace, const Json& spec) {
  AssertionResult r;
  const Millis t = spec["t"].get<Millis>();
  const auto c = census_at(trace, t);
  if (!c) {
    r.message = "no kb.census record at or before t=" + std::to_string(t);
    return r;
  }
  r.cited = {*c + 1};
  const std::string guid = spec["guid"].get<std::string>();
  for (const auto& f : trace[*c].detail["facts"]) {
    if (f.value("guid", "") != guid) continue;
    const auto n = f.value("replicas", std::int64_t{0});
    r.pass = n == spec["k"].get<std::int64_t>();
    r.message = "census at t=" + std::to_string(trace[*c].t.millis) + " counts " + std::to_string(n) + " replica(s) of " + guid +
                ", expected " + std::to_string(spec["k"].get<std::int64_t>());
    return r;
  }
  r.message = "fact " + guid + " is not in the census at t=" + std::to_string(trace[*c].t.millis);
  return r;
}

AssertionResult constraint_satisfied_by(const sim::Trace& trace, const Json& spec) {
  AssertionResult r;
  const Json& c = spec["constraint"];
  const Millis t = spec["t"].get<Millis>();
  if (c["kind"] == "min_instances") {
    const auto n = c["n"].get<std::size_t>();
    std::size_t have = 0;
    std::optional<std::size_t> last;
    for (const auto& p : instance_series(trace, c)) {
      if (p.t > t) break;
      have = p.count;
      last = p.record;
    }
    if (last) r.cited = {*last + 1};
    r.pass = have >= n;
    r.message = std::to_string(have) + " live " + c["component_type"].get<std::string>() + " instance(s) in region " +
                c["region"].get<std::string>() + " at t=" + std::to_string(t) + ", need " + std::to_string(n);
    return r;
  }
  // replica_count: every fact of the kind meets k in the latest census.
  const auto at = census_at(trace, t);
  if (!at) {
    r.message = "no kb.census record at or before t=" + std::to_string(t);
    return r;
  }
  r.cited = {*at + 1};
  const std::string kind = c["fact_kind"].get<std::string>();
  const auto k = c["k"].get<std::int64_t>();
  std::size_t facts = 0, short_of = 0;
  for (const auto& f : trace[*at].detail["facts"]) {
    if (f.value("kind", "") != kind) continue;
    ++facts;
    short_of += f.value("replicas", std::int64_t{0}) < k;
  }
  r.pass = facts > 0 && short_of == 0;
  r.message = std::to_string(facts - short_of) + " of " + std::to_string(facts) + " '" + kind + "' fact(s) have >= " +
              std::to_string(k) + " replicas at t=" + std::to_string(trace[*at].t.millis);
  return r;
}

AssertionResult metric_bound(const Json& metrics, const Json& spec) {
  AssertionResult r;
  const std::string name = spec["name"].get<std::string>();
  const auto v = metric_value(metrics, name);
  if (!v) {
    r.message = "no numeric metric '" + name + "'";
    return r;
  }
  pubsub::Constraint c;
  c.name = name;
  c.op = *pubsub::parse_op(spec["op"].get<std::string>());
  c.value = TypedValue::from_json(spec["value"]);
  r.pass = pubsub::holds(c, TypedValue(*v));
  std::ostringstream os;
  os << name << " = " << *v << ", bound " << spec["op"].get<std::string>() << " " << spec["value"].dump();
  r.message = os.str();
  return r;
}

}  // namespace

Json AssertionResult::to_json() const {
  return Json{{"label", label}, {"kind", kind}, {"pass", pass}, {"message", message}, {"cited_lines", cited}};
}

bool Report::all_passed() const {
  for (const auto& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

Json Report::to_json() const {
  Json j = Json::array();
  for (const auto& r : results) j.push_back(r.to_json());
  return Json{{"passed", all_passed()}, {"results", std::move(j)}};
}

std::string Report::to_text() const {
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.pass ? "PASS " : "FAIL ") << r.label << ": " << r.message;
    if (!r.cited.empty()) {
      os << " [trace line";
      if (r.cited.size() > 1) os << "s";
      for (std::size_t i = 0; i < r.cited.size(); ++i) os << (i ? ", " : " ") << r.cited[i];
      os << "]";
    }
    os << "\n";
  }
  return os.str();
}

Report assert_outcomes(const sim::Trace& trace, const std::vector<Assertion>& assertions) {
  Report report;
  std::optional<Json> metrics;
  for (const auto& a : assertions) {
    AssertionResult r;
    switch (a.kind) {
      case Assertion::Kind::EventEmitted: r = event_emitted(trace, a.spec); break;
      case Assertion::Kind::NoEvent: r = no_event(trace, a.spec); break;
      case Assertion::Kind::ReplicaCountAt: r = replica_count_at(trace, a.spec); break;
      case Assertion::Kind::ConstraintSatisfiedBy: r = constraint_satisfied_by(trace, a.spec); break;
      case Assertion::Kind::MetricBound:
        if (!metrics) metrics = stats(trace);
        r = metric_bound(*metrics, a.spec);
        break;
    }
    r.label = a.label;
    r.kind = Assertion::kind_name(a.kind);
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace ctxmatch::harness
