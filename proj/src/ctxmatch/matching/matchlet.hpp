#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxmatch/core/event.hpp"
#include "ctxmatch/knowledge/fact.hpp"
#include "ctxmatch/pubsub/subscription.hpp"

namespace ctxmatch::matching {

/// "var.attr". Pseudo-attributes: @time, @time_of_day, @type (events);
/// @guid, @kind, @time (facts). For facts, "subject" falls back to the
/// fact's subject when the body has no such attribute.
struct Ref {
  std::string var;
  std::string attr;

  std::string text() const { return var + "." + attr; }
  /// Accepts "var.attr" or "${var.attr}". Throws InvalidArgument.
  static Ref parse(const std::string& s);
};

/// Either a reference ("${var.attr}") or a typed constant.
struct Operand {
  std::optional<Ref> ref;
  TypedValue constant;

  static Operand from_json(const Json& j);
};

struct EventPattern {
  std::string var;
  pubsub::Subscription sub;
};

struct FactConstraint {
  std::string name;
  pubsub::Op op = pubsub::Op::Eq;
  Operand rhs;
};

/// Joins facts of `kind` whose body satisfies every constraint; constraint
/// operands may refer to variables bound earlier.
struct FactPattern {
  std::string var;
  std::string kind;
  std::vector<FactConstraint> constraints;
};

struct Guard {
  enum class Kind { Cmp, GeoWithin, TimeDiff, Reachable };

  Kind kind = Kind::Cmp;
  Ref a;  // CMP lhs, GEO_WITHIN/TIME_DIFF first, REACHABLE from
  Ref b;  // GEO_WITHIN/TIME_DIFF second, REACHABLE to
  pubsub::Op op = pubsub::Op::Eq;
  Operand rhs;  // CMP right-hand side, REACHABLE deadline
  double radius_m = 0;
  Millis millis = 0;
  std::optional<double> speed_kmh;
  /// REACHABLE: the deadline is a time of day on the current day.
  bool daily = false;

  std::string describe() const;
};

/// Attribute values: literals, "${var.attr}" (typed copy), strings with
/// embedded ${...} (interpolated), or {"slot_after_now": {...}}.
struct EmitTemplate {
  std::string type;
  std::vector<std::pair<std::string, Json>> attributes;
};

struct StoreFactSpec {
  std::string kind;
  std::optional<Json> subject;
};

struct MatchletDef {
  std::string id;
  std::vector<EventPattern> patterns;
  Millis window_ms = 0;
  std::vector<FactPattern> facts;
  std::vector<Guard> guards;
  std::vector<EmitTemplate> emits;
  std::optional<StoreFactSpec> store_fact;
  /// The definition as parsed, for bundles and reports.
  Json source;

  /// Parses and validates. Errors name the offending field, e.g.
  /// "guards[2]: unknown variable 'shop'". Throws InvalidArgument.
  static MatchletDef from_json(const Json& j);

  std::vector<std::string> pattern_types() const;
  std::vector<std::string> emitted_types() const;
};

/// Bound values for one candidate correlation.
struct Binding {
  std::map<std::string, EventPtr> events;
  std::map<std::string, std::shared_ptr<const knowledge::Fact>> facts;
};

/// Shared time conventions: the scenario epoch's offset into its day, so
/// that time-of-day values can be derived from sim time.
struct Clock {
  Millis epoch_offset_in_day = 0;

  Millis time_of_day(SimTime t) const;
  SimTime day_start(SimTime t) const;
  static std::string format_time_of_day(Millis tod);
};

std::optional<TypedValue> resolve(const Ref& ref, const Binding& b, const Clock& clock);
std::optional<TypedValue> resolve(const Operand& op, const Binding& b, const Clock& clock);

}  // namespace ctxmatch::matching
