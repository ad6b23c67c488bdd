#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxmatch/core/event.hpp"
#include "ctxmatch/core/json_types.hpp"
#include "ctxmatch/core/value.hpp"

namespace ctxmatch::pubsub {

enum class Op { Eq, Ne, Lt, Le, Gt, Ge, Prefix, Suffix, Substring, Exists };

std::string_view op_name(Op op);
std::optional<Op> parse_op(std::string_view name);
bool is_ordering(Op op);
bool is_string_op(Op op);

struct Constraint {
  std::string name;
  Op op = Op::Exists;
  /// Ignored for Exists.
  TypedValue value;
};

/// Whether `c` holds for attribute value `v` (the attribute is present).
bool holds(const Constraint& c, const TypedValue& v);

/// Empty string when well-formed, otherwise a description of the problem.
std::string check_constraint(const Constraint& c);

/// Conjunction of attribute constraints over events whose type matches
/// `type_pattern` ("*" admits every type).
struct Subscription {
  static constexpr std::string_view kAnyType = "*";

  std::string type_pattern{kAnyType};
  std::vector<Constraint> constraints;

  bool admits_type(std::string_view type) const { return type_pattern == kAnyType || type_pattern == type; }

  /// {"type": ..., "constraints": [[name, op, value], ...]}; exists takes no value.
  Json to_json() const;
  /// Throws InvalidArgument with a field-level message when malformed.
  static Subscription from_json(const Json& j);
};

/// True iff `e` has an admitted type and satisfies every constraint. A
/// constraint on a missing attribute fails, except `exists`.
bool match(const Subscription& s, const Event& e);

/// Sound subsumption: true implies every event matching s2 matches s1.
/// May return false for some subsumed pairs.
bool covers(const Subscription& s1, const Subscription& s2);

}  // namespace ctxmatch::pubsub
