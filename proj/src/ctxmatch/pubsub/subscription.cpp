#include "ctxmatch/pubsub/subscription.hpp"

#include <array>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::pubsub {

namespace {

constexpr std::array<std::string_view, 10> kOpNames = {"eq", "ne", "lt", "le", "gt", "ge",
                                                      "prefix", "suffix", "substring", "exists"};

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool ends_with(std::string_view s, std::string_view x) {
  return s.size() >= x.size() && s.substr(s.size() - x.size()) == x;
}

int compare_numbers(const TypedValue& a, const TypedValue& b) {
  if (a.kind() == TypedValue::Kind::Integer && b.kind() == TypedValue::Kind::Integer) {
    return a.as_int() < b.as_int() ? -1 : (a.as_int() > b.as_int() ? 1 : 0);
  }
  const double x = a.as_number(), y = b.as_number();
  return x < y ? -1 : (x > y ? 1 : 0);
}

// Numeric interval admitted by an ordering or numeric-equality constraint.
struct Interval {
  std::optional<TypedValue> lo, hi;
  bool lo_open = false, hi_open = false;
};

std::optional<Interval> interval_of(const Constraint& c) {
  if (!c.value.is_numeric()) return std::nullopt;
  Interval iv;
  switch (c.op) {
    case Op::Lt: iv.hi = c.value; iv.hi_open = true; break;
    case Op::Le: iv.hi = c.value; break;
    case Op::Gt: iv.lo = c.value; iv.lo_open = true; break;
    case Op::Ge: iv.lo = c.value; break;
    case Op::Eq: iv.lo = c.value; iv.hi = c.value; break;
    default: return std::nullopt;
  }
  return iv;
}

// inner ⊆ outer.
bool contained(const Interval& inner, const Interval& outer) {
  if (outer.lo) {
    if (!inner.lo) return false;
    const int cmp = compare_numbers(*inner.lo, *outer.lo);
    if (cmp < 0) return false;
    if (cmp == 0 && outer.lo_open && !inner.lo_open) return false;
  }
  if (outer.hi) {
    if (!inner.hi) return false;
    const int cmp = compare_numbers(*inner.hi, *outer.hi);
    if (cmp > 0) return false;
    if (cmp == 0 && outer.hi_open && !inner.hi_open) return false;
  }
  return true;
}

bool excludes(const Interval& iv, const TypedValue& v) {
  if (iv.lo) {
    const int cmp = compare_numbers(v, *iv.lo);
    if (cmp < 0 || (cmp == 0 && iv.lo_open)) return true;
  }
  if (iv.hi) {
    const int cmp = compare_numbers(v, *iv.hi);
    if (cmp > 0 || (cmp == 0 && iv.hi_open)) return true;
  }
  return false;
}

bool same_class(const TypedValue& a, const TypedValue& b) {
  return (a.is_numeric() && b.is_numeric()) || a.kind() == b.kind();
}

// Whether every value satisfying c2 also satisfies c1 (same attribute).
bool implies(const Constraint& c2, const Constraint& c1) {
  if (c1.op == Op::Exists) return true;
  if (c2.op == Op::Exists) return false;
  // An equality pins the value, up to numeric representation.
  if (c2.op == Op::Eq) return holds(c1, c2.value);

  if (c2.op == Op::Ne) {
    return c1.op == Op::Ne && same_class(c1.value, c2.value) && values_equal(c1.value, c2.value);
  }

  if (auto i2 = interval_of(c2)) {
    if (auto i1 = interval_of(c1); i1 && c1.op != Op::Eq) return contained(*i2, *i1);
    if (c1.op == Op::Ne && c1.value.is_numeric()) return excludes(*i2, c1.value);
    return false;
  }

  // c2 is a string operator; every satisfying value is a string containing
  // c2's constant in the given position.
  const std::string& k2 = c2.value.as_string();
  if (c1.op == Op::Ne) {
    return c1.value.is_string() && !holds(c2, c1.value);
  }
  if (!is_string_op(c1.op)) return false;
  const std::string& k1 = c1.value.as_string();
  if (k1.empty()) return true;
  switch (c1.op) {
    case Op::Prefix: return c2.op == Op::Prefix && starts_with(k2, k1);
    case Op::Suffix: return c2.op == Op::Suffix && ends_with(k2, k1);
    case Op::Substring: return k2.find(k1) != std::string::npos;
    default: return false;
  }
}

}  // namespace

std::string_view op_name(Op op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<Op> parse_op(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<Op>(i);
  }
  return std::nullopt;
}

bool is_ordering(Op op) { return op == Op::Lt || op == Op::Le || op == Op::Gt || op == Op::Ge; }
bool is_string_op(Op op) { return op == Op::Prefix || op == Op::Suffix || op == Op::Substring; }

bool holds(const Constraint& c, const TypedValue& v) {
  switch (c.op) {
    case Op::Exists: return true;
    case Op::Eq: return comparable(v, c.value) && values_equal(v, c.value);
    case Op::Ne: return comparable(v, c.value) && !values_equal(v, c.value);
    case Op::Lt: return v.is_numeric() && compare_numbers(v, c.value) < 0;
    case Op::Le: return v.is_numeric() && compare_numbers(v, c.value) <= 0;
    case Op::Gt: return v.is_numeric() && compare_numbers(v, c.value) > 0;
    case Op::Ge: return v.is_numeric() && compare_numbers(v, c.value) >= 0;
    case Op::Prefix: return v.is_string() && starts_with(v.as_string(), c.value.as_string());
    case Op::Suffix: return v.is_string() && ends_with(v.as_string(), c.value.as_string());
    case Op::Substring: return v.is_string() && v.as_string().find(c.value.as_string()) != std::string::npos;
  }
  return false;
}

std::string check_constraint(const Constraint& c) {
  if (c.name.empty()) return "empty attribute name";
  if (is_ordering(c.op) && !c.value.is_numeric()) {
    return "operator " + std::string(op_name(c.op)) + " needs a numeric constant";
  }
  if (is_string_op(c.op) && !c.value.is_string()) {
    return "operator " + std::string(op_name(c.op)) + " needs a string constant";
  }
  return {};
}

Json Subscription::to_json() const {
  Json cs = Json::array();
  for (const auto& c : constraints) {
    Json t = Json::array({c.name, std::string(op_name(c.op))});
    if (c.op != Op::Exists) t.push_back(c.value.to_json());
    cs.push_back(std::move(t));
  }
  Json j = Json::object();
  j["type"] = type_pattern;
  j["constraints"] = std::move(cs);
  return j;
}

Subscription Subscription::from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("subscription must be an object");
  Subscription s;
  if (j.contains("type")) {
    if (!j["type"].is_string() || j["type"].get<std::string>().empty()) {
      throw InvalidArgument("type: expected a non-empty string");
    }
    s.type_pattern = j["type"].get<std::string>();
  }
  if (!j.contains("constraints")) return s;
  const Json& cs = j["constraints"];
  if (!cs.is_array()) throw InvalidArgument("constraints: expected an array");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const std::string where = "constraints[" + std::to_string(i) + "]";
    const Json& t = cs[i];
    if (!t.is_array() || t.size() < 2 || t.size() > 3 || !t[0].is_string() || !t[1].is_string()) {
      throw InvalidArgument(where + ": expected [name, op, value]");
    }
    Constraint c;
    c.name = t[0].get<std::string>();
    const auto op = parse_op(t[1].get<std::string>());
    if (!op) throw InvalidArgument(where + ": unknown operator '" + t[1].get<std::string>() + "'");
    c.op = *op;
    if (c.op != Op::Exists) {
      if (t.size() != 3) throw InvalidArgument(where + ": operator " + t[1].get<std::string>() + " needs a value");
      try {
        c.value = TypedValue::from_json(t[2]);
      } catch (const Error& e) {
        throw InvalidArgument(where + ": " + e.what());
      }
    }
    if (auto problem = check_constraint(c); !problem.empty()) throw InvalidArgument(where + ": " + problem);
    s.constraints.push_back(std::move(c));
  }
  return s;
}

bool match(const Subscription& s, const Event& e) {
  if (!s.admits_type(e.type_name)) return false;
  for (const auto& c : s.constraints) {
    const TypedValue* v = e.find(c.name);
    if (v == nullptr || !holds(c, *v)) return false;
  }
  return true;
}

bool covers(const Subscription& s1, const Subscription& s2) {
  if (s1.type_pattern != Subscription::kAnyType && s1.type_pattern != s2.type_pattern) return false;
  for (const auto& c1 : s1.constraints) {
    bool found = false;
    for (const auto& c2 : s2.constraints) {
      if (c2.name == c1.name && implies(c2, c1)) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace ctxmatch::pubsub
