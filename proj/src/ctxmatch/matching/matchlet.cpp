#include "ctxmatch/matching/matchlet.hpp"

#include <cstdio>
#include <regex>
#include <set>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::matching {

namespace {

bool is_ref_string(const std::string& s) { return s.size() > 3 && s.rfind("${", 0) == 0 && s.back() == '}' && s.find("${", 2) == std::string::npos; }

// Every ${...} occurrence inside `s`.
std::vector<std::string> embedded_refs(const std::string& s) {
  std::vector<std::string> out;
  static const std::regex re(R"(\$\{([^}]*)\})");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back((*it)[1].str());
  }
  return out;
}

class Validator {
 public:
  void declare(const std::string& var, const std::string& where) {
    if (var.empty() || var.find('.') != std::string::npos) throw InvalidArgument(where + ": invalid variable name '" + var + "'");
    if (!vars_.insert(var).second) throw InvalidArgument(where + ": duplicate variable '" + var + "'");
  }
  void need(const Ref& r, const std::string& where) const {
    if (!vars_.count(r.var)) throw InvalidArgument(where + ": unknown variable '" + r.var + "'");
  }
  void need(const Operand& o, const std::string& where) const {
    if (o.ref) need(*o.ref, where);
  }
  void need_embedded(const Json& j, const std::string& where) const {
    if (j.is_string()) {
      for (const auto& r : embedded_refs(j.get<std::string>())) need(Ref::parse(r), where);
    } else if (j.is_object() || j.is_array()) {
      for (const auto& v : j) need_embedded(v, where);
    }
  }

 private:
  std::set<std::string> vars_;
};

template <typename F>
auto at_field(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(where + ": " + e.what());
  } catch (const Json::exception& e) {
    throw InvalidArgument(where + ": " + e.what());
  }
}

pubsub::Op parse_op_or_throw(const Json& j) {
  if (!j.is_string()) throw InvalidArgument("operator must be a string");
  auto op = pubsub::parse_op(j.get<std::string>());
  if (!op) throw InvalidArgument("unknown operator '" + j.get<std::string>() + "'");
  return *op;
}

void check_op_operand(pubsub::Op op, const Operand& o) {
  if (o.ref) return;  // checked when evaluated
  pubsub::Constraint c{"_", op, o.constant};
  if (auto problem = pubsub::check_constraint(c); !problem.empty()) throw InvalidArgument(problem);
}

Guard parse_guard(const Json& j) {
  if (!j.is_object() || j.size() != 1) throw InvalidArgument("expected a single-key object such as {\"cmp\": [...]}");
  const auto& [name, args] = *j.items().begin();
  Guard g;
  if (name == "cmp") {
    if (!args.is_array() || args.size() != 3) throw InvalidArgument("cmp expects [lhs, op, rhs]");
    g.kind = Guard::Kind::Cmp;
    g.a = Ref::parse(args[0].get<std::string>());
    g.op = parse_op_or_throw(args[1]);
    g.rhs = Operand::from_json(args[2]);
    check_op_operand(g.op, g.rhs);
  } else if (name == "geo_within") {
    if (!args.is_array() || args.size() != 3 || !args[2].is_number()) throw InvalidArgument("geo_within expects [a, b, radius_m]");
    g.kind = Guard::Kind::GeoWithin;
    g.a = Ref::parse(args[0].get<std::string>());
    g.b = Ref::parse(args[1].get<std::string>());
    g.radius_m = args[2].get<double>();
    if (g.radius_m < 0) throw InvalidArgument("radius_m must be >= 0");
  } else if (name == "time_diff") {
    if (!args.is_array() || args.size() != 4 || !args[3].is_number_integer()) {
      throw InvalidArgument("time_diff expects [a, b, op, millis]");
    }
    g.kind = Guard::Kind::TimeDiff;
    g.a = Ref::parse(args[0].get<std::string>());
    g.b = Ref::parse(args[1].get<std::string>());
    g.op = parse_op_or_throw(args[2]);
    if (!pubsub::is_ordering(g.op) && g.op != pubsub::Op::Eq && g.op != pubsub::Op::Ne) {
      throw InvalidArgument("time_diff needs a comparison operator");
    }
    g.millis = args[3].get<Millis>();
  } else if (name == "reachable") {
    if (!args.is_object() || !args.contains("from") || !args.contains("to") || !args.contains("deadline")) {
      throw InvalidArgument("reachable expects {from, to, deadline, speed_kmh?, daily?}");
    }
    g.kind = Guard::Kind::Reachable;
    g.a = Ref::parse(args["from"].get<std::string>());
    g.b = Ref::parse(args["to"].get<std::string>());
    g.rhs = Operand::from_json(args["deadline"]);
    if (!g.rhs.ref && !g.rhs.constant.is_numeric()) throw InvalidArgument("deadline must be numeric millis");
    if (args.contains("speed_kmh")) {
      g.speed_kmh = args["speed_kmh"].get<double>();
      if (*g.speed_kmh <= 0) throw InvalidArgument("speed_kmh must be > 0");
    }
    if (args.contains("daily")) g.daily = args["daily"].get<bool>();
  } else {
    throw InvalidArgument("unknown guard '" + name + "'");
  }
  return g;
}

void validate_template_value(const Json& v) {
  if (v.is_object() && v.contains("slot_after_now")) {
    const Json& s = v["slot_after_now"];
    if (!s.is_object() || !s.contains("slot_ms") || !s["slot_ms"].is_number_integer() || s["slot_ms"].get<Millis>() <= 0) {
      throw InvalidArgument("slot_after_now needs a positive integer slot_ms");
    }
    if (s.contains("lead_ms") && !s["lead_ms"].is_number_integer()) throw InvalidArgument("lead_ms must be an integer");
    if (s.contains("format")) {
      const auto f = s["format"].get<std::string>();
      if (f != "time_of_day" && f != "millis") throw InvalidArgument("format must be time_of_day or millis");
    }
    return;
  }
  if (v.is_string()) return;
  TypedValue::from_json(v);  // throws on unsupported literals
}

}  // namespace

Ref Ref::parse(const std::string& s) {
  std::string body = s;
  if (is_ref_string(body)) body = body.substr(2, body.size() - 3);
  const auto dot = body.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == body.size()) {
    throw InvalidArgument("expected a reference of the form var.attr, got '" + s + "'");
  }
  return Ref{body.substr(0, dot), body.substr(dot + 1)};
}

Operand Operand::from_json(const Json& j) {
  Operand o;
  if (j.is_string() && is_ref_string(j.get<std::string>())) {
    o.ref = Ref::parse(j.get<std::string>());
  } else {
    o.constant = TypedValue::from_json(j);
  }
  return o;
}

std::string Guard::describe() const {
  switch (kind) {
    case Kind::Cmp: return "cmp(" + a.text() + ")";
    case Kind::GeoWithin: return "geo_within(" + a.text() + ", " + b.text() + ")";
    case Kind::TimeDiff: return "time_diff(" + a.text() + ", " + b.text() + ")";
    case Kind::Reachable: return "reachable(" + a.text() + ", " + b.text() + ")";
  }
  return "guard";
}

MatchletDef MatchletDef::from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("matchlet must be an object");
  MatchletDef m;
  m.source = j;
  Validator v;
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
    throw InvalidArgument("id: expected a non-empty string");
  }
  m.id = j["id"].get<std::string>();
  if (j.contains("window_ms")) {
    if (!j["window_ms"].is_number_integer() || j["window_ms"].get<Millis>() < 0) {
      throw InvalidArgument("window_ms: expected a non-negative integer");
    }
    m.window_ms = j["window_ms"].get<Millis>();
  }

  if (!j.contains("patterns") || !j["patterns"].is_array() || j["patterns"].empty()) {
    throw InvalidArgument("patterns: expected a non-empty array");
  }
  for (std::size_t i = 0; i < j["patterns"].size(); ++i) {
    const std::string where = "patterns[" + std::to_string(i) + "]";
    const Json& p = j["patterns"][i];
    if (!p.is_object() || !p.contains("var") || !p["var"].is_string()) throw InvalidArgument(where + ": expected {var, type, constraints}");
    EventPattern ep;
    ep.var = p["var"].get<std::string>();
    v.declare(ep.var, where);
    ep.sub = at_field(where, [&] { return pubsub::Subscription::from_json(p); });
    m.patterns.push_back(std::move(ep));
  }

  if (j.contains("facts")) {
    if (!j["facts"].is_array()) throw InvalidArgument("facts: expected an array");
    for (std::size_t i = 0; i < j["facts"].size(); ++i) {
      const std::string where = "facts[" + std::to_string(i) + "]";
      const Json& f = j["facts"][i];
      if (!f.is_object() || !f.contains("var") || !f.contains("kind")) throw InvalidArgument(where + ": expected {var, kind, where}");
      FactPattern fp;
      fp.var = f["var"].get<std::string>();
      fp.kind = f["kind"].get<std::string>();
      if (f.contains("where")) {
        if (!f["where"].is_array()) throw InvalidArgument(where + ".where: expected an array");
        for (std::size_t c = 0; c < f["where"].size(); ++c) {
          const std::string cw = where + ".where[" + std::to_string(c) + "]";
          const Json& t = f["where"][c];
          if (!t.is_array() || t.size() < 2 || t.size() > 3 || !t[0].is_string()) throw InvalidArgument(cw + ": expected [name, op, value]");
          FactConstraint fc;
          fc.name = t[0].get<std::string>();
          fc.op = at_field(cw, [&] { return parse_op_or_throw(t[1]); });
          if (fc.op != pubsub::Op::Exists) {
            if (t.size() != 3) throw InvalidArgument(cw + ": missing value");
            fc.rhs = at_field(cw, [&] { return Operand::from_json(t[2]); });
            at_field(cw, [&] { check_op_operand(fc.op, fc.rhs); return 0; });
          }
          // Left-to-right binding: only variables declared so far are visible.
          v.need(fc.rhs, cw);
          fp.constraints.push_back(std::move(fc));
        }
      }
      v.declare(fp.var, where);
      m.facts.push_back(std::move(fp));
    }
  }

  if (j.contains("guards")) {
    if (!j["guards"].is_array()) throw InvalidArgument("guards: expected an array");
    for (std::size_t i = 0; i < j["guards"].size(); ++i) {
      const std::string where = "guards[" + std::to_string(i) + "]";
      Guard g = at_field(where, [&] { return parse_guard(j["guards"][i]); });
      v.need(g.a, where);
      if (g.kind != Guard::Kind::Cmp) v.need(g.b, where);
      v.need(g.rhs, where);
      m.guards.push_back(std::move(g));
    }
  }

  if (!j.contains("emit")) throw InvalidArgument("emit: required");
  const Json emits = j["emit"].is_array() ? j["emit"] : Json::array({j["emit"]});
  if (emits.empty()) throw InvalidArgument("emit: expected at least one template");
  for (std::size_t i = 0; i < emits.size(); ++i) {
    const std::string where = "emit[" + std::to_string(i) + "]";
    const Json& t = emits[i];
    if (!t.is_object() || !t.contains("type") || !t["type"].is_string()) throw InvalidArgument(where + ": expected {type, attributes}");
    EmitTemplate et;
    et.type = t["type"].get<std::string>();
    if (t.contains("attributes")) {
      if (!t["attributes"].is_object()) throw InvalidArgument(where + ".attributes: expected an object");
      for (const auto& [name, val] : t["attributes"].items()) {
        const std::string aw = where + ".attributes." + name;
        at_field(aw, [&] { validate_template_value(val); return 0; });
        v.need_embedded(val, aw);
        et.attributes.emplace_back(name, val);
      }
    }
    m.emits.push_back(std::move(et));
  }

  if (j.contains("store_fact")) {
    const Json& s = j["store_fact"];
    if (!s.is_object() || !s.contains("kind") || !s["kind"].is_string()) throw InvalidArgument("store_fact: expected {kind, subject?}");
    StoreFactSpec sf{s["kind"].get<std::string>(), std::nullopt};
    if (s.contains("subject")) {
      sf.subject = s["subject"];
      v.need_embedded(s["subject"], "store_fact.subject");
    }
    m.store_fact = std::move(sf);
  }
  return m;
}

std::vector<std::string> MatchletDef::pattern_types() const {
  std::vector<std::string> out;
  for (const auto& p : patterns) out.push_back(p.sub.type_pattern);
  return out;
}

std::vector<std::string> MatchletDef::emitted_types() const {
  std::vector<std::string> out;
  for (const auto& e : emits) out.push_back(e.type);
  return out;
}

Millis Clock::time_of_day(SimTime t) const {
  const Millis x = (t.millis + epoch_offset_in_day) % kDay;
  return x < 0 ? x + kDay : x;
}

SimTime Clock::day_start(SimTime t) const { return SimTime{t.millis - time_of_day(t)}; }

std::string Clock::format_time_of_day(Millis tod) {
  const Millis minutes = tod / kMinute;
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d:%02d", static_cast<int>(minutes / 60 % 24), static_cast<int>(minutes % 60));
  return buf;
}

std::optional<TypedValue> resolve(const Ref& ref, const Binding& b, const Clock& clock) {
  if (auto it = b.events.find(ref.var); it != b.events.end()) {
    const Event& e = *it->second;
    if (ref.attr == "@time") return TypedValue(e.timestamp.millis);
    if (ref.attr == "@time_of_day") return TypedValue(clock.time_of_day(e.timestamp));
    if (ref.attr == "@type") return TypedValue(e.type_name);
    if (const TypedValue* v = e.find(ref.attr)) return *v;
    return std::nullopt;
  }
  if (auto it = b.facts.find(ref.var); it != b.facts.end()) {
    const knowledge::Fact& f = *it->second;
    if (ref.attr == "@guid") return TypedValue(f.guid().hex());
    if (ref.attr == "@kind") return TypedValue(f.kind);
    if (ref.attr == "@time") return TypedValue(f.created_at.millis);
    if (const TypedValue* v = f.body.find(ref.attr)) return *v;
    if (ref.attr == "subject" && f.subject) return TypedValue(*f.subject);
    return std::nullopt;
  }
  return std::nullopt;
}

std::optional<TypedValue> resolve(const Operand& op, const Binding& b, const Clock& clock) {
  if (op.ref) return resolve(*op.ref, b, clock);
  return op.constant;
}

}  // namespace ctxmatch::matching
