#include "ctxmatch/harness/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "ctxmatch/core/error.hpp"
#include "ctxmatch/matching/matchlet.hpp"
#include "ctxmatch/pubsub/subscription.hpp"

namespace ctxmatch::harness {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ScenarioError(path.empty() ? what : path + ": " + what);
}

std::string at(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Typed access to one JSON object with path-qualified errors.
class Obj {
 public:
  Obj(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const char* k) const { return j_.contains(k) && !j_[k].is_null(); }
  const Json& raw(const char* k) const {
    if (!has(k)) fail(at(path_, k), "is required");
    return j_[k];
  }

  std::string str(const char* k) const {
    const Json& v = raw(k);
    if (!v.is_string() || v.get<std::string>().empty()) fail(at(path_, k), "expected a non-empty string");
    return v.get<std::string>();
  }
  std::string str(const char* k, const std::string& def) const { return has(k) ? str(k) : def; }

  std::int64_t integer(const char* k) const {
    const Json& v = raw(k);
    if (!v.is_number_integer()) fail(at(path_, k), "expected an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer(const char* k, std::int64_t def) const { return has(k) ? integer(k) : def; }

  double number(const char* k, double def) const {
    if (!has(k)) return def;
    if (!j_[k].is_number()) fail(at(path_, k), "expected a number");
    return j_[k].get<double>();
  }

  bool boolean(const char* k, bool def) const {
    if (!has(k)) return def;
    if (!j_[k].is_boolean()) fail(at(path_, k), "expected true or false");
    return j_[k].get<bool>();
  }

  const Json& array(const char* k) const {
    const Json& v = raw(k);
    if (!v.is_array()) fail(at(path_, k), "expected an array");
    return v;
  }

  void only(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : j_.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
        fail(at(path_, k), "unknown field");
      }
    }
  }

 private:
  const Json& j_;
  std::string path_;
};

GeoPoint geo(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) fail(path, "expected [lat, lon]");
  const GeoPoint g{j[0].get<double>(), j[1].get<double>()};
  if (g.lat < -90 || g.lat > 90 || g.lon < -180 || g.lon > 180) fail(path, "coordinate out of range");
  return g;
}

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::int64_t days_from_civil(int y, unsigned m, unsigned d, const std::string& text) {
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw InvalidArgument("invalid date in '" + text + "'");
  return std::chrono::sys_days(ymd).time_since_epoch().count();
}

Millis clock_millis(const std::string& hh, const std::string& mm, const std::string& ss, const std::string& text) {
  const int h = std::stoi(hh), m = std::stoi(mm), s = ss.empty() ? 0 : std::stoi(ss);
  if (h > 23 || m > 59 || s > 59) throw InvalidArgument("invalid time of day in '" + text + "'");
  return h * kHour + m * kMinute + s * kSecond;
}

const std::regex& date_time_re() {
  static const std::regex re(R"((\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2})(?::(\d{2}))?)");
  return re;
}

const std::regex& time_re() {
  static const std::regex re(R"((\d{1,2}):(\d{2})(?::(\d{2}))?)");
  return re;
}

NodeDecl node_decl(const Obj& o, const std::string& name, const std::set<std::string>& regions) {
  NodeDecl n;
  n.name = name;
  n.id = guid_of("node:" + name);
  n.region = o.str("region");
  if (!regions.empty() && !regions.count(n.region)) fail(at(o.path(), "region"), "undeclared region '" + n.region + "'");
  if (o.has("coords")) n.coords = geo(o.raw("coords"), at(o.path(), "coords"));
  n.storage_slots = static_cast<int>(o.integer("storage_slots", 4));
  n.compute_slots = static_cast<int>(o.integer("compute_slots", 4));
  if (n.storage_slots < 0 || n.compute_slots < 0) fail(o.path(), "slots must be non-negative");
  if (o.has("allow")) {
    const Json& a = o.array("allow");
    std::set<std::string> types;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_string()) fail(at(at(o.path(), "allow"), i), "expected a component type");
      types.insert(a[i].get<std::string>());
    }
    n.allow = std::move(types);
  }
  return n;
}

Policies policies(const Obj& o) {
  o.only({"k", "access_threshold", "access_window_ms", "heal_period_ms", "heartbeat_ms", "fail_timeout_ms",
          "walking_speed_kmh", "cache_fraction", "caching", "on_path_caching", "backup", "latency_reduction",
          "announce_facts", "covering", "storelet_gated_storage", "census_period_ms"});
  Policies p;
  auto positive = [&](const char* k, std::int64_t def) {
    const auto v = o.integer(k, def);
    if (v <= 0) fail(at(o.path(), k), "must be positive");
    return v;
  };
  p.kb.k = static_cast<int>(positive("k", p.kb.k));
  p.kb.access_threshold = static_cast<int>(positive("access_threshold", p.kb.access_threshold));
  p.kb.access_window = positive("access_window_ms", p.kb.access_window);
  p.kb.heal_period = positive("heal_period_ms", p.kb.heal_period);
  p.kb.cache_fraction = o.number("cache_fraction", p.kb.cache_fraction);
  if (p.kb.cache_fraction < 0 || p.kb.cache_fraction > 1) fail(at(o.path(), "cache_fraction"), "must be within [0, 1]");
  p.kb.caching = o.boolean("caching", p.kb.caching);
  p.kb.on_path_caching = o.boolean("on_path_caching", p.kb.on_path_caching);
  p.kb.backup = o.boolean("backup", p.kb.backup);
  p.kb.latency_reduction = o.boolean("latency_reduction", p.kb.latency_reduction);
  p.kb.announce_facts = o.boolean("announce_facts", p.kb.announce_facts);
  p.deploy.heartbeat_period = positive("heartbeat_ms", p.deploy.heartbeat_period);
  p.deploy.fail_timeout = positive("fail_timeout_ms", p.deploy.fail_timeout);
  p.deploy.storelet_gated_storage = o.boolean("storelet_gated_storage", p.deploy.storelet_gated_storage);
  p.walking_speed_kmh = o.number("walking_speed_kmh", p.walking_speed_kmh);
  if (p.walking_speed_kmh <= 0) fail(at(o.path(), "walking_speed_kmh"), "must be positive");
  p.covering = o.boolean("covering", p.covering);
  p.census_period = positive("census_period_ms", p.census_period);
  return p;
}

// Shared by EVENT_EMITTED and NO_EVENT.
Json event_filter(const Obj& o, const Epoch& epoch) {
  o.only({"kind", "label", "type", "attributes", "window", "source", "count"});
  Json spec = Json::object();
  spec["type"] = o.str("type");
  spec["attributes"] = Json::object();
  if (o.has("attributes")) {
    const Json& a = o.raw("attributes");
    if (!a.is_object()) fail(at(o.path(), "attributes"), "expected an object");
    for (const auto& [k, v] : a.items()) {
      try {
        spec["attributes"][k] = TypedValue::from_json(v).to_json();
      } catch (const Error& e) {
        fail(at(at(o.path(), "attributes"), k), e.what());
      }
    }
  }
  if (o.has("window")) {
    const Json& w = o.array("window");
    if (w.size() != 2) fail(at(o.path(), "window"), "expected [from, to]");
    Millis from = 0, to = 0;
    try {
      from = epoch.to_millis(w[0]);
      to = epoch.to_millis(w[1]);
    } catch (const Error& e) {
      fail(at(o.path(), "window"), e.what());
    }
    if (to < from) fail(at(o.path(), "window"), "window ends before it starts");
    spec["window"] = Json::array({from, to});
  }
  const std::string source = o.str("source", "match");
  if (source != "match" && source != "publish") fail(at(o.path(), "source"), "expected \"match\" or \"publish\"");
  spec["source"] = source;
  if (o.has("count")) {
    const auto c = o.integer("count");
    if (c < 0) fail(at(o.path(), "count"), "must be non-negative");
    spec["count"] = c;
  }
  return spec;
}

Assertion assertion(const Obj& o, const Scenario& s) {
  Assertion a;
  const std::string kind = o.str("kind");
  a.label = o.str("label", "");
  if (kind == "event_emitted" || kind == "no_event") {
    a.kind = kind == "event_emitted" ? Assertion::Kind::EventEmitted : Assertion::Kind::NoEvent;
    a.spec = event_filter(o, s.epoch);
  } else if (kind == "replica_count_at") {
    o.only({"kind", "label", "guid", "fact", "t", "k"});
    a.kind = Assertion::Kind::ReplicaCountAt;
    if (o.has("guid")) {
      const std::string hex = o.str("guid");
      try {
        a.spec["guid"] = Guid::parse(hex).hex();
      } catch (const Error& e) {
        fail(at(o.path(), "guid"), e.what());
      }
    } else {
      try {
        a.spec["guid"] = knowledge::Fact::from_json(o.raw("fact")).guid().hex();
      } catch (const ScenarioError&) {
        throw;
      } catch (const Error& e) {
        fail(at(o.path(), "fact"), e.what());
      }
    }
    try {
      a.spec["t"] = s.epoch.to_millis(o.raw("t"));
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      fail(at(o.path(), "t"), e.what());
    }
    a.spec["k"] = o.integer("k");
  } else if (kind == "constraint_satisfied_by") {
    o.only({"kind", "label", "constraint", "t"});
    a.kind = Assertion::Kind::ConstraintSatisfiedBy;
    const Json& c = o.raw("constraint");
    deploy::PlacementConstraint pc;
    if (c.is_number_integer()) {
      const auto i = c.get<std::int64_t>();
      if (i < 0 || static_cast<std::size_t>(i) >= s.constraints.size()) fail(at(o.path(), "constraint"), "no constraint with index " + std::to_string(i));
      pc = s.constraints[static_cast<std::size_t>(i)];
    } else {
      try {
        pc = deploy::PlacementConstraint::from_json(c);
      } catch (const Error& e) {
        fail(at(o.path(), "constraint"), e.what());
      }
    }
    if (pc.kind == deploy::PlacementConstraint::Kind::MaxLatency) {
      fail(at(o.path(), "constraint"), "max_latency constraints cannot be checked from a trace");
    }
    a.spec["constraint"] = pc.to_json();
    try {
      a.spec["t"] = s.epoch.to_millis(o.raw("t"));
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      fail(at(o.path(), "t"), e.what());
    }
  } else if (kind == "metric_bound") {
    o.only({"kind", "label", "name", "op", "value"});
    a.kind = Assertion::Kind::MetricBound;
    a.spec["name"] = o.str("name");
    const std::string op = o.str("op");
    const auto parsed = pubsub::parse_op(op);
    if (!parsed || !(pubsub::is_ordering(*parsed) || *parsed == pubsub::Op::Eq || *parsed == pubsub::Op::Ne)) {
      fail(at(o.path(), "op"), "expected one of eq, ne, lt, le, gt, ge");
    }
    a.spec["op"] = op;
    if (!o.raw("value").is_number()) fail(at(o.path(), "value"), "expected a number");
    a.spec["value"] = o.raw("value");
  } else {
    fail(at(o.path(), "kind"), "unknown assertion kind '" + kind + "'");
  }
  if (a.label.empty()) a.label = Assertion::kind_name(a.kind) + "#" + o.path().substr(o.path().find('[') + 1, o.path().find(']') - o.path().find('[') - 1);
  return a;
}

}  // namespace

Epoch Epoch::parse(const std::string& text) {
  std::smatch m;
  if (!std::regex_match(text, m, date_time_re())) throw InvalidArgument("expected YYYY-MM-DDTHH:MM[:SS], got '" + text + "'");
  Epoch e;
  e.day = days_from_civil(std::stoi(m[1]), static_cast<unsigned>(std::stoi(m[2])), static_cast<unsigned>(std::stoi(m[3])), text);
  e.offset_in_day = clock_millis(m[4], m[5], m[6], text);
  return e;
}

Millis Epoch::to_millis(const Json& value) const {
  if (value.is_number_integer()) {
    const auto v = value.get<std::int64_t>();
    if (v < 0) throw InvalidArgument("time " + std::to_string(v) + " is before the epoch");
    return v;
  }
  if (!value.is_string()) throw InvalidArgument("expected millis, \"HH:MM\" or a date-time");
  const std::string text = value.get<std::string>();
  std::smatch m;
  Millis t = 0;
  if (std::regex_match(text, m, time_re())) {
    t = clock_millis(m[1], m[2], m[3], text) - offset_in_day;
  } else if (std::regex_match(text, m, date_time_re())) {
    const auto d = days_from_civil(std::stoi(m[1]), static_cast<unsigned>(std::stoi(m[2])), static_cast<unsigned>(std::stoi(m[3])), text);
    t = (d - day) * kDay + clock_millis(m[4], m[5], m[6], text) - offset_in_day;
  } else {
    throw InvalidArgument("unrecognized time '" + text + "'");
  }
  if (t < 0) throw InvalidArgument("time '" + text + "' is before the epoch");
  return t;
}

std::string Assertion::kind_name(Kind k) {
  switch (k) {
    case Kind::EventEmitted: return "event_emitted";
    case Kind::NoEvent: return "no_event";
    case Kind::ReplicaCountAt: return "replica_count_at";
    case Kind::ConstraintSatisfiedBy: return "constraint_satisfied_by";
    case Kind::MetricBound: return "metric_bound";
  }
  return "?";
}

const NodeDecl* Scenario::node(const std::string& name) const {
  for (const auto& n : nodes) {
    if (n.name == name) return &n;
  }
  for (const auto& c : churn) {
    if (c.profile && c.profile->name == name) return &*c.profile;
  }
  return nullptr;
}

std::size_t Scenario::sensor_event_count() const {
  std::size_t n = 0;
  for (const auto& c : components) {
    if (c.sensor) n += c.config["schedule"].size();
  }
  return n;
}

Scenario parse_scenario(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string what = e.what();
    if (auto p = what.find("syntax error"); p != std::string::npos) what = what.substr(p);
    throw ScenarioError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what);
  }
  const Obj top(root, "");
  top.only({"name", "description", "epoch", "until", "topology", "policies", "gazetteer", "facts", "matchlets",
            "bundles", "components", "sensors", "constraints", "churn", "discovery", "assertions"});

  Scenario s;
  s.name = top.str("name", "scenario");
  s.epoch_text = top.str("epoch");
  try {
    s.epoch = Epoch::parse(s.epoch_text);
  } catch (const Error& e) {
    fail("epoch", e.what());
  }
  if (top.has("until")) {
    try {
      s.until = s.epoch.to_millis(top.raw("until"));
    } catch (const Error& e) {
      fail("until", e.what());
    }
  }

  // topology
  const Obj topo(top.raw("topology"), "topology");
  topo.only({"regions", "nodes"});
  std::set<std::string> declared_regions;
  if (topo.has("regions")) {
    const Json& rs = topo.array("regions");
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (!rs[i].is_string() || rs[i].get<std::string>().empty()) fail(at("topology.regions", i), "expected a region name");
      if (!declared_regions.insert(rs[i].get<std::string>()).second) fail(at("topology.regions", i), "duplicate region");
      s.regions.push_back(rs[i].get<std::string>());
    }
  }
  if (!topo.has("nodes") || !topo.raw("nodes").is_array() || topo.raw("nodes").empty()) {
    fail("topology.nodes", "topology is empty; at least one node is required");
  }
  std::set<std::string> names;
  const Json& nodes = topo.array("nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Obj o(nodes[i], at("topology.nodes", i));
    o.only({"id", "region", "coords", "storage_slots", "compute_slots", "allow"});
    const std::string name = o.str("id");
    if (!names.insert(name).second) fail(at(o.path(), "id"), "duplicate node id '" + name + "'");
    s.nodes.push_back(node_decl(o, name, declared_regions));
    if (std::find(s.regions.begin(), s.regions.end(), s.nodes.back().region) == s.regions.end()) s.regions.push_back(s.nodes.back().region);
  }
  auto node_ref = [&](const Obj& o, const char* key) {
    const std::string n = o.str(key);
    if (!names.count(n)) fail(at(o.path(), key), "unknown node '" + n + "'");
    return n;
  };

  if (top.has("policies")) s.policies = policies(Obj(top.raw("policies"), "policies"));

  if (top.has("gazetteer")) {
    const Json& g = top.array("gazetteer");
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Obj o(g[i], at("gazetteer", i));
      o.only({"name", "pos"});
      s.gazetteer.emplace_back(o.str("name"), geo(o.raw("pos"), at(o.path(), "pos")));
    }
  }

  if (top.has("facts")) {
    const Json& fs = top.array("facts");
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const Obj o(fs[i], at("facts", i));
      o.only({"kind", "body", "subject", "at"});
      FactDecl d;
      Json plain = fs[i];
      plain.erase("at");
      try {
        d.fact = knowledge::Fact::from_json(plain);
      } catch (const Error& e) {
        fail(o.path(), e.what());
      }
      d.origin = o.has("at") ? node_ref(o, "at") : s.nodes.front().name;
      s.facts.push_back(std::move(d));
    }
  }

  if (top.has("matchlets")) {
    const Json& ms = top.array("matchlets");
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const Obj o(ms[i], at("matchlets", i));
      o.only({"node", "matchlet"});
      MatchletDecl d;
      d.node = node_ref(o, "node");
      d.def = o.raw("matchlet");
      std::string id;
      try {
        id = matching::MatchletDef::from_json(d.def).id;
      } catch (const Error& e) {
        fail(at(o.path(), "matchlet"), e.what());
      }
      if (!seen.emplace(d.node, id).second) fail(at(o.path(), "matchlet.id"), "duplicate matchlet '" + id + "' on node " + d.node);
      s.matchlets.push_back(std::move(d));
    }
  }

  std::set<std::string> bundle_ids;
  if (top.has("bundles")) {
    const Json& bs = top.array("bundles");
    for (std::size_t i = 0; i < bs.size(); ++i) {
      const Obj o(bs[i], at("bundles", i));
      o.only({"bundle_id", "component_type", "payload", "checksum", "slots", "discovery_type"});
      BundleDecl d;
      Json plain = bs[i];
      plain.erase("discovery_type");
      try {
        d.bundle = deploy::Bundle::from_json(plain);
      } catch (const Error& e) {
        fail(o.path(), e.what());
      }
      if (!bundle_ids.insert(d.bundle.bundle_id).second) fail(at(o.path(), "bundle_id"), "duplicate bundle '" + d.bundle.bundle_id + "'");
      if (d.bundle.component_type == "matchlet") {
        try {
          matching::MatchletDef::from_json(Json::parse(d.bundle.payload));
        } catch (const Json::exception& e) {
          fail(at(o.path(), "payload"), e.what());
        } catch (const Error& e) {
          fail(at(o.path(), "payload"), e.what());
        }
      }
      if (o.has("discovery_type")) d.discovery_type = o.str("discovery_type");
      s.bundles.push_back(std::move(d));
    }
  }

  std::set<std::string> component_ids;
  if (top.has("components")) {
    const Json& cs = top.array("components");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const Obj o(cs[i], at("components", i));
      o.only({"id", "type", "node", "config", "outputs"});
      ComponentDecl c;
      c.id = o.str("id");
      c.type = o.str("type");
      c.node = node_ref(o, "node");
      if (o.has("config")) {
        c.config = o.raw("config");
        if (!c.config.is_object()) fail(at(o.path(), "config"), "expected an object");
      }
      if (o.has("outputs")) {
        const Json& outs = o.array("outputs");
        for (std::size_t k = 0; k < outs.size(); ++k) {
          if (!outs[k].is_string()) fail(at(at(o.path(), "outputs"), k), "expected a component id");
          c.outputs.push_back(outs[k].get<std::string>());
        }
      }
      if (!component_ids.insert(c.id).second) fail(at(o.path(), "id"), "duplicate component '" + c.id + "'");
      s.components.push_back(std::move(c));
    }
  }

  if (top.has("sensors")) {
    const Json& ss = top.array("sensors");
    for (std::size_t i = 0; i < ss.size(); ++i) {
      const Obj o(ss[i], at("sensors", i));
      o.only({"id", "node", "schedule", "publish", "outputs"});
      ComponentDecl c;
      c.sensor = true;
      c.id = o.str("id");
      c.type = "sensor_source";
      c.node = node_ref(o, "node");
      if (!component_ids.insert(c.id).second) fail(at(o.path(), "id"), "duplicate component '" + c.id + "'");
      Json schedule = Json::array();
      const Json& items = o.array("schedule");
      Millis last = 0;
      for (std::size_t k = 0; k < items.size(); ++k) {
        const Obj e(items[k], at(at(o.path(), "schedule"), k));
        e.only({"at", "type", "attributes"});
        Millis t = 0;
        try {
          t = s.epoch.to_millis(e.raw("at"));
        } catch (const ScenarioError&) {
          throw;
        } catch (const Error& err) {
          fail(at(e.path(), "at"), err.what());
        }
        if (k > 0 && t < last) fail(at(e.path(), "at"), "schedule is not sorted by time");
        last = t;
        Json ev = Json::object();
        ev["at"] = t;
        ev["type"] = e.str("type");
        ev["attributes"] = Json::object();
        if (e.has("attributes")) {
          try {
            ev["attributes"] = AttributeList::from_json(e.raw("attributes")).to_json();
          } catch (const Error& err) {
            fail(at(e.path(), "attributes"), err.what());
          }
        }
        schedule.push_back(std::move(ev));
      }
      c.config["schedule"] = std::move(schedule);
      c.config["publish"] = o.boolean("publish", true);
      if (o.has("outputs")) {
        for (const auto& out : o.array("outputs")) {
          if (!out.is_string()) fail(at(o.path(), "outputs"), "expected component ids");
          c.outputs.push_back(out.get<std::string>());
        }
      }
      s.components.push_back(std::move(c));
    }
  }
  for (std::size_t i = 0; i < s.components.size(); ++i) {
    for (const auto& out : s.components[i].outputs) {
      if (!component_ids.count(out)) fail((s.components[i].sensor ? "sensor " : "component ") + s.components[i].id + ".outputs", "unknown component '" + out + "'");
      if (out == s.components[i].id) fail("component " + out + ".outputs", "self-loop");
    }
  }

  if (top.has("constraints")) {
    const Json& cs = top.array("constraints");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      deploy::PlacementConstraint c;
      try {
        c = deploy::PlacementConstraint::from_json(cs[i]);
      } catch (const Error& e) {
        fail(at("constraints", i), e.what());
      }
      if (c.kind == deploy::PlacementConstraint::Kind::MinInstances &&
          std::find(s.regions.begin(), s.regions.end(), c.region) == s.regions.end()) {
        fail(at(at("constraints", i), "region"), "unknown region '" + c.region + "'");
      }
      if (!c.bundle.empty() && !bundle_ids.count(c.bundle)) fail(at(at("constraints", i), "bundle"), "unknown bundle '" + c.bundle + "'");
      s.constraints.push_back(std::move(c));
    }
  }

  if (top.has("churn")) {
    const Json& ch = top.array("churn");
    std::map<std::string, bool> alive;
    for (const auto& n : s.nodes) alive[n.name] = true;
    Millis last = 0;
    for (std::size_t i = 0; i < ch.size(); ++i) {
      const Obj o(ch[i], at("churn", i));
      ChurnDecl c;
      try {
        c.at = SimTime{s.epoch.to_millis(o.raw("at"))};
      } catch (const ScenarioError&) {
        throw;
      } catch (const Error& e) {
        fail(at(o.path(), "at"), e.what());
      }
      if (i > 0 && c.at.millis < last) fail(at(o.path(), "at"), "churn schedule is not sorted by time");
      last = c.at.millis;
      const std::string op = o.str("op");
      c.node = o.str("node");
      if (op == "join") {
        o.only({"at", "op", "node", "region", "coords", "storage_slots", "compute_slots", "allow"});
        c.op = ChurnDecl::Op::Join;
        if (alive.count(c.node)) fail(at(o.path(), "node"), "node '" + c.node + "' already exists");
        c.profile = node_decl(o, c.node, declared_regions);
        if (std::find(s.regions.begin(), s.regions.end(), c.profile->region) == s.regions.end()) s.regions.push_back(c.profile->region);
        alive[c.node] = true;
        names.insert(c.node);
      } else if (op == "crash" || op == "leave") {
        o.only({"at", "op", "node"});
        c.op = op == "crash" ? ChurnDecl::Op::Crash : ChurnDecl::Op::Leave;
        auto it = alive.find(c.node);
        if (it == alive.end()) fail(at(o.path(), "node"), "unknown node '" + c.node + "'");
        if (!it->second) fail(at(o.path(), "node"), "node '" + c.node + "' is already gone");
        it->second = false;
      } else {
        fail(at(o.path(), "op"), "expected crash, leave or join");
      }
      s.churn.push_back(std::move(c));
    }
  }

  if (top.has("discovery")) {
    const Obj o(top.raw("discovery"), "discovery");
    o.only({"node", "ignore"});
    s.discovery_node = node_ref(o, "node");
    if (o.has("ignore")) {
      for (const auto& t : o.array("ignore")) {
        if (!t.is_string()) fail("discovery.ignore", "expected event type names");
        s.discovery_ignore.insert(t.get<std::string>());
      }
    }
  }

  if (top.has("assertions")) {
    const Json& as = top.array("assertions");
    for (std::size_t i = 0; i < as.size(); ++i) s.assertions.push_back(assertion(Obj(as[i], at("assertions", i)), s));
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

}  // namespace ctxmatch::harness
