#include "ctxmatch/matching/engine.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "ctxmatch/core/error.hpp"
#include "ctxmatch/pipeline/geo.hpp"

namespace ctxmatch::matching {

namespace {

bool type_compatible(pubsub::Op op, const TypedValue& lhs, const TypedValue& rhs) {
  if (op == pubsub::Op::Exists) return true;
  if (pubsub::is_ordering(op)) return lhs.is_numeric() && rhs.is_numeric();
  if (pubsub::is_string_op(op)) return lhs.is_string() && rhs.is_string();
  return comparable(lhs, rhs);
}

// "HH:MM" or "HH:MM:SS" as millis into the day.
std::optional<Millis> parse_time_of_day(const std::string& s) {
  static const std::regex re(R"((\d{1,2}):(\d{2})(?::(\d{2}))?)");
  std::smatch m;
  if (!std::regex_match(s, m, re)) return std::nullopt;
  const int h = std::stoi(m[1]), mi = std::stoi(m[2]), sec = m[3].matched ? std::stoi(m[3]) : 0;
  if (h > 24 || mi > 59 || sec > 59) return std::nullopt;
  return h * kHour + mi * kMinute + sec * kSecond;
}

Json ids_json(const std::vector<std::uint64_t>& ids) {
  Json a = Json::array();
  for (auto id : ids) a.push_back(id);
  return a;
}

}  // namespace

// ---- fact sources ----

std::optional<std::vector<Guid>> KbFactSource::members(const NodeId& at, const std::string& kind) {
  return kb_.kind_members(at, kind);
}

std::optional<knowledge::Fact> KbFactSource::get(const NodeId& at, const Guid& guid) {
  return kb_.get_fact(at, guid).fact;
}

void KbFactSource::store(const NodeId& at, knowledge::Fact f) { kb_.put_fact(at, std::move(f)); }

Guid MemoryFactSource::add(knowledge::Fact f) {
  const Guid g = f.guid();
  if (facts_.emplace(g, f).second) by_kind_[f.kind].push_back(g);
  return g;
}

std::optional<std::vector<Guid>> MemoryFactSource::members(const NodeId&, const std::string& kind) {
  auto it = by_kind_.find(kind);
  return it == by_kind_.end() ? std::vector<Guid>{} : it->second;
}

std::optional<knowledge::Fact> MemoryFactSource::get(const NodeId&, const Guid& guid) {
  auto it = facts_.find(guid);
  if (it == facts_.end()) return std::nullopt;
  return it->second;
}

// ---- instance ----

MatchletInstance::MatchletInstance(MatchingEngine& engine, NodeId node, MatchletDef def)
    : engine_(engine), node_(std::move(node)), def_(std::move(def)), buffers_(def_.patterns.size()) {}

bool MatchletInstance::admits_type(const std::string& type) const {
  return std::any_of(def_.patterns.begin(), def_.patterns.end(), [&](const auto& p) { return p.sub.admits_type(type); });
}

std::vector<EventPtr> MatchletInstance::on_any(const EventPtr& e) {
  std::vector<EventPtr> out;
  for (std::size_t i = 0; i < def_.patterns.size(); ++i) {
    if (!pubsub::match(def_.patterns[i].sub, *e)) continue;
    auto emitted = on_event(i, e);
    out.insert(out.end(), emitted.begin(), emitted.end());
  }
  return out;
}

void MatchletInstance::prune(SimTime horizon) {
  for (auto& buf : buffers_) {
    buf.erase(std::remove_if(buf.begin(), buf.end(), [&](const EventPtr& x) { return x->timestamp < horizon; }), buf.end());
  }
}

std::vector<EventPtr> MatchletInstance::on_event(std::size_t index, const EventPtr& e) {
  std::vector<EventPtr> out;
  auto& own = buffers_.at(index);
  if (std::any_of(own.begin(), own.end(), [&](const EventPtr& x) { return x->event_id == e->event_id; })) return out;

  const Millis window = def_.window_ms;
  prune(e->timestamp - window);
  own.push_back(e);

  // Candidates per pattern; the new event is fixed at its own position.
  const std::size_t n = buffers_.size();
  std::vector<std::vector<EventPtr>> cand(n);
  const std::size_t cap = engine_.config_.combination_cap;
  std::size_t product = 1;
  for (std::size_t p = 0; p < n; ++p) {
    if (p == index) {
      cand[p] = {e};
      continue;
    }
    for (const auto& x : buffers_[p]) {
      if (std::llabs(x->timestamp - e->timestamp) <= window) cand[p].push_back(x);
    }
    if (cand[p].empty()) return out;
    product = product > cap / cand[p].size() ? cap + 1 : product * cand[p].size();
  }
  if (product > cap) {
    ++overflows_;
    engine_.kernel_.emit("match.overflow", node_,
                         Json{{"matchlet", def_.id}, {"trigger_event", e->event_id}, {"cap", cap}});
    return out;
  }

  ArrivalMemo memo;
  std::vector<std::size_t> pos(n, 0);
  while (true) {
    Binding b;
    std::vector<std::uint64_t> ids;
    SimTime lo = e->timestamp, hi = e->timestamp;
    for (std::size_t p = 0; p < n; ++p) {
      const EventPtr& x = cand[p][pos[p]];
      ids.push_back(x->event_id);
      lo = std::min(lo, x->timestamp);
      hi = std::max(hi, x->timestamp);
      b.events[def_.patterns[p].var] = x;
    }
    std::sort(ids.begin(), ids.end());
    const bool distinct = std::adjacent_find(ids.begin(), ids.end()) == ids.end();
    if (distinct && hi - lo <= window && !emitted_.count(ids) && join(0, b, memo)) {
      emitted_.insert(ids);
      emit(b, std::move(ids), e, out);
    }
    std::size_t p = 0;
    while (p < n && ++pos[p] == cand[p].size()) pos[p++] = 0;
    if (p == n) break;
  }
  return out;
}

bool MatchletInstance::join(std::size_t fact_index, Binding& b, ArrivalMemo& memo) {
  if (fact_index == def_.facts.size()) return guards_hold(b);
  const FactPattern& fp = def_.facts[fact_index];
  auto mit = memo.members.find(fp.kind);
  if (mit == memo.members.end()) {
    auto m = engine_.facts_.members(node_, fp.kind);
    if (!m) engine_.diagnostic(def_.id, "index unavailable", Json{{"kind", fp.kind}});
    mit = memo.members.emplace(fp.kind, std::move(m)).first;
  }
  if (!mit->second) return false;
  const Clock& clock = engine_.config_.clock;
  for (const Guid& g : *mit->second) {
    auto fit = memo.facts.find(g);
    if (fit == memo.facts.end()) {
      auto f = engine_.facts_.get(node_, g);
      fit = memo.facts.emplace(g, f ? std::make_shared<const knowledge::Fact>(std::move(*f)) : nullptr).first;
    }
    if (!fit->second || fit->second->kind != fp.kind) continue;
    b.facts[fp.var] = fit->second;
    bool ok = true;
    for (const auto& c : fp.constraints) {
      const auto lhs = resolve(Ref{fp.var, c.name}, b, clock);
      if (!lhs) {
        ok = false;
        break;
      }
      if (c.op == pubsub::Op::Exists) continue;
      const auto rhs = resolve(c.rhs, b, clock);
      if (!rhs || !type_compatible(c.op, *lhs, *rhs) || !pubsub::holds(pubsub::Constraint{c.name, c.op, *rhs}, *lhs)) {
        ok = false;
        break;
      }
    }
    if (ok && join(fact_index + 1, b, memo)) return true;
    b.facts.erase(fp.var);
  }
  return false;
}

bool MatchletInstance::guards_hold(const Binding& b) {
  return std::all_of(def_.guards.begin(), def_.guards.end(), [&](const Guard& g) { return engine_.eval_guard(g, b, def_.id); });
}

std::optional<TypedValue> MatchletInstance::instantiate(const std::string& attr, const Json& v, const Binding& b) {
  const Clock& clock = engine_.config_.clock;
  const SimTime now = engine_.kernel_.now();
  if (v.is_object() && v.contains("slot_after_now")) {
    const Json& s = v["slot_after_now"];
    const Millis slot = s["slot_ms"].get<Millis>();
    const Millis lead = s.value("lead_ms", Millis{0});
    const Millis tod = clock.time_of_day(now);
    const Millis at = tod / slot * slot + slot + lead;
    if (s.value("format", std::string("time_of_day")) == "millis") return TypedValue(clock.day_start(now).millis + at);
    return TypedValue(Clock::format_time_of_day(at % kDay));
  }
  if (!v.is_string()) return TypedValue::from_json(v);
  const std::string s = v.get<std::string>();
  if (s.size() > 3 && s.rfind("${", 0) == 0 && s.back() == '}' && s.find("${", 2) == std::string::npos) {
    auto r = resolve(Ref::parse(s), b, clock);
    if (!r) engine_.diagnostic(def_.id, "unresolved template reference", Json{{"attribute", attr}, {"ref", s}});
    return r;
  }
  static const std::regex re(R"(\$\{([^}]*)\})");
  std::string result;
  auto last = s.cbegin();
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    result.append(last, (*it)[0].first);
    const Ref ref = Ref::parse((*it)[1].str());
    if (auto r = resolve(ref, b, clock)) {
      result += r->to_string();
    } else {
      engine_.diagnostic(def_.id, "unresolved template reference", Json{{"attribute", attr}, {"ref", ref.text()}});
      return std::nullopt;
    }
    last = (*it)[0].second;
  }
  result.append(last, s.cend());
  return TypedValue(result);
}

void MatchletInstance::emit(const Binding& b, std::vector<std::uint64_t> ids, const EventPtr& trigger, std::vector<EventPtr>& out) {
  auto& kernel = engine_.kernel_;
  Emission em{{}, ids, b, kernel.now()};
  for (const auto& t : def_.emits) {
    Event ev;
    ev.type_name = t.type;
    ev.timestamp = kernel.now();
    ev.source = node_;
    for (const auto& [name, val] : t.attributes) {
      if (auto v = instantiate(name, val, b)) ev.attributes.set(name, std::move(*v));
    }
    ev.event_id = kernel.next_event_id();
    EventPtr p = std::make_shared<const Event>(ev);
    kernel.emit("match.emit", node_,
                Json{{"matchlet", def_.id}, {"event", p->to_json()}, {"contributing", ids_json(ids)},
                     {"trigger_event", trigger->event_id}, {"trigger_time", trigger->timestamp.millis}});
    if (publish && engine_.pubsub_ != nullptr) p = engine_.pubsub_->publish(node_, std::move(ev));
    em.events.push_back(p);
    out.push_back(p);
  }
  ++engine_.emission_count_;
  if (def_.store_fact && !em.events.empty()) {
    knowledge::Fact f;
    f.kind = def_.store_fact->kind;
    f.body = em.events.front()->attributes;
    f.created_at = kernel.now();
    if (def_.store_fact->subject) {
      if (auto s = instantiate("subject", *def_.store_fact->subject, b)) f.subject = s->to_string();
    }
    engine_.facts_.store(node_, std::move(f));
  }
  emissions_.push_back(em);
  if (on_emit) {
    for (const auto& p : em.events) on_emit(p);
  }
}

// ---- engine ----

MatchingEngine::MatchingEngine(sim::Kernel& kernel, pubsub::PubSub* pubsub, FactSource& facts, EngineConfig config)
    : kernel_(kernel), pubsub_(pubsub), facts_(facts), config_(config) {}

MatchletInstance& MatchingEngine::register_matchlet(const NodeId& node, MatchletDef def, bool subscribe) {
  if (!kernel_.has_node(node) || !kernel_.alive(node)) throw InvalidArgument("register_matchlet: node " + node.hex() + " is not alive");
  const auto key = std::make_pair(node, def.id);
  if (instances_.count(key)) throw InvalidArgument("register_matchlet: '" + def.id + "' already registered on node");
  auto inst = std::make_unique<MatchletInstance>(*this, node, std::move(def));
  MatchletInstance& ref = *inst;
  instances_.emplace(key, std::move(inst));
  if (subscribe && pubsub_ != nullptr) {
    for (std::size_t i = 0; i < ref.def_.patterns.size(); ++i) {
      const auto& p = ref.def_.patterns[i];
      ref.subscriptions_.push_back(pubsub_->subscribe(node, p.sub, ref.def_.id + "." + p.var,
                                                      [&ref, i](const EventPtr& e) { ref.on_event(i, e); }));
    }
  }
  return ref;
}

MatchletInstance& MatchingEngine::register_matchlet(const NodeId& node, const Json& def) {
  return register_matchlet(node, MatchletDef::from_json(def));
}

void MatchingEngine::unregister(const NodeId& node, const std::string& id) {
  auto it = instances_.find({node, id});
  if (it == instances_.end()) throw NotFound("matchlet '" + id + "' not registered on node");
  if (pubsub_ != nullptr) {
    for (auto h : it->second->subscriptions_) pubsub_->unsubscribe(h);
  }
  instances_.erase(it);
}

MatchletInstance* MatchingEngine::find(const NodeId& node, const std::string& id) {
  auto it = instances_.find({node, id});
  return it == instances_.end() ? nullptr : it->second.get();
}

std::vector<MatchletInstance*> MatchingEngine::instances() {
  std::vector<MatchletInstance*> out;
  for (auto& [k, v] : instances_) out.push_back(v.get());
  return out;
}

bool MatchingEngine::admits(const NodeId& node, const std::string& type) const {
  for (auto it = instances_.lower_bound({node, std::string()}); it != instances_.end() && it->first.first == node; ++it) {
    if (it->second->admits_type(type)) return true;
  }
  return false;
}

void MatchingEngine::diagnostic(const std::string& matchlet, const std::string& what, Json detail) {
  Json d = Json{{"matchlet", matchlet}, {"what", what}};
  for (auto& [k, v] : detail.items()) d[k] = v;
  kernel_.emit("match.diagnostic", std::nullopt, std::move(d));
}

bool MatchingEngine::eval_guard(const Guard& g, const Binding& b, const std::string& matchlet) {
  const Clock& clock = config_.clock;
  const auto a = resolve(g.a, b, clock);
  if (!a) {
    diagnostic(matchlet, "unresolved reference", Json{{"guard", g.describe()}, {"ref", g.a.text()}});
    return false;
  }
  auto mismatch = [&](const std::string& why) {
    diagnostic(matchlet, "type mismatch", Json{{"guard", g.describe()}, {"reason", why}});
    return false;
  };
  switch (g.kind) {
    case Guard::Kind::Cmp: {
      const auto rhs = resolve(g.rhs, b, clock);
      if (!rhs) return mismatch("right-hand side unresolved");
      if (!type_compatible(g.op, *a, *rhs)) {
        return mismatch(std::string(kind_name(a->kind())) + " " + std::string(pubsub::op_name(g.op)) + " " +
                        std::string(kind_name(rhs->kind())));
      }
      return pubsub::holds(pubsub::Constraint{g.a.attr, g.op, *rhs}, *a);
    }
    case Guard::Kind::GeoWithin: {
      const auto c = resolve(g.b, b, clock);
      if (!c || a->kind() != TypedValue::Kind::Geo || c->kind() != TypedValue::Kind::Geo) return mismatch("geo operands expected");
      return pipeline::geo_distance(a->as_geo(), c->as_geo()) <= g.radius_m;
    }
    case Guard::Kind::TimeDiff: {
      const auto c = resolve(g.b, b, clock);
      if (!c || a->kind() != TypedValue::Kind::Integer || c->kind() != TypedValue::Kind::Integer) {
        return mismatch("integer millis operands expected");
      }
      const TypedValue diff(a->as_int() - c->as_int());
      return pubsub::holds(pubsub::Constraint{"diff", g.op, TypedValue(g.millis)}, diff);
    }
    case Guard::Kind::Reachable: {
      const auto to = resolve(g.b, b, clock);
      const auto dl = resolve(g.rhs, b, clock);
      if (!to || a->kind() != TypedValue::Kind::Geo || to->kind() != TypedValue::Kind::Geo) return mismatch("geo operands expected");
      std::optional<Millis> deadline;
      if (dl && dl->kind() == TypedValue::Kind::Integer) deadline = dl->as_int();
      if (dl && dl->is_string()) deadline = parse_time_of_day(dl->as_string());
      if (!deadline) return mismatch("deadline must be integer millis or HH:MM");
      const SimTime now = kernel_.now();
      const Millis abs_deadline = g.daily ? clock.day_start(now).millis + *deadline : *deadline;
      const double speed = g.speed_kmh.value_or(config_.walking_speed_kmh);
      const double travel_ms = pipeline::geo_distance(a->as_geo(), to->as_geo()) / (speed * 1000.0 / 3'600'000.0);
      return travel_ms <= static_cast<double>(abs_deadline - now.millis);
    }
  }
  return false;
}

bool MatchingEngine::ignored_by_discovery(const std::string& type) const {
  if (discovery_ignored_.count(type) || type.rfind("fact:", 0) == 0 || type.rfind("node-", 0) == 0) return true;
  for (const auto& [k, inst] : instances_) {
    const auto emitted = inst->def().emitted_types();
    if (std::find(emitted.begin(), emitted.end(), type) != emitted.end()) return true;
  }
  return false;
}

void MatchingEngine::enable_discovery(const NodeId& node, std::set<std::string> ignored) {
  if (pubsub_ == nullptr) throw InvalidArgument("discovery needs pub/sub");
  discovery_node_ = node;
  discovery_ignored_ = std::move(ignored);
  pubsub_->subscribe(node, pubsub::Subscription{}, "discovery", [this, node](const EventPtr& e) { discover(node, e); });
}

void MatchingEngine::discover(const NodeId& node, const EventPtr& e) {
  const std::string& type = e->type_name;
  if (admits(node, type) || ignored_by_discovery(type)) return;
  const Guid key = bundle_key(type);
  auto unhandled = [&](const std::string& reason) {
    kernel_.emit("match.unhandled", node, Json{{"type", type}, {"event_id", e->event_id}, {"reason", reason}});
  };
  std::optional<std::string> bundle;
  if (bundle_fetch_) bundle = bundle_fetch_(node, key);
  if (!bundle) return unhandled("no bundle stored");
  if (!deployer_) return unhandled("no deployer");
  if (const std::string err = deployer_(node, *bundle); !err.empty()) return unhandled(err);
  if (!admits(node, type)) return unhandled("deployed bundle does not handle type");
  kernel_.emit("match.discovery_deploy", node, Json{{"type", type}, {"bundle", key.hex()}});
  for (auto it = instances_.lower_bound({node, std::string()}); it != instances_.end() && it->first.first == node; ++it) {
    if (it->second->admits_type(type)) it->second->on_any(e);
  }
}

}  // namespace ctxmatch::matching
