// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. An optional argument selects a
// single criterion by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctxmatch/deploy/deploy_manager.hpp"
#include "ctxmatch/harness/assertions.hpp"
#include "ctxmatch/harness/metrics.hpp"
#include "ctxmatch/harness/world.hpp"
#include "ctxmatch/knowledge/knowledge_base.hpp"
#include "ctxmatch/matching/engine.hpp"
#include "ctxmatch/overlay/overlay.hpp"
#include "ctxmatch/pipeline/builtins.hpp"
#include "ctxmatch/pubsub/broker.hpp"
#include "support/generators.hpp"
#include "support/match_oracle.hpp"
#include "support/oracles.hpp"

using namespace ctxmatch;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records the first failure; later ones are counted.
  void require(bool ok, const std::string& why) {
    if (ok) return;
    if (pass) detail = why;
    pass = false;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

Millis hhmm(int h, int m) { return (static_cast<Millis>(h - 16) * 60 + m) * 60 * kSecond; }

// 1 -------------------------------------------------------------------------

Outcome icecream() {
  Outcome o;
  const auto s = harness::load_scenario(std::string(CTXMATCH_SCENARIOS) + "/icecream.scenario.json");
  std::vector<std::string> runs;
  double slowest = 0;
  Millis emitted_at = -1;
  for (std::uint64_t seed : {1, 2, 3, 42}) {
    const auto t0 = Clock::now();
    const auto r = harness::run(s, seed, SimTime{*s.until});
    slowest = std::max(slowest, seconds_since(t0));

    std::map<std::string, Json> by_recipient;
    std::string signature;
    for (const auto& rec : r.trace) {
      if (rec.kind != "match.emit" || rec.detail["event"]["type"] != "MeetSuggestion") continue;
      const Json& a = rec.detail["event"]["attributes"];
      const std::string who = a.value("recipient", "");
      o.require(!by_recipient.count(who), "duplicate suggestion for " + who);
      by_recipient[who] = a;
      o.require(rec.t.millis >= hhmm(16, 45) && rec.t.millis <= hhmm(16, 50),
                "suggestion for " + who + " at t=" + std::to_string(rec.t.millis) + " outside [16:45, 16:50]");
      signature += std::to_string(rec.t.millis) + a.dump() + "\n";
      emitted_at = std::max(emitted_at, rec.t.millis);
    }
    const std::map<std::string, std::string> partner = {{"Bob", "Anna"}, {"Anna", "Bob"}};
    o.require(by_recipient.size() == 2, "expected suggestions for exactly Bob and Anna, got " + std::to_string(by_recipient.size()));
    for (const auto& [who, with] : partner) {
      auto it = by_recipient.find(who);
      if (it == by_recipient.end()) {
        o.require(false, "no suggestion for " + who);
        continue;
      }
      const Json& a = it->second;
      o.require(a.value("with", "") == with, who + " paired with " + a.value("with", "?"));
      o.require(a.value("place", "") == "Janetta's", who + " sent to " + a.value("place", "?"));
      o.require(a.value("suggested_time", "") == "16:55", who + " told " + a.value("suggested_time", "?"));
    }
    o.require(harness::assert_outcomes(r.trace, s.assertions).all_passed(), "fixture assertions fail for seed " + std::to_string(seed));
    runs.push_back(signature);
  }
  o.require(std::adjacent_find(runs.begin(), runs.end(), std::not_equal_to<>()) == runs.end(), "emissions differ across seeds");
  o.require(slowest < 5.0, "run took " + fmt(slowest) + " s");
  if (o.pass) o.detail = "Bob and Anna -> Janetta's at 16:55, emitted " + std::to_string(emitted_at - hhmm(16, 45)) +
                         " ms after 16:45, 4 seeds identical, slowest run " + fmt(slowest) + " s";
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome overlay_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  sim::Kernel kernel(11, {"r0", "r1", "r2"});
  overlay::Overlay ov(kernel);
  std::vector<std::string> ids;
  for (int i = 0; i < 64; ++i) {
    const NodeId id = guid_of("node:o" + std::to_string(i));
    kernel.add_node(sim::NodeProfile{id, "r" + std::to_string(i % 3), GeoPoint{}, 8, 8, true});
    ov.join(id);
    ids.push_back(id.hex());
  }
  std::mt19937_64 rng(2003);
  std::vector<double> hops;
  int wrong = 0;
  for (int i = 0; i < 1000; ++i) {
    const Guid key = Guid::from_value((UInt128{rng()} << 64) | rng());
    const NodeId& start = ov.members()[rng() % ov.size()];
    const auto route = ov.route(start, key);
    wrong += route.owner.hex() != oracle::owner_scan(ids, key.hex());
    hops.push_back(static_cast<double>(route.hops()));
  }
  const double median = oracle::percentile(hops, 50);
  const double max = *std::max_element(hops.begin(), hops.end());
  const double bound = std::ceil(std::log(64.0) / std::log(16.0)) + 2;
  const double elapsed = seconds_since(t0);
  o.require(wrong == 0, std::to_string(wrong) + " of 1000 keys routed to a non-oracle owner");
  o.require(median <= bound, "median hops " + fmt(median, 1) + " > " + fmt(bound, 0));
  o.require(max <= 32, "max hops " + fmt(max, 0));
  o.require(elapsed < 10.0, "took " + fmt(elapsed) + " s");
  if (o.pass) {
    o.detail = "1000/1000 owners match linear scan, median hops " + fmt(median, 0) + " (bound " + fmt(bound, 0) +
               "), max " + fmt(max, 0) + ", " + fmt(elapsed) + " s";
  }
  return o;
}

// 3 -------------------------------------------------------------------------

std::optional<int> census_replicas(const sim::Trace& trace, Millis t, const Guid& g) {
  const auto idx = harness::census_at(trace, t);
  if (!idx) return std::nullopt;
  for (const auto& f : trace[*idx].detail["facts"]) {
    if (f["guid"] == g.hex()) return f["replicas"].get<int>();
  }
  return 0;
}

Outcome self_healing() {
  Outcome o;
  Json d = {{"name", "healing"}, {"epoch", "2003-06-25T16:00:00"}};
  d["topology"]["nodes"] = Json::array();
  for (int i = 0; i < 24; ++i) {
    d["topology"]["nodes"].push_back(Json{{"id", "n" + std::to_string(i)}, {"region", i % 2 ? "east" : "west"}});
  }
  d["policies"] = Json{{"k", 5}, {"caching", false}};
  d["facts"] = Json::parse(R"([{"kind": "opening-hours", "subject": "Janetta's",
    "body": {"place": "Janetta's", "sells": "ice cream", "opens": "09:00", "closes": "17:00"}}])");
  const Guid g = knowledge::Fact::from_json(d["facts"][0]).guid();

  const Millis crash_at = 5 * kSecond;
  std::vector<std::string> victims;
  {
    const auto probe = harness::parse_scenario(d.dump());
    harness::World w(probe, 9);
    const auto holders = w.overlay().live_holders(g);
    if (holders.size() != 5) {
      o.require(false, "initial put placed " + std::to_string(holders.size()) + " replicas");
      return o;
    }
    // The owner and one other holder.
    for (const NodeId& h : {holders[0], holders[2]}) {
      for (const auto& n : probe.nodes) {
        if (n.id == h) victims.push_back(n.name);
      }
    }
  }
  d["churn"] = Json::array();
  for (const auto& v : victims) d["churn"].push_back(Json{{"at", crash_at}, {"op", "crash"}, {"node", v}});

  const auto s = harness::parse_scenario(d.dump());
  harness::World w(s, 9);
  const Millis heal = s.policies.kb.heal_period;
  const Millis deadline = crash_at + 3 * heal;
  const Millis until = deadline + 10 * kSecond;
  std::string body;
  int samples = 0, misses = 0;
  for (Millis t = kSecond; t <= until; t += kSecond, ++samples) {
    w.run_until(SimTime{t});
    // Rotate the requester over live nodes so most fetches are remote.
    const auto live = w.overlay().members();
    const NodeId& requester = live[static_cast<std::size_t>(t / kSecond) % live.size()];
    const auto got = w.kb().get_fact(requester, g);
    if (!got.fact) {
      ++misses;
      continue;
    }
    if (body.empty()) body = got.fact->canonical();
    o.require(got.fact->canonical() == body, "fetch at t=" + std::to_string(t) + " returned different bytes");
  }
  w.finish();
  const auto& trace = w.kernel().trace();

  const auto before = census_replicas(trace, crash_at - 1, g);
  const auto after = census_replicas(trace, crash_at + kSecond, g);
  // First census after the crash that counts 5 again.
  std::optional<Millis> restored;
  for (const auto& r : trace) {
    if (r.kind != "kb.census" || r.t.millis <= crash_at) continue;
    for (const auto& f : r.detail["facts"]) {
      if (f["guid"] == g.hex() && f["replicas"] == 5 && !restored) restored = r.t.millis;
    }
  }
  o.require(before == 5, "census before crash: " + std::to_string(before.value_or(-1)));
  o.require(after == 3, "census after crash: " + std::to_string(after.value_or(-1)));
  o.require(restored && *restored <= deadline, "census did not return to 5 by t=" + std::to_string(deadline));
  o.require(census_replicas(trace, until, g) == 5, "census at the end is not 5");
  o.require(misses == 0, std::to_string(misses) + " of " + std::to_string(samples) + " sampled fetches failed");
  if (o.pass) {
    o.detail = "crashed 2 of 5 holders at 5 s; census 5 -> 3 -> 5 at t=" + fmt(static_cast<double>(*restored) / 1000, 0) +
               " s (limit " + fmt(static_cast<double>(deadline) / 1000, 0) + " s); " + std::to_string(samples) +
               "/" + std::to_string(samples) + " per-second fetches succeeded";
  }
  return o;
}

// 4 -------------------------------------------------------------------------

// Written from the subscription language definition; shares nothing with
// pubsub::match. Works on the JSON forms of subscription and event.
bool oracle_match(const Json& sub, const Json& event_type, const Json& attrs) {
  if (sub["type"] != "*" && sub["type"] != event_type) return false;
  for (const auto& c : sub["constraints"]) {
    const std::string name = c[0], op = c[1];
    if (!attrs.contains(name)) return false;
    if (op == "exists") continue;
    const Json& v = attrs[name];
    const Json& k = c[2];
    const bool nums = v.is_number() && k.is_number();
    const bool strs = v.is_string() && k.is_string();
    bool ok = false;
    if (op == "eq" || op == "ne") {
      bool same_class = nums || strs || (v.is_boolean() && k.is_boolean());
      bool equal = nums ? v.get<double>() == k.get<double>() : v == k;
      ok = same_class && (op == "eq" ? equal : !equal);
    } else if (op == "lt") {
      ok = nums && v.get<double>() < k.get<double>();
    } else if (op == "le") {
      ok = nums && v.get<double>() <= k.get<double>();
    } else if (op == "gt") {
      ok = nums && v.get<double>() > k.get<double>();
    } else if (op == "ge") {
      ok = nums && v.get<double>() >= k.get<double>();
    } else if (op == "prefix") {
      ok = strs && v.get<std::string>().rfind(k.get<std::string>(), 0) == 0;
    } else if (op == "suffix") {
      if (strs) {
        const std::string a = v, b = k;
        ok = a.size() >= b.size() && a.compare(a.size() - b.size(), b.size(), b) == 0;
      }
    } else if (op == "substring") {
      ok = strs && v.get<std::string>().find(k.get<std::string>()) != std::string::npos;
    }
    if (!ok) return false;
  }
  return true;
}

struct PubSubRun {
  std::vector<std::set<std::uint64_t>> delivered;
  std::uint64_t forwards = 0;
  std::uint64_t duplicates = 0;
};

PubSubRun pubsub_run(bool covering, const std::vector<pubsub::Subscription>& subs, const std::vector<Event>& events,
                     std::vector<std::size_t> sub_nodes, std::vector<std::size_t> pub_nodes) {
  sim::Kernel k(5, {"a", "b", "c"});
  std::vector<NodeId> nodes;
  for (int i = 0; i < 24; ++i) {
    const NodeId id = guid_of("node:ps" + std::to_string(i));
    k.add_node(sim::NodeProfile{id, std::string(1, static_cast<char>('a' + i % 3)), GeoPoint{}, 4, 4, true});
    nodes.push_back(id);
  }
  pubsub::PubSub ps(k);
  ps.set_covering(covering);
  ps.attach();
  PubSubRun out;
  out.delivered.resize(subs.size());
  for (std::size_t i = 0; i < subs.size(); ++i) {
    ps.subscribe(nodes[sub_nodes[i]], subs[i], "sink" + std::to_string(i), [&out, i](const EventPtr& e) {
      out.duplicates += !out.delivered[i].insert(e->event_id).second;
    });
  }
  const Millis after_subscribe = 1000;
  for (std::size_t j = 0; j < events.size(); ++j) {
    const Millis at = after_subscribe + static_cast<Millis>(j) * 5;
    k.schedule(SimTime{at}, [&, j, at] {
      Event e = events[j];
      e.event_id = j + 1;
      e.timestamp = SimTime{at};
      ps.publish(nodes[pub_nodes[j]], e);
    });
  }
  k.run_until(SimTime{after_subscribe + static_cast<Millis>(events.size()) * 5 + 10 * kSecond});
  out.forwards = ps.forward_count();
  return out;
}

Outcome pubsub_oracle() {
  Outcome o;
  std::mt19937_64 rng(4242);
  std::vector<pubsub::Subscription> subs;
  for (int i = 0; i < 200; ++i) {
    // A third are weakenings of earlier ones, so covering has work to do.
    if (!subs.empty() && rng() % 3 == 0) {
      subs.push_back(gen::weaken(rng, subs[rng() % subs.size()]));
    } else {
      subs.push_back(gen::subscription(rng));
    }
  }
  std::vector<Event> events;
  for (int j = 0; j < 1000; ++j) events.push_back(gen::event(rng));
  std::vector<std::size_t> sub_nodes, pub_nodes;
  for (std::size_t i = 0; i < subs.size(); ++i) sub_nodes.push_back(rng() % 24);
  for (std::size_t j = 0; j < events.size(); ++j) pub_nodes.push_back(rng() % 24);

  std::vector<std::set<std::uint64_t>> expect(subs.size());
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const Json sj = subs[i].to_json();
    for (std::size_t j = 0; j < events.size(); ++j) {
      if (oracle_match(sj, events[j].type_name, events[j].attributes.to_json())) {
        expect[i].insert(j + 1);
        ++pairs;
      }
    }
  }
  const auto plain = pubsub_run(false, subs, events, sub_nodes, pub_nodes);
  const auto covered = pubsub_run(true, subs, events, sub_nodes, pub_nodes);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < subs.size(); ++i) bad += plain.delivered[i] != expect[i];
  o.require(bad == 0, std::to_string(bad) + " of 200 sinks differ from the exhaustive oracle");
  o.require(plain.duplicates == 0 && covered.duplicates == 0, "duplicate deliveries");
  o.require(covered.delivered == plain.delivered, "covering changed the delivered sets");
  o.require(covered.forwards <= plain.forwards,
            "covering forwards " + std::to_string(covered.forwards) + " > baseline " + std::to_string(plain.forwards));
  o.require(pairs > 0, "oracle matched nothing");
  if (o.pass) {
    o.detail = "200x1000: " + std::to_string(pairs) + " matching pairs delivered exactly; covering identical, forwards " +
               std::to_string(covered.forwards) + " <= " + std::to_string(plain.forwards);
  }
  return o;
}

// 5 -------------------------------------------------------------------------

Outcome evolution() {
  Outcome o;
  Json d = {{"name", "evolution"}, {"epoch", "2003-06-25T16:00:00"}};
  d["topology"]["regions"] = Json::array({"east", "west"});
  d["topology"]["nodes"] = Json::array();
  for (int i = 0; i < 14; ++i) {
    d["topology"]["nodes"].push_back(Json{{"id", "e" + std::to_string(i)}, {"region", "east"}, {"compute_slots", 1}, {"storage_slots", 4}});
  }
  for (int i = 0; i < 4; ++i) {
    d["topology"]["nodes"].push_back(Json{{"id", "w" + std::to_string(i)}, {"region", "west"}, {"compute_slots", 1}, {"storage_slots", 4}});
  }
  d["bundles"] = Json::parse(R"([{"bundle_id": "repl", "component_type": "replication-service",
    "payload": {"service": "replication"}, "slots": {"compute": 1, "storage": 1}}])");
  const Json constraint = Json::parse(R"({"kind": "min_instances", "component_type": "replication-service", "region": "east", "n": 5})");
  d["constraints"] = Json::array({constraint});
  d["churn"] = Json::array();

  // Each churn event removes a node that hosts an instance at that moment,
  // found by replaying the schedule so far.
  const std::vector<std::string> ops = {"crash", "leave", "crash", "crash", "leave", "crash"};
  std::vector<Millis> churn_times;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const Millis at = static_cast<Millis>(30 + 40 * i) * kSecond;
    const auto probe = harness::parse_scenario(d.dump());
    harness::World w(probe, 21);
    w.run_until(SimTime{at - 1});
    std::string victim;
    for (const auto& [cid, dep] : w.deployer().deployments()) {
      if (dep.component_type != "replication-service" || !w.kernel().alive(dep.node)) continue;
      for (const auto& n : probe.nodes) {
        if (n.id == dep.node && n.region == "east" && (victim.empty() || n.name < victim)) victim = n.name;
      }
    }
    if (victim.empty()) {
      o.require(false, "no live host to remove before churn event " + std::to_string(i + 1));
      return o;
    }
    d["churn"].push_back(Json{{"at", at}, {"op", ops[i]}, {"node", victim}});
    churn_times.push_back(at);
  }

  const auto s = harness::parse_scenario(d.dump());
  const Millis until = churn_times.back() + 40 * kSecond;
  const auto r = harness::run(s, 21, SimTime{until});
  const Millis allowance = s.policies.deploy.fail_timeout + 2 * s.policies.deploy.heartbeat_period;

  // Quiescent samples: whole seconds not inside a repair allowance.
  std::size_t samples = 0, low = 0;
  std::size_t min_count = SIZE_MAX;
  for (Millis t = 10 * kSecond; t <= until; t += kSecond) {
    const bool settling = std::any_of(churn_times.begin(), churn_times.end(),
                                      [&](Millis c) { return t >= c && t <= c + allowance; });
    if (settling) continue;
    ++samples;
    const auto n = harness::instances_at(r.trace, constraint, t);
    min_count = std::min(min_count, n);
    low += n < 5;
  }
  Millis worst = 0;
  std::size_t over = 0, open = 0;
  for (const auto& v : r.metrics["violations"]) {
    worst = std::max(worst, v["duration_ms"].get<Millis>());
    over += v["duration_ms"].get<Millis>() > allowance;
    open += v["open"].get<bool>();
  }
  const std::size_t violations = r.metrics["violations"].size();
  o.require(low == 0, std::to_string(low) + " of " + std::to_string(samples) + " quiescent samples below 5 (min " + std::to_string(min_count) + ")");
  o.require(over == 0 && open == 0, std::to_string(over) + " violation(s) longer than " + std::to_string(allowance) +
                                        " ms, " + std::to_string(open) + " open; worst " + std::to_string(worst) + " ms");
  o.require(violations >= 1, "churn produced no violation, so the bound was not exercised");
  if (o.pass) {
    o.detail = "6 crash/leave events on hosts; " + std::to_string(samples) + " quiescent samples all >= 5 (min " +
               std::to_string(min_count) + "); " + std::to_string(violations) + " violations, worst " +
               std::to_string(worst) + " ms <= " + std::to_string(allowance) + " ms";
  }
  return o;
}

// 6 -------------------------------------------------------------------------

struct KbRig {
  sim::Kernel kernel;
  overlay::Overlay overlay{kernel};
  pubsub::PubSub ps{kernel};
  knowledge::KnowledgeBase kb;
  std::vector<NodeId> nodes;

  explicit KbRig(knowledge::KbPolicy policy) : kernel(3, {"a", "b", "c"}), kb(kernel, overlay, &ps, policy) {
    for (int i = 0; i < 48; ++i) {
      const NodeId id = guid_of("node:c" + std::to_string(i));
      kernel.add_node({id, std::string(1, static_cast<char>('a' + i % 3)), GeoPoint{}, 16, 4, true});
      overlay.join(id);
      nodes.push_back(id);
    }
    ps.attach();
  }
};

Outcome caching() {
  Outcome o;
  knowledge::KbPolicy on, off;
  off.caching = false;
  KbRig with(on), without(off);
  std::vector<Guid> guids;
  for (int i = 0; i < 60; ++i) {
    knowledge::Fact f;
    f.kind = "k" + std::to_string(i % 5);
    f.body = AttributeList({{"v", i}, {"place", "p" + std::to_string(i % 7)}, {"temp_c", 15.5 + i}});
    guids.push_back(with.kb.put_fact(with.nodes[0], f, 2).guid);
    without.kb.put_fact(without.nodes[0], f, 2);
  }
  with.kernel.run_until(SimTime{kSecond});
  without.kernel.run_until(SimTime{kSecond});

  // 500 (requester, fact) draws, each fetched twice: 1000 accesses.
  std::mt19937_64 rng(6);
  std::size_t differing = 0, remote = 0, not_faster = 0, first_hops = 0, repeat_hops = 0;
  for (int i = 0; i < 500; ++i) {
    const Guid& g = guids[rng() % guids.size()];
    const std::size_t who = rng() % with.nodes.size();
    std::size_t first = 0;
    bool first_remote = false;
    for (int rep = 0; rep < 2; ++rep) {
      const auto a = with.kb.get_fact(with.nodes[who], g);
      const auto b = without.kb.get_fact(without.nodes[who], g);
      if (!a.fact || !b.fact || a.fact->canonical() != b.fact->canonical()) ++differing;
      if (rep == 0) {
        first = a.hops;
        first_remote = !with.overlay.holds(with.nodes[who], g) && !a.from_cache && a.hops >= 1;
      } else if (first_remote) {
        ++remote;
        first_hops += first;
        repeat_hops += a.hops;
        not_faster += a.hops >= first;
      }
    }
  }
  o.require(differing == 0, std::to_string(differing) + " of 1000 accesses returned different bodies");
  o.require(remote > 0, "workload had no remote first fetches");
  o.require(not_faster == 0, std::to_string(not_faster) + " of " + std::to_string(remote) + " remote repeat fetches were not cheaper");
  if (o.pass) {
    o.detail = "1000 accesses bit-identical with cache on/off; " + std::to_string(remote) + " remote pairs, hops " +
               std::to_string(first_hops) + " first vs " + std::to_string(repeat_hops) + " repeat";
  }
  return o;
}

// 7 -------------------------------------------------------------------------

Outcome matchlet_completeness() {
  Outcome o;
  const NodeId node = guid_of("node:m0");
  std::size_t nonempty = 0, emissions = 0, mismatched = 0, repeated = 0;
  const int cases = 300;
  for (std::uint64_t seed = 1; seed <= cases; ++seed) {
    std::mt19937_64 rng(seed * 104729);
    const auto spec = oracle::random_matchlet(rng, 3);
    const auto stream = oracle::random_stream(rng, 1 + rng() % 200);
    const auto facts = oracle::random_facts(rng);
    sim::Kernel kernel(seed, {"r"});
    kernel.add_node(sim::NodeProfile{node, "r", GeoPoint{}, 8, 8, true});
    matching::MemoryFactSource source;
    for (const auto& f : facts) source.add(f);
    matching::MatchingEngine engine(kernel, nullptr, source);
    auto& m = engine.register_matchlet(node, spec.to_json());
    for (const auto& e : stream) m.on_any(e);

    std::set<std::vector<std::uint64_t>> got;
    for (const auto& em : m.emissions()) repeated += !got.insert(em.contributing).second;
    if (got != spec.expected(stream, facts) || m.overflows() != 0) {
      if (mismatched == 0) o.require(false, "seed " + std::to_string(seed) + " differs from the brute-force oracle");
      ++mismatched;
    }
    nonempty += !got.empty();
    emissions += got.size();
  }
  o.require(repeated == 0, std::to_string(repeated) + " repeated contributing-id sets");
  o.require(nonempty >= cases / 4, "only " + std::to_string(nonempty) + " cases produced emissions");
  if (!o.pass && mismatched > 1) o.detail += " (" + std::to_string(mismatched) + " cases in total)";
  if (o.pass) {
    o.detail = std::to_string(cases) + " random matchlets (<=3 patterns, <=200 events, window <=60 s): " +
               std::to_string(emissions) + " emissions equal the oracle, no repeated id sets";
  }
  return o;
}

// 8 -------------------------------------------------------------------------

Json discovery_doc(bool preregistered, bool stored) {
  const Json matchlet = Json::parse(R"({"id": "parking", "patterns": [{"var": "p", "type": "parking-space-free"}],
    "emit": {"type": "ParkingAlert", "attributes": {"street": "${p.street}", "spaces": "${p.spaces}"}}})");
  Json d = Json::parse(R"({
    "name": "discovery", "epoch": "2003-06-25T16:00:00",
    "topology": {"nodes": [
      {"id": "uni-1", "region": "r"}, {"id": "uni-2", "region": "r"}, {"id": "town-1", "region": "r"},
      {"id": "car-park", "region": "r"}]},
    "sensors": [{"id": "bay-sensor", "node": "car-park", "schedule": [
      {"at": 60000, "type": "parking-space-free", "attributes": {"street": "Market Street", "spaces": 2}},
      {"at": 120000, "type": "parking-space-free", "attributes": {"street": "North Street", "spaces": 1}},
      {"at": 180000, "type": "parking-space-free", "attributes": {"street": "South Street", "spaces": 4}}]}]
  })");
  if (preregistered) {
    d["matchlets"] = Json::array({Json{{"node", "uni-1"}, {"matchlet", matchlet}}});
  } else {
    d["discovery"] = Json{{"node", "uni-1"}};
    if (stored) {
      d["bundles"] = Json::array({Json{{"bundle_id", "parking-bundle"}, {"component_type", "matchlet"},
                                       {"payload", matchlet}, {"discovery_type", "parking-space-free"}}});
    }
  }
  return d;
}

std::vector<std::string> emit_lines(const sim::Trace& trace) {
  std::vector<std::string> out;
  for (const auto& r : trace) {
    if (r.kind != "match.emit") continue;
    const Json& e = r.detail["event"];
    out.push_back(std::to_string(r.t.millis) + " " + r.detail["matchlet"].get<std::string>() + " " +
                  e["type"].get<std::string>() + " " + e["attributes"].dump());
  }
  return out;
}

std::size_t count_kind(const sim::Trace& trace, const std::string& kind) {
  return static_cast<std::size_t>(std::count_if(trace.begin(), trace.end(), [&](const auto& r) { return r.kind == kind; }));
}

Outcome discovery() {
  Outcome o;
  const Millis until = 240 * kSecond;
  const auto base_s = harness::parse_scenario(discovery_doc(true, false).dump());
  const auto disc_s = harness::parse_scenario(discovery_doc(false, true).dump());
  // One unknown event, so one unhandled record.
  Json none_doc = discovery_doc(false, false);
  none_doc["sensors"][0]["schedule"].erase(1);
  none_doc["sensors"][0]["schedule"].erase(1);
  const auto none_s = harness::parse_scenario(none_doc.dump());
  const auto base = harness::run(base_s, 8, SimTime{until});
  const auto disc = harness::run(disc_s, 8, SimTime{until});
  const auto none = harness::run(none_s, 8, SimTime{until});

  const auto want = emit_lines(base.trace);
  o.require(want.size() == 3, "baseline emitted " + std::to_string(want.size()) + " alerts");
  o.require(emit_lines(disc.trace) == want, "discovery emissions differ from the pre-registered baseline");
  const auto deploys = count_kind(disc.trace, "match.discovery_deploy");
  o.require(deploys == 1, "discovery deployed " + std::to_string(deploys) + " times");
  o.require(count_kind(disc.trace, "match.unhandled") == 0, "unhandled records despite a stored bundle");
  const auto unhandled = count_kind(none.trace, "match.unhandled");
  o.require(unhandled == 1, std::to_string(unhandled) + " match.unhandled records without a bundle");
  o.require(emit_lines(none.trace).empty(), "emissions without a bundle");
  o.require(none.trace.back().kind == "sim.summary", "run without a bundle did not complete");
  if (o.pass) o.detail = "3 emissions equal the pre-registered baseline after one discovery deploy; no bundle -> exactly 1 match.unhandled";
  return o;
}

// 9 -------------------------------------------------------------------------

// Independent replay of the movement-threshold rule over raw coordinates.
std::vector<std::size_t> replay_filter(const std::vector<std::pair<double, double>>& walk, double threshold) {
  std::vector<std::size_t> out;
  bool have = false;
  double lat = 0, lon = 0;
  for (std::size_t i = 0; i < walk.size(); ++i) {
    if (!have || oracle::haversine_m(lat, lon, walk[i].first, walk[i].second) > threshold) {
      out.push_back(i);
      have = true;
      lat = walk[i].first;
      lon = walk[i].second;
    }
  }
  return out;
}

Outcome distance_filter() {
  Outcome o;
  std::size_t total = 0;
  const int walks = 20;
  for (std::uint64_t seed = 1; seed <= walks; ++seed) {
    sim::Kernel kernel(seed, {"r"});
    const NodeId a = guid_of("node:f1"), b = guid_of("node:f2");
    kernel.add_node({a, "r", GeoPoint{}, 4, 4, true});
    kernel.add_node({b, "r", GeoPoint{}, 4, 4, true});
    pubsub::PubSub ps(kernel);
    ps.attach();
    pipeline::PipelineHost host(kernel, &ps);
    pipeline::register_builtin_components(host);
    auto& sink = static_cast<pipeline::Collector&>(host.deploy({"sink", "collector", b, Json::object(), {}}));
    const double threshold = 20.0 + 10.0 * static_cast<double>(seed % 5);
    host.deploy({"filter", "distance_filter", a, Json{{"attribute", "pos"}, {"threshold_m", threshold}}, {"sink"}});

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> step(-0.0006, 0.0006);
    std::vector<std::pair<double, double>> walk;
    double lat = 56.3397, lon = -2.80753;
    for (int i = 0; i < 100; ++i) {
      lat += step(rng);
      lon += step(rng);
      walk.emplace_back(lat, lon);
      Event e;
      e.type_name = "user-location";
      e.attributes.add("user", "Anna");
      e.attributes.add("pos", GeoPoint{lat, lon});
      e.event_id = static_cast<std::uint64_t>(i + 1);
      e.timestamp = SimTime{static_cast<Millis>(i) * kSecond};
      kernel.schedule(e.timestamp, [&host, ev = std::make_shared<const Event>(e)] { host.put("filter", ev); });
    }
    kernel.run_until(SimTime{200 * kSecond});
    std::vector<std::size_t> got;
    for (const auto& e : sink.received) got.push_back(e->event_id - 1);
    const auto expect = replay_filter(walk, threshold);
    o.require(got == expect, "walk " + std::to_string(seed) + ": " + std::to_string(got.size()) + " emitted, oracle " +
                                 std::to_string(expect.size()));
    o.require(!expect.empty() && expect.size() < walk.size(), "walk " + std::to_string(seed) + " does not exercise the filter");
    total += got.size();
  }
  if (o.pass) o.detail = std::to_string(walks) + " 100-step walks, " + std::to_string(total) + " emissions equal the replay oracle";
  return o;
}

struct Criterion {
  const char* name;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {"ice-cream end-to-end", icecream},
      {"overlay routing oracle", overlay_oracle},
      {"self-healing replicas", self_healing},
      {"pub/sub delivery oracle", pubsub_oracle},
      {"evolution under churn", evolution},
      {"promiscuous caching", caching},
      {"matchlet completeness", matchlet_completeness},
      {"discovery matchlets", discovery},
      {"distance filter", distance_filter},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0;
  for (int i = 0; i < 9; ++i) {
    if (only != 0 && only != i + 1) continue;
    Outcome out;
    const auto t0 = Clock::now();
    try {
      out = criteria[i].run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    failed += !out.pass;
    std::printf("%s %d %s: %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, out.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
