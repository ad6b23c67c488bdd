#include <doctest.h>

#include <random>

#include "ctxmatch/core/error.hpp"
#include "ctxmatch/deploy/deploy_manager.hpp"
#include "ctxmatch/matching/component.hpp"

using namespace ctxmatch;
using namespace ctxmatch::deploy;

namespace {

struct Rig {
  sim::Kernel kernel;
  overlay::Overlay overlay{kernel};
  pubsub::PubSub ps{kernel};
  matching::MemoryFactSource facts;
  matching::MatchingEngine engine{kernel, &ps, facts};
  pipeline::PipelineHost host{kernel, &ps};
  std::unique_ptr<DeployManager> dm;
  std::vector<NodeId> nodes;

  explicit Rig(std::vector<std::pair<std::string, int>> layout, int compute = 4, DeployConfig cfg = {}) : kernel(7, {"A", "B"}) {
    kernel.on_membership([this](const NodeId& n, sim::MembershipChange how) {
      if (how == sim::MembershipChange::Join) {
        overlay.join(n);
      } else if (overlay.contains(n)) {
        overlay.depart(n);
      }
    });
    int i = 0;
    for (const auto& [region, count] : layout) {
      for (int c = 0; c < count; ++c) add(region, compute, "node:d" + std::to_string(i++));
    }
    ps.attach();
    pipeline::register_builtin_components(host);
    matching::register_matchlet_component(host, engine);
    dm = std::make_unique<DeployManager>(kernel, ps, overlay, cfg);
    dm->set_pipeline(&host);
    dm->set_matching(&engine);
  }

  NodeId add(const std::string& region, int compute, const std::string& name) {
    const NodeId id = guid_of(name);
    kernel.add_node(sim::NodeProfile{id, region, GeoPoint{}, 8, compute, true});
    nodes.push_back(id);
    return id;
  }

  void install_all() {
    for (const auto& n : nodes) dm->install_infrastructure(n);
  }

  std::vector<sim::TraceRecord> records(const std::string& kind) const {
    std::vector<sim::TraceRecord> out;
    for (const auto& r : kernel.trace()) {
      if (r.kind == kind) out.push_back(r);
    }
    return out;
  }

  std::size_t true_count(const std::string& type, const std::string& region) const {
    std::size_t n = 0;
    for (const auto& [id, d] : dm->deployments()) {
      n += d.component_type == type && kernel.alive(d.node) && kernel.node(d.node).region == region;
    }
    return n;
  }
};

const Json kMatchlet = Json::parse(R"({"id":"echo","patterns":[{"var":"a","type":"ping"}],"emit":{"type":"pong","attributes":{"n":"${a.n}"}}})");

Bundle storelet() { return Bundle::make("repl", "replication-service", Json{{"service", "replication"}}, 1, 1); }

}  // namespace

TEST_SUITE("deploy") {

TEST_CASE("bundle round trip and verification") {
  const Bundle b = Bundle::make("m", "matchlet", kMatchlet, 2, 0);
  CHECK(b.verify());
  const Bundle c = Bundle::from_json(b.to_json());
  CHECK(c.verify());
  CHECK(c.checksum == b.checksum);
  CHECK(c.compute_slots == 2);
  Bundle t = b;
  t.payload += " ";
  CHECK_FALSE(t.verify());
  CHECK_THROWS_AS(Bundle::from_json(Json::parse(R"({"bundle_id":"x"})")), InvalidArgument);
  CHECK(Bundle::from_json(Json::parse(R"({"bundle_id":"x","component_type":"bus","payload":{"a":1}})")).verify());
}

TEST_CASE("infrastructure install") {
  Rig r({{"A", 3}});
  int arrivals = 0;
  r.ps.subscribe(r.nodes[2], pubsub::Subscription{"node-arrival", {}}, "count", [&](const EventPtr&) { ++arrivals; });
  const Bundle b = Bundle::make("m", "matchlet", kMatchlet);
  CHECK(r.dm->deploy_bundle(r.nodes[0], b).reason == "infrastructure missing");
  r.dm->install_infrastructure(r.nodes[0]);
  CHECK_THROWS_AS(r.dm->install_infrastructure(r.nodes[0]), InvalidArgument);
  r.kernel.run_until(SimTime{100});
  CHECK(arrivals == 1);
  CHECK(r.records("deploy.install").size() == 1);
  const auto res = r.dm->deploy_bundle(r.nodes[0], b);
  CHECK(res.ok);
  CHECK(r.engine.find(r.nodes[0], "echo") != nullptr);
  CHECK(r.records("deploy.accept").size() == 1);
  CHECK(r.dm->undeploy(res.component_id));
  CHECK(r.engine.find(r.nodes[0], "echo") == nullptr);
  CHECK_FALSE(r.dm->undeploy(res.component_id));
}

TEST_CASE("rejections leave node state unchanged") {
  Rig r({{"A", 2}}, 2);
  r.install_all();
  const NodeId n = r.nodes[0];
  r.dm->set_allow_list(r.nodes[1], {"bus"});
  std::mt19937_64 rng(5);
  int accepted = 0, rejected = 0;
  for (int i = 0; i < 300; ++i) {
    const NodeId target = r.nodes[rng() % 2];
    Json m = kMatchlet;
    m["id"] = "m" + std::to_string(i);
    Bundle b;
    switch (rng() % 6) {
      case 0: b = Bundle::make("b" + std::to_string(i), "matchlet", m); break;
      case 1: b = Bundle::make("b" + std::to_string(i), "matchlet", m); b.payload += "x"; break;
      case 2: b = Bundle::make("b" + std::to_string(i), "teleporter", m); break;
      case 3: b = Bundle::make("b" + std::to_string(i), "bus", Json{{"id", "bus" + std::to_string(i)}}, static_cast<int>(rng() % 3)); break;
      case 4: b = Bundle::make("b" + std::to_string(i), "matchlet", Json{{"id", "broken"}}); break;
      default: b = Bundle::make("b" + std::to_string(i), "filter", Json{{"id", "f" + std::to_string(i)}, {"outputs", {"missing"}}}); break;
    }
    const auto deployments = r.dm->deployments().size();
    const int free = r.dm->free_compute(target);
    const auto comps = r.host.components().size();
    const auto instances = r.engine.instances().size();
    const auto res = r.dm->deploy_bundle(target, b);
    if (res.ok) {
      ++accepted;
      CHECK(r.dm->free_compute(target) == free - b.compute_slots);
      r.dm->undeploy(res.component_id);
      continue;
    }
    ++rejected;
    CAPTURE(res.reason);
    CHECK(r.dm->deployments().size() == deployments);
    CHECK(r.dm->free_compute(target) == free);
    CHECK(r.host.components().size() == comps);
    CHECK(r.engine.instances().size() == instances);
    CHECK(r.records("deploy.reject").back().detail["reason"] == res.reason);
  }
  CHECK(accepted > 20);
  CHECK(rejected > 100);
}

TEST_CASE("capacity and allow-list") {
  Rig r({{"A", 2}}, 0);
  r.install_all();
  CHECK(r.dm->deploy_bundle(r.nodes[0], Bundle::make("m", "matchlet", kMatchlet)).reason == "insufficient slots");
  Rig s({{"A", 1}});
  s.install_all();
  s.dm->set_allow_list(s.nodes[0], {"storelet"});
  CHECK(s.dm->deploy_bundle(s.nodes[0], Bundle::make("m", "matchlet", kMatchlet)).reason.find("not allowed") != std::string::npos);
  CHECK(s.dm->deploy_bundle(s.nodes[0], Bundle::make("s", "storelet", Json::object())).ok);
  CHECK(s.dm->deploy_bundle(s.nodes[0], Bundle::make("s2", "storelet", Json::object())).reason == "already hosting storelet");
}

TEST_CASE("bundle-deployed matchlet behaves like a directly registered one") {
  auto run = [](bool via_bundle) {
    Rig r({{"A", 3}});
    r.install_all();
    if (via_bundle) {
      REQUIRE(r.dm->deploy_bundle(r.nodes[1], Bundle::make("m", "matchlet", kMatchlet)).ok);
    } else {
      r.engine.register_matchlet(r.nodes[1], kMatchlet);
    }
    for (int i = 0; i < 5; ++i) {
      r.kernel.schedule(SimTime{100 * i}, [&r, i] {
        Event e;
        e.type_name = "ping";
        e.timestamp = r.kernel.now();
        e.attributes.add("n", i);
        r.ps.publish(r.nodes[static_cast<std::size_t>(i) % 3], e);
      });
    }
    r.kernel.run_until(SimTime{1000});
    std::vector<std::string> out;
    for (const auto& rec : r.kernel.trace()) {
      if (rec.kind.rfind("deploy.", 0) != 0) out.push_back(rec.to_line());
    }
    return out;
  };
  const auto direct = run(false);
  CHECK(run(true) == direct);
  CHECK(std::count_if(direct.begin(), direct.end(), [](const std::string& l) { return l.find("match.emit") != std::string::npos; }) == 5);
}

TEST_CASE("failure monitor") {
  Rig r({{"A", 6}});
  r.install_all();
  r.dm->start();
  r.kernel.run_until(SimTime{30 * kSecond});
  CHECK(r.records("monitor.departed").empty());

  const SimTime crash_at{31 * kSecond + 300};
  const NodeId victim = r.nodes[3];
  r.kernel.crash(victim, crash_at);
  r.kernel.run_until(SimTime{60 * kSecond});
  const auto departed = r.records("monitor.departed");
  REQUIRE(departed.size() == 1);
  CHECK(departed[0].detail["node"] == victim.hex());
  const auto& cfg = r.dm->config();
  CHECK(departed[0].t.millis <= crash_at.millis + cfg.fail_timeout + cfg.heartbeat_period);
  CHECK(departed[0].t.millis > crash_at.millis + cfg.fail_timeout - cfg.heartbeat_period);

  SUBCASE("graceful leave is a withdrawal only") {
    int withdrawals = 0, departures = 0;
    r.ps.subscribe(r.nodes[0], pubsub::Subscription{"node-withdrawal", {}}, "w", [&](const EventPtr&) { ++withdrawals; });
    r.ps.subscribe(r.nodes[0], pubsub::Subscription{"node-departed", {}}, "d", [&](const EventPtr&) { ++departures; });
    r.kernel.leave(r.nodes[4], SimTime{61 * kSecond});
    r.kernel.run_until(SimTime{90 * kSecond});
    CHECK(withdrawals == 1);
    CHECK(departures == 0);
    CHECK(r.records("monitor.departed").size() == 1);
  }
  SUBCASE("the monitor itself crashing is detected by its successor") {
    const NodeId leader = *r.dm->leader("A");
    const SimTime t{61 * kSecond};
    r.kernel.crash(leader, t);
    r.kernel.run_until(SimTime{90 * kSecond});
    const auto all = r.records("monitor.departed");
    REQUIRE(all.size() == 2);
    CHECK(all[1].detail["node"] == leader.hex());
    CHECK(all[1].t.millis <= t.millis + cfg.fail_timeout + 2 * cfg.heartbeat_period);
  }
}

TEST_CASE("evolution: minimum instances") {
  Rig r({{"A", 8}, {"B", 3}});
  r.install_all();
  r.dm->add_bundle(storelet());
  r.dm->add_constraint(PlacementConstraint::from_json(
      Json::parse(R"({"kind":"min_instances","component_type":"replication-service","region":"A","n":5})")));
  r.dm->start();
  r.kernel.run_until(SimTime{5 * kSecond});
  CHECK(r.true_count("replication-service", "A") == 5);
  CHECK(r.true_count("replication-service", "B") == 0);
  CHECK(r.dm->engine("A")->plan().empty());

  // Crash a host: exactly one replacement, in region A.
  NodeId victim;
  for (const auto& [id, d] : r.dm->deployments()) victim = d.node;
  const auto accepts_before = r.records("deploy.accept").size();
  r.kernel.crash(victim, SimTime{10 * kSecond});
  r.kernel.run_until(SimTime{30 * kSecond});
  const auto accepts = r.records("deploy.accept");
  REQUIRE(accepts.size() == accepts_before + 1);
  CHECK(accepts.back().detail["region"] == "A");
  CHECK(r.true_count("replication-service", "A") == 5);
  const auto& cfg = r.dm->config();
  CHECK(accepts.back().t.millis - 10 * kSecond <= cfg.fail_timeout + 2 * cfg.heartbeat_period);
}

TEST_CASE("evolution: infeasible, then repaired when capacity arrives") {
  Rig r({{"A", 3}});
  r.install_all();
  r.dm->add_bundle(storelet());
  r.dm->add_constraint(PlacementConstraint{PlacementConstraint::Kind::MinInstances, "replication-service", "A", 4});
  r.dm->start();
  r.kernel.run_until(SimTime{5 * kSecond});
  CHECK(r.true_count("replication-service", "A") == 3);
  const auto infeasible = r.records("evolve.infeasible");
  REQUIRE_FALSE(infeasible.empty());
  CHECK(infeasible.back().detail["violations"][0]["deficit"] == 1);
  CHECK(infeasible.back().detail["violations"][0]["available"] == 0);
  CHECK(r.dm->engine("A")->plan().empty());

  r.kernel.join(sim::NodeProfile{guid_of("node:late"), "A", GeoPoint{}, 8, 4, true}, SimTime{6 * kSecond});
  r.kernel.schedule(SimTime{6 * kSecond + 1}, [&] { r.dm->install_infrastructure(guid_of("node:late")); });
  r.kernel.run_until(SimTime{6 * kSecond + 500});
  CHECK(r.true_count("replication-service", "A") == 4);
  CHECK(r.records("evolve.plan").back().detail["trigger"] == "node-arrival");
}

TEST_CASE("plans never exceed the deficit") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    Rig r({{"A", 10}});
    r.install_all();
    r.dm->add_bundle(storelet());
    const int n = static_cast<int>(rng() % 8);
    r.dm->add_constraint(PlacementConstraint{PlacementConstraint::Kind::MinInstances, "replication-service", "A", n});
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      if (rng() % 3 == 0) r.dm->deploy_bundle(r.nodes[i], storelet());
    }
    const auto live = static_cast<int>(r.dm->count("replication-service", "A"));
    r.dm->start();
    CHECK(static_cast<int>(r.dm->count("replication-service", "A")) == std::max(n, live));
  }
}

TEST_CASE("evolution: max latency relocates the destination") {
  Rig r({{"A", 2}, {"B", 2}});
  r.install_all();
  const Bundle src = Bundle::make("src", "bus", Json{{"id", "src-bus"}});
  const Bundle dst = Bundle::make("dst", "filter", Json{{"config", {{"attribute", "pos"}, {"threshold_m", 10.0}}}});
  r.dm->add_bundle(src);
  r.dm->add_bundle(dst);
  const NodeId a0 = r.nodes[0], b0 = r.nodes[2];
  REQUIRE(r.dm->deploy_bundle(a0, src).ok);
  REQUIRE(r.dm->deploy_bundle(b0, dst).ok);
  r.dm->add_constraint(PlacementConstraint::from_json(Json::parse(R"({"kind":"max_latency","src_type":"bus","dst_type":"filter","ms":10})")));
  r.dm->start();
  r.kernel.run_until(SimTime{100});
  bool dst_in_a = false;
  for (const auto& [id, d] : r.dm->deployments()) {
    if (d.component_type == "filter") dst_in_a = r.kernel.node(d.node).region == "A";
  }
  CHECK(dst_in_a);
  CHECK(r.dm->engine("A")->plan().empty());
}

TEST_CASE("replica_count constraints set the knowledge target") {
  Rig r({{"A", 8}});
  knowledge::KnowledgeBase kb(r.kernel, r.overlay, &r.ps);
  r.dm->set_knowledge(&kb);
  r.dm->add_constraint(PlacementConstraint::from_json(Json::parse(R"({"kind":"replica_count","fact_kind":"gazetteer","k":7})")));
  CHECK(kb.kind_target("gazetteer") == 7);
  CHECK_THROWS_AS(PlacementConstraint::from_json(Json::parse(R"({"kind":"replica_count","fact_kind":"g","k":0})")), InvalidArgument);
  CHECK_THROWS_AS(PlacementConstraint::from_json(Json::parse(R"({"kind":"max_latency","src_type":"a","dst_type":"b","ms":0})")), InvalidArgument);
  CHECK_THROWS_AS(PlacementConstraint::from_json(Json::parse(R"({"kind":"nearby"})")), InvalidArgument);
}

TEST_CASE("storelet-gated storage") {
  DeployConfig cfg;
  cfg.storelet_gated_storage = true;
  Rig r({{"A", 6}}, 4, cfg);
  r.install_all();
  CHECK_FALSE(r.overlay.can_store(r.nodes[0]));
  REQUIRE(r.dm->deploy_bundle(r.nodes[0], Bundle::make("s", "storelet", Json::object())).ok);
  CHECK(r.overlay.can_store(r.nodes[0]));
  const auto stored = r.overlay.store(r.nodes[3], "data", 3);
  CHECK(stored.holders == std::vector<NodeId>{r.nodes[0]});
}

}  // TEST_SUITE
