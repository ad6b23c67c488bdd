#include "ctxmatch/harness/world.hpp"

#include "ctxmatch/core/error.hpp"
#include "ctxmatch/harness/metrics.hpp"
#include "ctxmatch/matching/component.hpp"
#include "ctxmatch/pipeline/builtins.hpp"

namespace ctxmatch::harness {

namespace {

sim::NodeProfile profile_of(const NodeDecl& n) {
  return sim::NodeProfile{n.id, n.region, n.coords, n.storage_slots, n.compute_slots, true};
}

}  // namespace

World::World(const Scenario& s, std::uint64_t seed)
    : scenario_(s), kernel_(seed, s.regions), overlay_(kernel_), pubsub_(kernel_) {
  kernel_.on_membership([this](const NodeId& n, sim::MembershipChange how) {
    if (how == sim::MembershipChange::Join) {
      overlay_.join(n);
    } else if (overlay_.contains(n)) {
      overlay_.depart(n);
    }
  });
  for (const auto& n : s.nodes) add_node(n);
  pubsub_.set_covering(s.policies.covering);
  pubsub_.attach();

  kb_ = std::make_unique<knowledge::KnowledgeBase>(kernel_, overlay_, &pubsub_, s.policies.kb);
  facts_ = std::make_unique<matching::KbFactSource>(*kb_);
  matching::EngineConfig ec;
  ec.clock.epoch_offset_in_day = s.epoch.offset_in_day;
  ec.walking_speed_kmh = s.policies.walking_speed_kmh;
  engine_ = std::make_unique<matching::MatchingEngine>(kernel_, &pubsub_, *facts_, ec);
  host_ = std::make_unique<pipeline::PipelineHost>(kernel_, &pubsub_);
  pipeline::register_builtin_components(*host_);
  matching::register_matchlet_component(*host_, *engine_);
  deploy_ = std::make_unique<deploy::DeployManager>(kernel_, pubsub_, overlay_, s.policies.deploy);
  deploy_->set_pipeline(host_.get());
  deploy_->set_matching(engine_.get());
  deploy_->set_knowledge(kb_.get());

  for (const auto& n : s.nodes) {
    deploy_->install_infrastructure(n.id);
    if (n.allow) deploy_->set_allow_list(n.id, *n.allow);
  }

  const NodeId first = s.nodes.front().id;
  for (const auto& b : s.bundles) {
    deploy_->add_bundle(b.bundle);
    if (b.discovery_type) {
      overlay_.store_named(first, matching::MatchingEngine::bundle_key(*b.discovery_type), b.bundle.to_json().dump(),
                           s.policies.kb.k, "bundle");
    }
  }
  for (std::size_t i = 0; i < s.constraints.size(); ++i) {
    kernel_.emit("deploy.constraint", std::nullopt, Json{{"index", i}, {"constraint", s.constraints[i].to_json()}});
    deploy_->add_constraint(s.constraints[i]);
  }
  deploy_->start();

  engine_->set_bundle_fetch([this](const NodeId& at, const Guid& key) -> std::optional<std::string> {
    const auto f = overlay_.fetch(at, key);
    if (!f.found()) return std::nullopt;
    return *f.body;
  });
  engine_->set_deployer([this](const NodeId& node, const std::string& bytes) -> std::string {
    deploy::Bundle b;
    try {
      b = deploy::Bundle::from_json(Json::parse(bytes));
    } catch (const Json::exception& e) {
      return std::string("malformed bundle: ") + e.what();
    } catch (const Error& e) {
      return std::string("malformed bundle: ") + e.what();
    }
    const auto r = deploy_->deploy_bundle(node, b);
    return r.ok ? std::string() : r.reason;
  });
  if (s.discovery_node) engine_->enable_discovery(node_id(*s.discovery_node), s.discovery_ignore);

  for (const auto& m : s.matchlets) {
    const std::string id = m.def.at("id").get<std::string>();
    deploy_->deploy_bundle(node_id(m.node), deploy::Bundle::make(id, "matchlet", m.def));
  }
  for (const auto& [name, pos] : s.gazetteer) {
    knowledge::Fact f;
    f.kind = "gazetteer";
    f.body.add("name", name);
    f.body.add("pos", pos);
    kb_->put_fact(first, std::move(f));
  }
  for (const auto& f : s.facts) kb_->put_fact(node_id(f.origin), f.fact);
  deploy_components();

  kb_->start();
  schedule_churn();
  kernel_.schedule_periodic(SimTime{s.policies.census_period}, s.policies.census_period, [this] { census(); });
}

World::~World() = default;

void World::add_node(const NodeDecl& n) {
  kernel_.add_node(profile_of(n));
  kernel_.emit("scenario.node", n.id, Json{{"name", n.name}});
}

NodeId World::node_id(const std::string& name) const {
  const NodeDecl* n = scenario_.node(name);
  if (n == nullptr) throw NotFound("unknown node '" + name + "'");
  return n->id;
}

void World::deploy_components() {
  for (const auto& c : scenario_.components) {
    Json payload = Json::object();
    payload["id"] = c.id;
    payload["config"] = c.config;
    deploy_->deploy_bundle(node_id(c.node), deploy::Bundle::make(c.id, c.type, payload));
  }
  // Wired after every component exists so declaration order does not matter.
  for (const auto& c : scenario_.components) {
    for (const auto& out : c.outputs) {
      if (host_->find(c.id) != nullptr && host_->find(out) != nullptr) host_->connect(c.id, out);
    }
  }
}

void World::schedule_churn() {
  for (const auto& c : scenario_.churn) {
    switch (c.op) {
      case ChurnDecl::Op::Crash: kernel_.crash(node_id(c.node), c.at); break;
      case ChurnDecl::Op::Leave: kernel_.leave(node_id(c.node), c.at); break;
      case ChurnDecl::Op::Join: {
        const NodeDecl n = *c.profile;
        kernel_.join(profile_of(n), c.at);
        kernel_.schedule(c.at, [this, n] {
          kernel_.emit("scenario.node", n.id, Json{{"name", n.name}});
          deploy_->install_infrastructure(n.id);
          if (n.allow) deploy_->set_allow_list(n.id, *n.allow);
        });
        break;
      }
    }
  }
}

void World::census() {
  Json facts = Json::array();
  std::size_t available = 0;
  for (const auto& g : kb_->stored_facts()) {
    const auto n = kb_->live_replicas(g);
    available += n > 0;
    facts.push_back(Json{{"guid", g.hex()}, {"kind", kb_->kind_of(g).value_or("")}, {"replicas", n}});
  }
  kernel_.emit("kb.census", std::nullopt,
               Json{{"available", available}, {"total", kb_->stored_facts().size()}, {"facts", std::move(facts)}});
}

void World::run_until(SimTime t) {
  if (finished_) throw InvalidArgument("world already finished");
  kernel_.run_until(t);
}

void World::finish() {
  if (finished_) return;
  finished_ = true;
  const auto& c = kernel_.counters();
  Json by_kind = Json::object();
  for (const auto& [k, n] : c.sent_by_kind) by_kind[k] = n;
  kernel_.emit("sim.summary", std::nullopt,
               Json{{"sent", c.sent}, {"delivered", c.delivered}, {"dropped", c.dropped}, {"sent_by_kind", std::move(by_kind)}});
}

RunResult run(const Scenario& s, std::uint64_t seed, SimTime until) {
  World w(s, seed);
  if (until.millis > 0) w.run_until(until);
  w.finish();
  RunResult r;
  r.trace = w.kernel().trace();
  r.metrics = stats(r.trace);
  return r;
}

}  // namespace ctxmatch::harness
