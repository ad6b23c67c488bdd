#include "ctxmatch/deploy/deploy_manager.hpp"

#include <algorithm>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::deploy {

namespace {

const std::set<std::string> kStorageTypes = {"storelet", "replication-service"};

std::string pipeline_type(const std::string& type) {
  if (type == "filter") return "distance_filter";
  if (type == "bus") return "fanout_bus";
  return type;
}

std::string short_id(const NodeId& n) { return n.hex().substr(0, 8); }

const char* kind_name(PlacementConstraint::Kind k) {
  switch (k) {
    case PlacementConstraint::Kind::MinInstances: return "min_instances";
    case PlacementConstraint::Kind::ReplicaCount: return "replica_count";
    case PlacementConstraint::Kind::MaxLatency: return "max_latency";
  }
  return "?";
}

}  // namespace

// ---- constraints ----

Json PlacementConstraint::to_json() const {
  Json j = Json::object();
  j["kind"] = kind_name(kind);
  switch (kind) {
    case Kind::MinInstances:
      j["component_type"] = component_type;
      j["region"] = region;
      j["n"] = n;
      break;
    case Kind::ReplicaCount:
      j["fact_kind"] = fact_kind;
      j["k"] = k;
      break;
    case Kind::MaxLatency:
      j["src_type"] = src_type;
      j["dst_type"] = dst_type;
      j["ms"] = ms;
      break;
  }
  if (!bundle.empty()) j["bundle"] = bundle;
  return j;
}

PlacementConstraint PlacementConstraint::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) throw InvalidArgument("constraint: expected {kind, ...}");
  PlacementConstraint c;
  const std::string kind = j["kind"].get<std::string>();
  auto str = [&](const char* f) {
    if (!j.contains(f) || !j[f].is_string() || j[f].get<std::string>().empty()) {
      throw InvalidArgument("constraint " + kind + ": missing " + f);
    }
    return j[f].get<std::string>();
  };
  auto integer = [&](const char* f) {
    if (!j.contains(f) || !j[f].is_number_integer()) throw InvalidArgument("constraint " + kind + ": " + f + " must be an integer");
    return j[f].get<std::int64_t>();
  };
  if (kind == "min_instances") {
    c.kind = Kind::MinInstances;
    c.component_type = str("component_type");
    c.region = str("region");
    c.n = static_cast<int>(integer("n"));
    if (c.n < 0) throw InvalidArgument("constraint min_instances: n must be >= 0");
  } else if (kind == "replica_count") {
    c.kind = Kind::ReplicaCount;
    c.fact_kind = str("fact_kind");
    c.k = static_cast<int>(integer("k"));
    if (c.k < 1) throw InvalidArgument("constraint replica_count: k must be >= 1");
  } else if (kind == "max_latency") {
    c.kind = Kind::MaxLatency;
    c.src_type = str("src_type");
    c.dst_type = str("dst_type");
    c.ms = integer("ms");
    if (c.ms <= 0) throw InvalidArgument("constraint max_latency: ms must be > 0");
  } else {
    throw InvalidArgument("constraint: unknown kind '" + kind + "'");
  }
  if (j.contains("bundle")) c.bundle = str("bundle");
  return c;
}

// ---- manager ----

DeployManager::DeployManager(sim::Kernel& kernel, pubsub::PubSub& pubsub, overlay::Overlay& overlay, DeployConfig config)
    : kernel_(kernel), pubsub_(pubsub), overlay_(overlay), config_(config) {
  if (config_.heartbeat_period <= 0 || config_.fail_timeout <= 0) throw InvalidArgument("heartbeat period and timeout must be > 0");
  kernel_.on_withdraw([this](const NodeId& n) { on_withdraw(n); });
  if (config_.storelet_gated_storage) {
    overlay_.set_storage_filter([this](const NodeId& n) {
      return std::any_of(kStorageTypes.begin(), kStorageTypes.end(), [&](const std::string& t) { return hosts(n, t); });
    });
  }
}

DeployManager::~DeployManager() = default;

std::vector<std::string> DeployManager::regions() const { return kernel_.latency_model().regions(); }

void DeployManager::start() {
  if (started_) throw InvalidArgument("deploy manager already started");
  started_ = true;
  for (const auto& r : regions()) engines_.emplace(r, std::make_unique<EvolutionEngine>(*this, r));
  for (auto& [r, e] : engines_) {
    e->follow_leader();
    e->evolve("start");
  }
  kernel_.schedule_periodic(kernel_.now() + config_.heartbeat_period, config_.heartbeat_period, [this] { round(); });
}

EvolutionEngine* DeployManager::engine(const std::string& region) {
  auto it = engines_.find(region);
  return it == engines_.end() ? nullptr : it->second.get();
}

void DeployManager::round() {
  for (const auto& r : regions()) failure_monitor_tick(r);
  for (auto& [r, e] : engines_) {
    e->follow_leader();
    e->evolve("periodic");
  }
}

void DeployManager::install_infrastructure(const NodeId& node) {
  if (!kernel_.alive(node)) throw InvalidArgument("install_infrastructure: node " + node.hex() + " is not alive");
  if (installed_.count(node)) throw InvalidArgument("install_infrastructure: node " + node.hex() + " already installed");
  installed_.insert(node);
  kernel_.emit("deploy.install", node, Json{{"region", kernel_.node(node).region}});
  publish_resource(node, "node-arrival", node);
  const auto offset = static_cast<Millis>(kernel_.random_below(static_cast<std::uint64_t>(config_.heartbeat_period)));
  heartbeats_[node] = kernel_.schedule_periodic(kernel_.now() + offset, config_.heartbeat_period, [this, node] { heartbeat(node); });
}

void DeployManager::publish_resource(const NodeId& from, const std::string& type, const NodeId& about) {
  const auto& p = kernel_.node(about);
  Event e;
  e.type_name = type;
  e.timestamp = kernel_.now();
  e.attributes.add("node", about.hex());
  e.attributes.add("region", p.region);
  e.attributes.add("coords", p.coords);
  e.attributes.add("free_compute", free_compute(about));
  e.attributes.add("free_storage", free_storage(about));
  pubsub_.publish(from, std::move(e));
}

void DeployManager::heartbeat(const NodeId& node) {
  if (!kernel_.alive(node) || departed_.count(node)) return;
  const auto l = leader(kernel_.node(node).region);
  if (!l || *l == node) return;
  const SimTime sent = kernel_.now();
  const NodeId monitor = *l;
  kernel_.send(node, monitor, "deploy.heartbeat", [this, monitor, node, sent] {
    auto& last = last_seen_[monitor][node];
    last = std::max(last, sent);
  });
}

std::vector<NodeId> DeployManager::region_members(const std::string& region) const {
  std::vector<NodeId> out;
  for (const auto& n : installed_) {
    if (!departed_.count(n) && kernel_.node(n).region == region) out.push_back(n);
  }
  return out;
}

std::optional<NodeId> DeployManager::leader(const std::string& region) const {
  for (const auto& n : installed_) {
    if (!departed_.count(n) && kernel_.alive(n) && kernel_.node(n).region == region) return n;
  }
  return std::nullopt;
}

std::vector<NodeId> DeployManager::failure_monitor_tick(const std::string& region) {
  std::vector<NodeId> out;
  const auto l = leader(region);
  if (!l) return out;
  const SimTime now = kernel_.now();
  auto& seen = last_seen_[*l];
  for (const auto& m : region_members(region)) {
    if (m == *l) continue;
    auto [it, fresh] = seen.emplace(m, now);  // a new monitor grants a full timeout
    if (now - it->second <= config_.fail_timeout) continue;
    if (!record_departed(*l, m)) continue;
    kernel_.emit("monitor.departed", *l, Json{{"node", m.hex()}, {"region", region}, {"last_heartbeat", it->second.millis}});
    publish_resource(*l, "node-departed", m);
    mark_departed(m);
    out.push_back(m);
  }
  return out;
}

bool DeployManager::record_departed(const NodeId& at, const NodeId& node) {
  Json set = Json::array();
  const auto f = overlay_.fetch(at, departed_set_key());
  if (f.found()) set = Json::parse(*f.body);
  const std::string hex = node.hex();
  if (std::find(set.begin(), set.end(), Json(hex)) != set.end()) return false;
  set.push_back(hex);
  if (overlay_.size() > 0) overlay_.store_named(at, departed_set_key(), set.dump(), 3, "departed-set");
  return true;
}

void DeployManager::on_withdraw(const NodeId& node) {
  if (!installed_.count(node) || departed_.count(node)) return;
  if (record_departed(node, node)) publish_resource(node, "node-withdrawal", node);
  mark_departed(node);
}

void DeployManager::mark_departed(const NodeId& node) {
  if (!departed_.insert(node).second) return;
  if (auto it = heartbeats_.find(node); it != heartbeats_.end()) {
    kernel_.cancel(it->second);
    heartbeats_.erase(it);
  }
  std::vector<std::string> gone;
  for (const auto& [id, d] : deployments_) {
    if (d.node == node) gone.push_back(id);
  }
  for (const auto& id : gone) {
    teardown(deployments_.at(id));
    kernel_.emit("deploy.undeploy", node, Json{{"component", id}, {"reason", "node departed"}});
    deployments_.erase(id);
  }
  used_.erase(node);
}

bool DeployManager::hosts(const NodeId& node, const std::string& type) const {
  return std::any_of(deployments_.begin(), deployments_.end(),
                     [&](const auto& p) { return p.second.node == node && p.second.component_type == type; });
}

std::size_t DeployManager::count(const std::string& type, const std::string& region) const {
  std::size_t n = 0;
  for (const auto& [id, d] : deployments_) {
    n += d.component_type == type && !departed_.count(d.node) && kernel_.node(d.node).region == region;
  }
  return n;
}

int DeployManager::used_compute(const NodeId& node) const {
  auto it = used_.find(node);
  return it == used_.end() ? 0 : it->second.first;
}

int DeployManager::free_compute(const NodeId& node) const { return kernel_.node(node).compute_slots - used_compute(node); }

int DeployManager::free_storage(const NodeId& node) const {
  auto it = used_.find(node);
  return kernel_.node(node).storage_slots - (it == used_.end() ? 0 : it->second.second);
}

void DeployManager::add_bundle(Bundle b) {
  const std::string id = b.bundle_id;
  catalog_.insert_or_assign(id, std::move(b));
}

const Bundle* DeployManager::bundle(const std::string& bundle_id) const {
  auto it = catalog_.find(bundle_id);
  return it == catalog_.end() ? nullptr : &it->second;
}

const Bundle* DeployManager::bundle_for_type(const std::string& component_type) const {
  for (const auto& [id, b] : catalog_) {
    if (b.component_type == component_type) return &b;
  }
  return nullptr;
}

void DeployManager::add_constraint(PlacementConstraint c) {
  if (c.kind == PlacementConstraint::Kind::ReplicaCount && kb_ != nullptr) kb_->set_kind_target(c.fact_kind, c.k);
  constraints_.push_back(std::move(c));
}

std::string DeployManager::check(const NodeId& node, const Bundle& b) const {
  if (!kernel_.has_node(node) || !kernel_.alive(node)) return "node dead";
  if (!installed_.count(node)) return "infrastructure missing";
  if (departed_.count(node)) return "node departed";
  const std::string& type = b.component_type;
  const bool known = (type == "matchlet" && matching_ != nullptr) || kStorageTypes.count(type) ||
                     (host_ != nullptr && host_->knows_type(pipeline_type(type)) && type != "matchlet");
  if (!known) return "unknown component type '" + type + "'";
  if (auto it = allow_.find(node); it != allow_.end() && !it->second.count(type)) return "component type '" + type + "' not allowed";
  if (!b.verify()) return "checksum mismatch";
  if (free_compute(node) < b.compute_slots || free_storage(node) < b.storage_slots) return "insufficient slots";
  if (kStorageTypes.count(type) && hosts(node, type)) return "already hosting " + type;
  return {};
}

std::string DeployManager::instantiate(const NodeId& node, const Bundle& b, Deployment& d) {
  d.component_id = b.bundle_id + "@" + short_id(node);
  Json payload;
  try {
    payload = Json::parse(b.payload);
  } catch (const Json::exception& e) {
    return std::string("invalid payload: ") + e.what();
  }
  try {
    if (b.component_type == "matchlet") {
      auto def = matching::MatchletDef::from_json(payload);
      if (matching_->find(node, def.id)) return "matchlet '" + def.id + "' already on node";
      if (deployments_.count(d.component_id)) return "already deployed";
      d.local_id = def.id;
      matching_->register_matchlet(node, std::move(def));
    } else if (kStorageTypes.count(b.component_type)) {
      if (deployments_.count(d.component_id)) return "already deployed";
    } else {
      if (!payload.is_object()) return "invalid payload: expected an object";
      pipeline::ComponentSpec spec;
      spec.id = payload.value("id", d.component_id);
      spec.type = pipeline_type(b.component_type);
      spec.node = node;
      spec.config = payload.value("config", Json::object());
      if (payload.contains("outputs")) spec.outputs = payload["outputs"].get<std::vector<std::string>>();
      for (const auto& o : spec.outputs) {
        if (host_->find(o) == nullptr) return "unknown output '" + o + "'";
      }
      if (host_->find(spec.id) != nullptr || deployments_.count(spec.id)) return "component '" + spec.id + "' already exists";
      d.component_id = spec.id;
      d.local_id = spec.id;
      host_->deploy(spec);
    }
  } catch (const Error& e) {
    return std::string("invalid payload: ") + e.what();
  } catch (const Json::exception& e) {
    return std::string("invalid payload: ") + e.what();
  }
  return {};
}

void DeployManager::teardown(const Deployment& d) {
  if (d.component_type == "matchlet") {
    if (matching_->find(d.node, d.local_id)) matching_->unregister(d.node, d.local_id);
  } else if (!kStorageTypes.count(d.component_type) && host_ != nullptr && host_->find(d.local_id)) {
    host_->remove(d.local_id);
  }
}

DeployResult DeployManager::deploy_bundle(const NodeId& node, const Bundle& b) {
  DeployResult r;
  Deployment d;
  d.bundle_id = b.bundle_id;
  d.component_type = b.component_type;
  d.node = node;
  d.compute_slots = b.compute_slots;
  d.storage_slots = b.storage_slots;
  r.reason = check(node, b);
  if (r.reason.empty()) r.reason = instantiate(node, b, d);
  if (!r.reason.empty()) {
    kernel_.emit("deploy.reject", node, Json{{"bundle", b.bundle_id}, {"type", b.component_type}, {"reason", r.reason}});
    return r;
  }
  auto& used = used_[node];
  used.first += b.compute_slots;
  used.second += b.storage_slots;
  deployments_.emplace(d.component_id, d);
  kernel_.emit("deploy.accept", node,
               Json{{"bundle", b.bundle_id}, {"type", b.component_type}, {"component", d.component_id},
                    {"region", kernel_.node(node).region}});
  r.ok = true;
  r.component_id = d.component_id;
  return r;
}

bool DeployManager::undeploy(const std::string& component_id) {
  auto it = deployments_.find(component_id);
  if (it == deployments_.end()) return false;
  const Deployment d = it->second;
  teardown(d);
  auto& used = used_[d.node];
  used.first -= d.compute_slots;
  used.second -= d.storage_slots;
  deployments_.erase(it);
  kernel_.emit("deploy.undeploy", d.node, Json{{"component", component_id}, {"reason", "requested"}});
  return true;
}

// ---- evolution ----

Json EvolutionEngine::Action::to_json() const {
  Json j = Json::object();
  j["op"] = op == Op::Deploy ? "deploy" : "undeploy";
  if (!bundle_id.empty()) j["bundle"] = bundle_id;
  if (!component_id.empty()) j["component"] = component_id;
  j["node"] = node.hex();
  return j;
}

EvolutionEngine::EvolutionEngine(DeployManager& manager, std::string region) : manager_(manager), region_(std::move(region)) {}

EvolutionEngine::~EvolutionEngine() = default;

void EvolutionEngine::follow_leader() {
  const auto l = manager_.leader(region_);
  if (l == host_) return;
  for (auto h : subscriptions_) manager_.pubsub_.unsubscribe(h);
  subscriptions_.clear();
  host_ = l;
  if (!host_) return;
  for (const char* type : {"node-arrival", "node-withdrawal", "node-departed"}) {
    pubsub::Subscription s;
    s.type_pattern = type;
    s.constraints.push_back(pubsub::Constraint{"region", pubsub::Op::Eq, TypedValue(region_)});
    subscriptions_.push_back(manager_.pubsub_.subscribe(*host_, s, "evolve:" + region_,
                                                        [this](const EventPtr& e) { evolve(e->type_name); }));
  }
}

std::vector<NodeId> EvolutionEngine::candidates(const Bundle& b, const std::string& region, const std::set<NodeId>& taken) const {
  std::vector<NodeId> out;
  for (const auto& n : manager_.region_members(region)) {
    if (taken.count(n) || manager_.hosts(n, b.component_type)) continue;
    if (manager_.free_compute(n) < b.compute_slots || manager_.free_storage(n) < b.storage_slots) continue;
    if (auto it = manager_.allow_.find(n); it != manager_.allow_.end() && !it->second.count(b.component_type)) continue;
    out.push_back(n);
  }
  std::stable_sort(out.begin(), out.end(), [&](const NodeId& a, const NodeId& c) {
    return manager_.used_compute(a) < manager_.used_compute(c);  // ids already ascending
  });
  return out;
}

std::vector<EvolutionEngine::Action> EvolutionEngine::plan(std::vector<Json>* infeasible) const {
  std::vector<Action> out;
  auto report = [&](const PlacementConstraint& c, Json detail) {
    if (infeasible == nullptr) return;
    detail["constraint"] = c.to_json();
    infeasible->push_back(std::move(detail));
  };
  const auto& kernel = manager_.kernel_;
  for (const auto& c : manager_.constraints_) {
    if (c.kind == PlacementConstraint::Kind::MinInstances) {
      if (c.region != region_) continue;
      const auto live = static_cast<int>(manager_.count(c.component_type, region_));
      const int deficit = c.n - live;
      if (deficit <= 0) continue;
      const Bundle* b = c.bundle.empty() ? manager_.bundle_for_type(c.component_type) : manager_.bundle(c.bundle);
      if (b == nullptr) {
        report(c, Json{{"reason", "no bundle"}, {"deficit", deficit}});
        continue;
      }
      std::set<NodeId> taken;
      for (const auto& a : out) {
        if (a.op == Action::Op::Deploy && a.bundle_id == b->bundle_id) taken.insert(a.node);
      }
      const auto cands = candidates(*b, region_, taken);
      const auto take = std::min<std::size_t>(static_cast<std::size_t>(deficit), cands.size());
      for (std::size_t i = 0; i < take; ++i) out.push_back(Action{Action::Op::Deploy, b->bundle_id, {}, cands[i]});
      if (take < static_cast<std::size_t>(deficit)) {
        report(c, Json{{"reason", "insufficient capacity"}, {"deficit", deficit}, {"available", cands.size()}});
      }
    } else if (c.kind == PlacementConstraint::Kind::MaxLatency) {
      const Bundle* b = c.bundle.empty() ? manager_.bundle_for_type(c.dst_type) : manager_.bundle(c.bundle);
      for (const auto& [id, src] : manager_.deployments_) {
        if (src.component_type != c.src_type || manager_.departed(src.node) || kernel.node(src.node).region != region_) continue;
        const Deployment* nearest = nullptr;
        Millis best = 0;
        for (const auto& [did, dst] : manager_.deployments_) {
          if (dst.component_type != c.dst_type || manager_.departed(dst.node)) continue;
          const Millis l = kernel.latency(src.node, dst.node);
          if (nearest == nullptr || l < best) {
            nearest = &dst;
            best = l;
          }
        }
        if (nearest == nullptr || best <= c.ms) continue;
        std::vector<NodeId> cands;
        if (b != nullptr) {
          for (const auto& r : manager_.regions()) {
            for (const auto& n : candidates(*b, r, {})) {
              if (kernel.latency(src.node, n) <= c.ms) cands.push_back(n);
            }
          }
          std::stable_sort(cands.begin(), cands.end(), [&](const NodeId& a, const NodeId& x) {
            const int ua = manager_.used_compute(a), ux = manager_.used_compute(x);
            return ua != ux ? ua < ux : a < x;
          });
        }
        if (cands.empty()) {
          report(c, Json{{"reason", b == nullptr ? "no bundle" : "no latency-feasible node"}, {"src", id}});
          break;
        }
        out.push_back(Action{Action::Op::Undeploy, {}, nearest->component_id, nearest->node});
        out.push_back(Action{Action::Op::Deploy, b->bundle_id, {}, cands.front()});
        break;  // one relocation per constraint and round
      }
    }
  }
  return out;
}

std::vector<EvolutionEngine::Action> EvolutionEngine::evolve(const std::string& trigger) {
  ++rounds_;
  std::vector<Json> infeasible;
  auto actions = plan(&infeasible);
  auto& kernel = manager_.kernel_;
  const std::optional<NodeId> at = host_;
  Json executed = Json::array();
  for (const auto& a : actions) {
    Json j = a.to_json();
    if (a.op == Action::Op::Deploy) {
      const auto r = manager_.deploy_bundle(a.node, *manager_.bundle(a.bundle_id));
      j["ok"] = r.ok;
      if (!r.ok) j["reason"] = r.reason;
    } else {
      j["ok"] = manager_.undeploy(a.component_id);
    }
    executed.push_back(std::move(j));
  }
  if (!actions.empty()) kernel.emit("evolve.plan", at, Json{{"region", region_}, {"trigger", trigger}, {"actions", executed}});
  Json inf = Json::array();
  for (auto& x : infeasible) inf.push_back(std::move(x));
  auto& last = manager_.last_infeasible_[region_];
  if (inf != last) {
    if (!inf.empty()) kernel.emit("evolve.infeasible", at, Json{{"region", region_}, {"trigger", trigger}, {"violations", inf}});
    last = inf;
  }
  return actions;
}

}  // namespace ctxmatch::deploy
