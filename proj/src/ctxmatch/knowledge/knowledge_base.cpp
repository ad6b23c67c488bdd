#include "ctxmatch/knowledge/knowledge_base.hpp"

#include <algorithm>
#include <cmath>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::knowledge {

namespace {

constexpr const char* kIndexTag = "index";

Json node_list(const std::vector<NodeId>& nodes) {
  Json a = Json::array();
  for (const auto& n : nodes) a.push_back(n.hex());
  return a;
}

}  // namespace

KnowledgeBase::KnowledgeBase(sim::Kernel& kernel, overlay::Overlay& overlay, pubsub::PubSub* pubsub, KbPolicy policy)
    : kernel_(kernel), overlay_(overlay), pubsub_(pubsub), policy_(policy) {
  if (policy_.k < 1) throw InvalidArgument("replica count must be >= 1");
}

void KnowledgeBase::start() {
  kernel_.schedule_periodic(kernel_.now() + policy_.heal_period, policy_.heal_period, [this] { heal_round(); });
  if (policy_.latency_reduction) {
    kernel_.schedule_periodic(kernel_.now() + policy_.heal_period, policy_.heal_period,
                              [this] { access_monitor_tick(); });
  }
}

PutResult KnowledgeBase::put_fact(const NodeId& origin, Fact f, std::optional<int> k) {
  int replicas = k.value_or(policy_.k);
  if (replicas < 1) throw InvalidArgument("replica count must be >= 1");
  if (auto t = kind_target(f.kind)) replicas = std::max(replicas, *t);
  f.created_at = kernel_.now();
  const auto stored = overlay_.store(origin, f.canonical(), replicas, f.kind);

  PutResult res{stored.guid, stored.holders, stored.degraded, std::nullopt};
  const bool is_new = facts_.insert(res.guid).second;
  if (is_new) created_[res.guid] = f.created_at;
  kinds_[res.guid] = f.kind;

  bool backup_unsatisfied = false;
  if (policy_.backup) {
    res.backup = place_backup(origin, res.guid, res.holders);
    const std::string& home = kernel_.node(origin).region;
    const bool remote_copy = std::any_of(res.holders.begin(), res.holders.end(),
                                         [&](const NodeId& h) { return kernel_.node(h).region != home; });
    if (!res.backup && !remote_copy) {
      backup_unsatisfied = true;
      res.degraded = true;
    }
    if (res.backup) res.holders.push_back(*res.backup);
  }

  update_index(origin, f.kind, res.guid);

  Json d = Json::object();
  d["guid"] = res.guid.hex();
  d["kind"] = f.kind;
  if (f.subject) d["subject"] = *f.subject;
  d["k"] = replicas;
  d["holders"] = node_list(res.holders);
  d["degraded"] = res.degraded;
  d["backup"] = res.backup ? Json(res.backup->hex()) : Json(nullptr);
  if (backup_unsatisfied) d["backup_unsatisfied"] = true;
  kernel_.emit("kb.put", origin, std::move(d));

  if (policy_.announce_facts && pubsub_ != nullptr && is_new && kernel_.alive(origin)) {
    Event e;
    e.type_name = "fact:" + f.kind;
    e.attributes = f.body;
    if (f.subject && e.attributes.find("subject") == nullptr) e.attributes.add("subject", *f.subject);
    e.attributes.set("fact_guid", res.guid.hex());
    e.timestamp = kernel_.now();
    pubsub_->publish(origin, std::move(e));
  }
  return res;
}

std::optional<NodeId> KnowledgeBase::place_backup(const NodeId& origin, const Guid& guid,
                                                  const std::vector<NodeId>& holders) {
  const std::string& home = kernel_.node(origin).region;
  for (const auto& h : holders) {
    if (kernel_.node(h).region != home) return std::nullopt;  // already geographically remote
  }
  const auto& lat = kernel_.latency_model();
  std::optional<NodeId> best;
  int best_hops = 0;
  for (const auto& n : overlay_.members()) {
    if (!overlay_.can_store(n) || overlay_.holds(n, guid)) continue;
    const auto& region = kernel_.node(n).region;
    if (region == home) continue;
    const int hops = lat.region_hops(home, region);
    if (!best) {
      best = n;
      best_hops = hops;
      continue;
    }
    const auto& best_region = kernel_.node(*best).region;
    const auto key = std::make_tuple(-hops, region, overlay_.load(n), n);
    const auto cur = std::make_tuple(-best_hops, best_region, overlay_.load(*best), *best);
    if (key < cur) {
      best = n;
      best_hops = hops;
    }
  }
  if (best && overlay_.add_replica(guid, *best)) return best;
  return std::nullopt;
}

void KnowledgeBase::update_index(const NodeId& origin, const std::string& kind, const Guid& guid) {
  const Guid key = index_key(kind);
  std::set<std::string> members;
  for (const auto& h : overlay_.live_holders(key)) {
    if (const auto* item = overlay_.item_at(h, key)) {
      for (const auto& m : Json::parse(*item->body)) members.insert(m.get<std::string>());
      break;
    }
  }
  if (!members.insert(guid.hex()).second && !overlay_.live_holders(key).empty()) return;
  Json body = Json::array();
  for (const auto& m : members) body.push_back(m);
  overlay_.store_named(origin, key, body.dump(), policy_.k, kIndexTag);
}

std::optional<std::vector<Guid>> KnowledgeBase::kind_members(const NodeId& requester, const std::string& kind) {
  // Indexes change, so they bypass the caches.
  const auto f = overlay_.fetch(requester, index_key(kind));
  if (!f.found()) {
    if (std::none_of(kinds_.begin(), kinds_.end(), [&](const auto& p) { return p.second == kind; })) {
      return std::vector<Guid>{};  // nothing of this kind was ever stored
    }
    return std::nullopt;
  }
  std::vector<Guid> out;
  for (const auto& m : Json::parse(*f.body)) out.push_back(Guid::parse(m.get<std::string>()));
  return out;
}

GetResult KnowledgeBase::get_fact(const NodeId& requester, const Guid& guid) {
  overlay::FetchOptions opt;
  if (policy_.caching) {
    opt.cache = this;
    opt.on_path_caching = policy_.on_path_caching;
  }
  const auto f = overlay_.fetch(requester, guid, opt);
  GetResult res;
  res.hops = f.hops;
  res.latency = f.latency;
  res.from_cache = f.from_cache;
  res.served_by = f.served_by;
  bool intact = false;
  if (f.found()) {
    intact = guid_of(*f.body) == guid;
    if (intact) {
      res.fact = Fact::from_canonical(*f.body);
      if (auto it = created_.find(guid); it != created_.end()) res.fact->created_at = it->second;
    }
  }

  if (res.fact && res.fact->subject && kernel_.has_node(requester)) {
    accesses_[{*res.fact->subject, kernel_.node(requester).region}].push_back({kernel_.now(), guid});
  }

  Json d = Json::object();
  d["guid"] = guid.hex();
  d["found"] = res.fact.has_value();
  d["hops"] = res.hops;
  d["latency_ms"] = res.latency;
  d["from_cache"] = res.from_cache;
  if (f.found() && !intact) d["integrity_error"] = true;
  kernel_.emit("kb.get", requester, std::move(d));
  return res;
}

void KnowledgeBase::set_kind_target(const std::string& kind, int k) {
  if (k < 1) throw InvalidArgument("replica count must be >= 1");
  kind_targets_[kind] = k;
}

std::optional<int> KnowledgeBase::kind_target(const std::string& kind) const {
  auto it = kind_targets_.find(kind);
  if (it == kind_targets_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> KnowledgeBase::kind_of(const Guid& guid) const {
  auto it = kinds_.find(guid);
  if (it == kinds_.end()) return std::nullopt;
  return it->second;
}

int KnowledgeBase::target_for(const Guid& guid, const overlay::Overlay::RegistryEntry& entry) const {
  if (auto kind = kind_of(guid)) {
    if (auto t = kind_target(*kind)) return *t;
  }
  return entry.k;
}

void KnowledgeBase::heal_round() {
  overlay_.report_holdings();
  for (const auto& owner : overlay_.members()) {
    if (kernel_.alive(owner)) heal_tick(owner);
  }
}

std::vector<Json> KnowledgeBase::heal_tick(const NodeId& owner) {
  std::vector<Json> actions;
  for (const auto& [guid, entry] : overlay_.registry(owner)) {
    std::vector<NodeId> live;
    for (const auto& h : entry.holders) {
      if (kernel_.alive(h) && overlay_.holds(h, guid)) live.push_back(h);
    }
    if (live.empty()) continue;  // nothing to copy from
    const int target = target_for(guid, entry);
    if (static_cast<int>(live.size()) >= target) continue;
    std::vector<NodeId> added;
    for (const auto& n : overlay_.ranked(guid)) {
      if (static_cast<int>(live.size() + added.size()) >= target) break;
      if (!overlay_.can_store(n) || overlay_.holds(n, guid)) continue;
      if (overlay_.add_replica(guid, n)) added.push_back(n);
    }
    Json d = Json::object();
    d["guid"] = guid.hex();
    d["target"] = target;
    d["live_before"] = live.size();
    d["added"] = node_list(added);
    d["satisfied"] = static_cast<int>(live.size() + added.size()) >= target;
    kernel_.emit("kb.heal", owner, d);
    actions.push_back(std::move(d));
  }
  return actions;
}

std::vector<Json> KnowledgeBase::access_monitor_tick() {
  std::vector<Json> actions;
  const SimTime now = kernel_.now();
  for (auto& [key, log] : accesses_) {
    while (!log.empty() && log.front().at < now - policy_.access_window) log.pop_front();
    if (static_cast<int>(log.size()) < policy_.access_threshold) continue;
    const auto& [subject, region] = key;

    std::set<Guid> accessed;
    for (const auto& a : log) accessed.insert(a.guid);
    bool present = false;
    for (const auto& g : accessed) {
      for (const auto& h : overlay_.live_holders(g)) present = present || kernel_.node(h).region == region;
    }
    if (present) continue;

    Json d = Json::object();
    d["subject"] = subject;
    d["region"] = region;
    d["accesses"] = log.size();
    Json placed = Json::array();
    std::vector<NodeId> in_region;
    for (const auto& n : overlay_.members()) {
      if (kernel_.alive(n) && kernel_.node(n).region == region) in_region.push_back(n);
    }
    for (const auto& g : accessed) {
      std::optional<NodeId> target;
      for (const auto& n : in_region) {
        if (!overlay_.can_store(n)) continue;
        if (static_cast<int>(overlay_.load(n)) >= kernel_.node(n).storage_slots) continue;
        if (!target || overlay_.load(n) < overlay_.load(*target)) target = n;
      }
      if (!target || !overlay_.add_replica(g, *target)) continue;
      for (const auto& n : in_region) overlay_.add_pointer(n, g, *target);
      placed.push_back(Json{{"guid", g.hex()}, {"node", target->hex()}});
    }
    d["deferred"] = placed.empty();
    d["placed"] = std::move(placed);
    kernel_.emit("kb.policy_replicate", std::nullopt, d);
    actions.push_back(std::move(d));
  }
  return actions;
}

LruCache<Guid, overlay::BytesPtr>& KnowledgeBase::cache_of(const NodeId& node) {
  auto it = caches_.find(node);
  if (it == caches_.end()) {
    const int slots = kernel_.has_node(node) ? kernel_.node(node).storage_slots : 0;
    const auto capacity = static_cast<std::size_t>(std::floor(slots * policy_.cache_fraction));
    it = caches_.emplace(node, LruCache<Guid, overlay::BytesPtr>(capacity)).first;
  }
  return it->second;
}

overlay::BytesPtr KnowledgeBase::lookup(const NodeId& node, const Guid& guid) {
  const auto* hit = cache_of(node).get(guid);
  return hit ? *hit : nullptr;
}

void KnowledgeBase::insert(const NodeId& node, const Guid& guid, overlay::BytesPtr body) {
  cache_of(node).put(guid, std::move(body));
}

bool KnowledgeBase::cached(const NodeId& node, const Guid& guid) const {
  auto it = caches_.find(node);
  return it != caches_.end() && it->second.contains(guid);
}

}  // namespace ctxmatch::knowledge
