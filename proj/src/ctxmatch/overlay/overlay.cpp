#include "ctxmatch/overlay/overlay.hpp"

#include <algorithm>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::overlay {

namespace {

// Upper `digits` hex digits of v, lower bits cleared.
UInt128 prefix_bits(UInt128 v, std::size_t digits) {
  if (digits == 0) return 0;
  const std::size_t drop = 128 - 4 * digits;
  return drop == 0 ? v : (v >> drop) << drop;
}

Json holder_list(const std::vector<NodeId>& nodes) {
  Json a = Json::array();
  for (const auto& n : nodes) a.push_back(n.hex());
  return a;
}

// Route steps are bounded by the prefix phase (<= 32) plus the numeric
// phase; anything beyond this indicates corrupt routing state.
constexpr std::size_t kMaxRouteSteps = 4 * Guid::kDigits;

}  // namespace

bool closer_to(const Guid& key, const NodeId& a, const NodeId& b) {
  const auto pa = shared_prefix(a, key);
  const auto pb = shared_prefix(b, key);
  if (pa != pb) return pa > pb;
  const auto da = numeric_distance(a, key);
  const auto db = numeric_distance(b, key);
  if (da != db) return da < db;
  return a < b;
}

Overlay::Overlay(sim::Kernel& kernel) : kernel_(kernel) {}

void Overlay::join(const NodeId& node) {
  if (!kernel_.alive(node)) throw InvalidArgument("cannot join dead or unknown node " + node.hex());
  auto it = std::lower_bound(members_.begin(), members_.end(), node);
  if (it != members_.end() && *it == node) throw InvalidArgument("duplicate join of " + node.hex());
  members_.insert(it, node);
  rebuild_tables();
  report_holdings();
  trace_repair("join", node);
}

void Overlay::depart(const NodeId& node) {
  auto it = std::lower_bound(members_.begin(), members_.end(), node);
  if (it == members_.end() || *it != node) throw InvalidArgument("depart of non-member " + node.hex());
  members_.erase(it);
  tables_.erase(node);
  registries_.erase(node);
  pointers_.erase(node);
  rebuild_tables();
  report_holdings();
  trace_repair("depart", node);
}

void Overlay::trace_repair(const char* change, const NodeId& node) {
  Json d = Json::object();
  d["change"] = change;
  d["member"] = node.hex();
  d["live"] = members_.size();
  kernel_.emit("overlay.repair", node, std::move(d));
}

bool Overlay::contains(const NodeId& node) const {
  return std::binary_search(members_.begin(), members_.end(), node);
}

void Overlay::rebuild_tables() {
  std::vector<UInt128> values;
  values.reserve(members_.size());
  for (const auto& m : members_) values.push_back(m.value());

  // Index range [first, last) of members whose top `digits` digits equal `lo`.
  auto range_of = [&](UInt128 lo, std::size_t digits) {
    if (digits == 0) return std::pair<std::size_t, std::size_t>(0, values.size());
    auto b = std::lower_bound(values.begin(), values.end(), lo);
    auto e = b;
    if (digits == Guid::kDigits) {
      e = std::upper_bound(b, values.end(), lo);
    } else {
      const UInt128 hi = lo + (UInt128{1} << (128 - 4 * digits));
      e = hi == 0 ? values.end() : std::lower_bound(b, values.end(), hi);  // hi wraps for the all-f prefix
    }
    return std::pair<std::size_t, std::size_t>(b - values.begin(), e - values.begin());
  };

  tables_.clear();
  for (std::size_t idx = 0; idx < members_.size(); ++idx) {
    const NodeId& self = members_[idx];
    RoutingTable t;
    t.self = self;
    const UInt128 v = self.value();
    for (std::size_t r = 0; r < RoutingTable::kRows; ++r) {
      const auto [rb, re] = range_of(prefix_bits(v, r), r);
      if (re - rb <= 1) break;  // only self shares r digits
      const std::size_t shift = 128 - 4 * (r + 1);
      const unsigned own = self.digit(r);
      for (unsigned c = 0; c < RoutingTable::kColumns; ++c) {
        if (c == own) continue;
        const UInt128 lo = prefix_bits(v, r) | (UInt128{c} << shift);
        const auto [b, e] = range_of(lo, r + 1);
        if (b == e) continue;
        // The member of the cell's range numerically nearest to self.
        t.cells[r][c] = members_[c < own ? e - 1 : b];
      }
    }
    // Neighbor set: up to four on each side, topped up from the other side.
    const std::size_t want = std::min<std::size_t>(2 * RoutingTable::kNeighborsPerSide, members_.size() - 1);
    std::size_t below = std::min<std::size_t>(RoutingTable::kNeighborsPerSide, idx);
    std::size_t above = std::min<std::size_t>(RoutingTable::kNeighborsPerSide, members_.size() - 1 - idx);
    while (below + above < want) {
      if (below < idx) {
        ++below;
      } else {
        ++above;
      }
    }
    for (std::size_t i = idx - below; i < idx; ++i) t.neighbors.push_back(members_[i]);
    for (std::size_t i = idx + 1; i <= idx + above; ++i) t.neighbors.push_back(members_[i]);

    std::set<NodeId> known(t.neighbors.begin(), t.neighbors.end());
    for (const auto& row : t.cells) {
      for (const auto& cell : row) {
        if (cell) known.insert(*cell);
      }
    }
    t.known.assign(known.begin(), known.end());
    tables_.emplace(self, std::move(t));
  }
}

const RoutingTable& Overlay::routing_table(const NodeId& node) const {
  auto it = tables_.find(node);
  if (it == tables_.end()) throw NotFound("no routing state for " + node.hex());
  return it->second;
}

RouteResult Overlay::route(const NodeId& start, const Guid& key) const {
  if (members_.empty()) throw Error("route on an empty overlay");
  if (!contains(start)) throw InvalidArgument("route start " + start.hex() + " is not an overlay member");
  RouteResult r;
  NodeId cur = start;
  r.path.push_back(cur);
  for (std::size_t step = 0;; ++step) {
    if (step > kMaxRouteSteps) throw Error("routing did not converge for key " + key.hex());
    const RoutingTable& t = tables_.at(cur);
    NodeId best = cur;
    // Prefix step first: the table cell for the key's next digit.
    const std::size_t p = shared_prefix(cur, key);
    if (p < Guid::kDigits) {
      if (const auto& cell = t.cells[p][key.digit(p)]) best = *cell;
    }
    for (const auto& n : t.known) {
      if (closer_to(key, n, best)) best = n;
    }
    if (best == cur) break;
    r.latency += kernel_.latency(cur, best);
    cur = best;
    r.path.push_back(cur);
  }
  r.owner = cur;
  return r;
}

NodeId Overlay::owner_of(const Guid& key) const {
  if (members_.empty()) throw Error("no owner on an empty overlay");
  return route(members_.front(), key).owner;
}

std::vector<NodeId> Overlay::ranked(const Guid& key) const {
  std::vector<NodeId> out = members_;
  std::sort(out.begin(), out.end(), [&](const NodeId& a, const NodeId& b) { return closer_to(key, a, b); });
  return out;
}

bool Overlay::can_store(const NodeId& node) const {
  return contains(node) && kernel_.alive(node) && (!storage_filter_ || storage_filter_(node));
}

StoreResult Overlay::store(const NodeId& origin, Bytes body, int k, std::string tag) {
  if (k < 1) throw InvalidArgument("replica count must be >= 1");
  if (members_.empty()) throw Error("store on an empty overlay");
  const Guid guid = guid_of(body);
  StoreResult res;
  res.guid = guid;
  res.owner = owner_of(guid);
  auto shared = std::make_shared<const Bytes>(std::move(body));
  for (const auto& n : ranked(guid)) {
    if (static_cast<int>(res.holders.size()) == k) break;
    if (!can_store(n)) continue;
    StoredItem item{shared, k, tag, false, 1};
    stores_[n][guid] = item;
    register_holder(res.owner, guid, n, item);
    res.holders.push_back(n);
  }
  res.degraded = static_cast<int>(res.holders.size()) < k;

  Json d = Json::object();
  d["guid"] = guid.hex();
  d["k"] = k;
  d["owner"] = res.owner.hex();
  d["holders"] = holder_list(res.holders);
  d["degraded"] = res.degraded;
  kernel_.emit("overlay.store", origin, std::move(d));
  return res;
}

StoreResult Overlay::store_named(const NodeId& origin, const Guid& key, Bytes body, int k, std::string tag) {
  if (k < 1) throw InvalidArgument("replica count must be >= 1");
  if (members_.empty()) throw Error("store on an empty overlay");
  StoreResult res;
  res.guid = key;
  res.owner = owner_of(key);
  auto shared = std::make_shared<const Bytes>(std::move(body));

  std::uint32_t version = 0;
  std::vector<NodeId> targets = live_holders(key);
  for (const auto& n : targets) version = std::max(version, stores_[n][key].version);
  for (const auto& n : ranked(key)) {
    if (static_cast<int>(targets.size()) >= k) break;
    if (can_store(n) && std::find(targets.begin(), targets.end(), n) == targets.end()) targets.push_back(n);
  }
  for (const auto& n : targets) {
    StoredItem item{shared, k, tag, true, version + 1};
    stores_[n][key] = item;
    register_holder(res.owner, key, n, item);
  }
  res.holders = targets;
  res.degraded = static_cast<int>(targets.size()) < k;

  Json d = Json::object();
  d["guid"] = key.hex();
  d["k"] = k;
  d["owner"] = res.owner.hex();
  d["holders"] = holder_list(res.holders);
  d["degraded"] = res.degraded;
  d["named"] = true;
  d["version"] = version + 1;
  kernel_.emit("overlay.store", origin, std::move(d));
  return res;
}

FetchResult Overlay::fetch(const NodeId& requester, const Guid& guid, const FetchOptions& options) {
  FetchResult res;
  auto finish = [&](const char* how) {
    Json d = Json::object();
    d["guid"] = guid.hex();
    d["found"] = res.found();
    d["hops"] = res.hops;
    d["latency_ms"] = res.latency;
    d["served_by"] = res.served_by ? Json(res.served_by->hex()) : Json(nullptr);
    d["via"] = how;
    kernel_.emit("overlay.fetch", requester, std::move(d));
    return res;
  };

  if (options.cache) {
    if (auto hit = options.cache->lookup(requester, guid)) {
      res.body = std::move(hit);
      res.served_by = requester;
      res.from_cache = true;
      return finish("cache");
    }
  }
  if (!contains(requester)) return finish("requester-offline");

  const RouteResult path = route(requester, guid);
  auto deliver = [&](std::size_t upto, const NodeId& server, BytesPtr body) {
    res.body = std::move(body);
    res.served_by = server;
    if (options.cache) {
      if (server != requester) options.cache->insert(requester, guid, res.body);
      if (options.on_path_caching) {
        for (std::size_t i = 1; i < upto && i < path.path.size(); ++i) {
          if (path.path[i] != server) options.cache->insert(path.path[i], guid, res.body);
        }
      }
    }
  };

  Millis lat = 0;
  for (std::size_t i = 0; i < path.path.size(); ++i) {
    const NodeId& at = path.path[i];
    if (i > 0) lat += kernel_.latency(path.path[i - 1], at);
    res.hops = i;
    res.latency = lat;
    if (const StoredItem* item = item_at(at, guid)) {
      deliver(i, at, item->body);
      return finish("holder");
    }
    if (i > 0 && options.cache && options.on_path_caching) {
      if (auto hit = options.cache->lookup(at, guid)) {
        deliver(i, at, std::move(hit));
        res.from_cache = true;
        return finish("path-cache");
      }
    }
    if (auto pit = pointers_.find(at); pit != pointers_.end()) {
      if (auto git = pit->second.find(guid); git != pit->second.end()) {
        for (const auto& h : git->second) {
          if (h == at) continue;
          if (const StoredItem* item = item_at(h, guid); item && kernel_.alive(h)) {
            res.hops = i + 1;
            res.latency = lat + kernel_.latency(at, h);
            deliver(i + 1, h, item->body);
            return finish("pointer");
          }
        }
      }
    }
  }

  // At the owner: redirect to the nearest live registered holder.
  const NodeId& owner = path.owner;
  std::vector<NodeId> holders = live_holders(guid);
  std::sort(holders.begin(), holders.end(), [&](const NodeId& a, const NodeId& b) {
    const Millis la = kernel_.latency(owner, a);
    const Millis lb = kernel_.latency(owner, b);
    return la != lb ? la < lb : a < b;
  });
  for (const auto& h : holders) {
    if (h == owner) continue;
    res.hops = path.hops() + 1;
    res.latency = lat + kernel_.latency(owner, h);
    deliver(path.path.size(), h, item_at(h, guid)->body);
    return finish("registry");
  }
  res.hops = path.hops();
  res.latency = lat;
  return finish("miss");
}

bool Overlay::add_replica(const Guid& guid, const NodeId& holder) {
  if (!can_store(holder)) return false;
  if (holds(holder, guid)) return true;
  for (const auto& n : members_) {
    if (!kernel_.alive(n)) continue;
    if (const StoredItem* item = item_at(n, guid)) {
      StoredItem copy = *item;
      stores_[holder][guid] = copy;
      register_holder(owner_of(guid), guid, holder, copy);
      return true;
    }
  }
  return false;
}

void Overlay::add_pointer(const NodeId& at, const Guid& guid, const NodeId& holder) {
  pointers_[at][guid].insert(holder);
}

bool Overlay::holds(const NodeId& node, const Guid& guid) const { return item_at(node, guid) != nullptr; }

const StoredItem* Overlay::item_at(const NodeId& node, const Guid& guid) const {
  auto sit = stores_.find(node);
  if (sit == stores_.end()) return nullptr;
  auto it = sit->second.find(guid);
  return it == sit->second.end() ? nullptr : &it->second;
}

std::vector<NodeId> Overlay::live_holders(const Guid& guid) const {
  std::vector<NodeId> out;
  if (members_.empty()) return out;
  const auto& reg = registry(owner_of(guid));
  auto it = reg.find(guid);
  if (it == reg.end()) return out;
  for (const auto& h : it->second.holders) {
    if (kernel_.alive(h) && holds(h, guid)) out.push_back(h);
  }
  return out;
}

std::size_t Overlay::load(const NodeId& node) const {
  auto it = stores_.find(node);
  return it == stores_.end() ? 0 : it->second.size();
}

std::vector<Guid> Overlay::stored_items(const NodeId& node) const {
  std::vector<Guid> out;
  if (auto it = stores_.find(node); it != stores_.end()) {
    for (const auto& [g, item] : it->second) out.push_back(g);
  }
  return out;
}

void Overlay::register_holder(const NodeId& owner, const Guid& guid, const NodeId& holder, const StoredItem& item) {
  auto& e = registries_[owner][guid];
  e.k = std::max(e.k, item.k);
  e.tag = item.tag;
  e.named = item.named;
  e.holders.insert(holder);
}

void Overlay::report_holdings() {
  registries_.clear();
  if (members_.empty()) return;
  std::map<Guid, NodeId> owners;
  for (const auto& n : members_) {
    if (!kernel_.alive(n)) continue;
    auto sit = stores_.find(n);
    if (sit == stores_.end()) continue;
    for (const auto& [guid, item] : sit->second) {
      auto oit = owners.find(guid);
      if (oit == owners.end()) oit = owners.emplace(guid, owner_of(guid)).first;
      register_holder(oit->second, guid, n, item);
    }
  }
}

const std::map<Guid, Overlay::RegistryEntry>& Overlay::registry(const NodeId& owner) const {
  static const std::map<Guid, RegistryEntry> kEmpty;
  auto it = registries_.find(owner);
  return it == registries_.end() ? kEmpty : it->second;
}

}  // namespace ctxmatch::overlay
