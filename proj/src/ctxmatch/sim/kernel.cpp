#include "ctxmatch/sim/kernel.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::sim {

// LatencyModel ---------------------------------------------------------------

std::size_t LatencyModel::intern(const std::string& region) {
  auto it = std::find(ring_.begin(), ring_.end(), region);
  if (it != ring_.end()) return static_cast<std::size_t>(it - ring_.begin());
  ring_.push_back(region);
  return ring_.size() - 1;
}

std::size_t LatencyModel::index_of(const std::string& region) const {
  auto it = std::find(ring_.begin(), ring_.end(), region);
  if (it == ring_.end()) throw InvalidArgument("unknown region '" + region + "'");
  return static_cast<std::size_t>(it - ring_.begin());
}

int LatencyModel::region_hops(const std::string& a, const std::string& b) const {
  const auto n = static_cast<int>(ring_.size());
  const int d = std::abs(static_cast<int>(index_of(a)) - static_cast<int>(index_of(b)));
  return std::min(d, n - d);
}

Millis LatencyModel::between(const NodeProfile& a, const NodeProfile& b) const {
  if (a.id == b.id) return kSelf;
  if (a.region == b.region) return kIntraRegion;
  return kInterRegionBase + kPerRegionHop * region_hops(a.region, b.region);
}

// Kernel ---------------------------------------------------------------------

Kernel::Kernel(std::uint64_t seed, std::vector<std::string> region_ring) : rng_(seed) {
  for (auto& r : region_ring) latency_.intern(r);
}

ActionHandle Kernel::schedule(SimTime at, Action action) {
  if (at < now_) {
    throw InvalidArgument("cannot schedule at t=" + std::to_string(at.millis) +
                          " before the current clock t=" + std::to_string(now_.millis));
  }
  const std::uint64_t id = ++next_action_id_;
  actions_.emplace(id, std::move(action));
  queue_.push(Entry{at, next_seq_++, id});
  return ActionHandle{id};
}

ActionHandle Kernel::schedule_after(Millis delay, Action action) {
  return schedule(now_ + delay, std::move(action));
}

ActionHandle Kernel::schedule_periodic(SimTime first, Millis period, Action action) {
  if (period <= 0) throw InvalidArgument("periodic timer needs a positive period");
  auto active = std::make_shared<bool>(true);
  auto shared_action = std::make_shared<Action>(std::move(action));
  const std::uint64_t id = ++next_action_id_;
  periodic_.emplace(id, active);
  // Each firing reschedules the next one while the timer is active.
  auto fire = std::make_shared<std::function<void(SimTime)>>();
  *fire = [this, active, shared_action, period, weak = std::weak_ptr(fire)](SimTime at) {
    auto self = weak.lock();
    schedule(at, [this, active, shared_action, period, self, at] {
      if (!*active) return;
      (*shared_action)();
      if (*active) (*self)(at + period);
    });
  };
  (*fire)(first);
  // The chain holds `fire` alive through the scheduled closures.
  return ActionHandle{id};
}

bool Kernel::cancel(ActionHandle h) {
  if (auto it = periodic_.find(h.id); it != periodic_.end()) {
    *it->second = false;
    periodic_.erase(it);
    return true;
  }
  return actions_.erase(h.id) != 0;
}

std::span<const TraceRecord> Kernel::run_until(SimTime t) {
  if (t < now_) throw InvalidArgument("run_until target precedes the current clock");
  const std::size_t first = trace_.size();
  while (!queue_.empty() && queue_.top().at <= t) {
    const Entry e = queue_.top();
    queue_.pop();
    auto it = actions_.find(e.id);
    if (it == actions_.end()) continue;  // cancelled
    Action action = std::move(it->second);
    actions_.erase(it);
    now_ = e.at;
    action();
  }
  now_ = t;
  return trace_.since(first);
}

void Kernel::add_node(NodeProfile profile) {
  if (nodes_.count(profile.id)) throw InvalidArgument("duplicate node id " + profile.id.hex());
  if (profile.storage_slots < 0 || profile.compute_slots < 0) {
    throw InvalidArgument("node slots must be non-negative");
  }
  latency_.intern(profile.region);
  profile.alive = true;
  const NodeId id = profile.id;
  Json d = Json::object();
  d["region"] = profile.region;
  d["coords"] = Json::array({profile.coords.lat, profile.coords.lon});
  d["storage_slots"] = profile.storage_slots;
  d["compute_slots"] = profile.compute_slots;
  nodes_.emplace(id, std::move(profile));
  emit("sim.node", id, std::move(d));
  notify(id, MembershipChange::Join);
}

void Kernel::join(NodeProfile profile, SimTime at) {
  if (nodes_.count(profile.id)) throw InvalidArgument("duplicate node id " + profile.id.hex());
  schedule(at, [this, profile = std::move(profile)]() mutable {
    const NodeId id = profile.id;
    add_node(std::move(profile));
    emit("sim.join", id);
  });
}

void Kernel::leave(const NodeId& node, SimTime at) {
  if (!alive(node) || pending_kill_[node]) throw InvalidArgument("node " + node.hex() + " is already dead or departing");
  pending_kill_[node] = true;
  schedule(at, [this, node] { kill(node, MembershipChange::Leave); });
}

void Kernel::crash(const NodeId& node, SimTime at) {
  if (!alive(node) || pending_kill_[node]) throw InvalidArgument("node " + node.hex() + " is already dead or departing");
  pending_kill_[node] = true;
  schedule(at, [this, node] { kill(node, MembershipChange::Crash); });
}

void Kernel::kill(const NodeId& node, MembershipChange how) {
  if (how == MembershipChange::Leave) {
    for (auto& hook : withdraw_hooks_) hook(node);
  }
  mutable_node(node).alive = false;
  pending_kill_.erase(node);
  emit(how == MembershipChange::Leave ? "sim.leave" : "sim.crash", node);
  notify(node, how);
}

void Kernel::notify(const NodeId& node, MembershipChange how) {
  // Listeners may register further listeners; iterate by index.
  for (std::size_t i = 0; i < membership_listeners_.size(); ++i) membership_listeners_[i](node, how);
}

bool Kernel::alive(const NodeId& node) const {
  auto it = nodes_.find(node);
  return it != nodes_.end() && it->second.alive;
}

const NodeProfile& Kernel::node(const NodeId& node) const {
  auto it = nodes_.find(node);
  if (it == nodes_.end()) throw NotFound("unknown node " + node.hex());
  return it->second;
}

NodeProfile& Kernel::mutable_node(const NodeId& node) {
  auto it = nodes_.find(node);
  if (it == nodes_.end()) throw NotFound("unknown node " + node.hex());
  return it->second;
}

std::vector<NodeId> Kernel::live_nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, p] : nodes_) {
    if (p.alive) out.push_back(id);
  }
  return out;
}

std::vector<NodeId> Kernel::all_nodes() const {
  std::vector<NodeId> out;
  out.reserve(nodes_.size());
  for (const auto& [id, p] : nodes_) out.push_back(id);
  return out;
}

Millis Kernel::latency(const NodeId& a, const NodeId& b) const {
  return latency_.between(node(a), node(b));
}

void Kernel::send(const NodeId& from, const NodeId& to, std::string kind, Action on_deliver) {
  const Millis lat = latency(from, to);  // throws on unknown ids
  ++counters_.sent;
  ++counters_.sent_by_kind[kind];
  if (!alive(from)) {
    ++counters_.dropped;
    Json d = Json::object();
    d["to"] = to.hex();
    d["msg"] = kind;
    d["reason"] = "sender dead";
    emit("sim.drop", from, std::move(d));
    return;
  }
  schedule(now_ + lat, [this, from, to, kind = std::move(kind), on_deliver = std::move(on_deliver)] {
    if (!alive(to)) {
      ++counters_.dropped;
      Json d = Json::object();
      d["from"] = from.hex();
      d["msg"] = kind;
      d["reason"] = "receiver dead";
      emit("sim.drop", to, std::move(d));
      return;
    }
    ++counters_.delivered;
    on_deliver();
  });
}

void Kernel::emit(std::string kind, std::optional<NodeId> node, Json detail) {
  if (trace_filter_ && !trace_filter_(kind)) return;
  trace_.append(TraceRecord{now_, std::move(kind), node, std::move(detail)});
}

// Bounded draws use rejection sampling on the raw mt19937_64 stream rather
// than <random> distributions, whose output differs between standard libraries.
std::uint64_t Kernel::random_below(std::uint64_t bound) {
  if (bound == 0) throw InvalidArgument("random_below needs a positive bound");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng_();
  while (x >= limit) x = rng_();
  return x % bound;
}

double Kernel::random_unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

}  // namespace ctxmatch::sim
