#include "ctxmatch/pubsub/broker.hpp"

#include <algorithm>
#include <limits>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::pubsub {

PubSub::PubSub(sim::Kernel& kernel) : kernel_(kernel) {}

void PubSub::attach() {
  if (attached_) return;
  attached_ = true;
  kernel_.on_membership([this](const NodeId&, sim::MembershipChange change) {
    rebuild(change == sim::MembershipChange::Join ? "join" : "depart");
  });
  rebuild("attach");
}

void PubSub::set_covering(bool enabled) {
  if (covering_ == enabled) return;
  covering_ = enabled;
  rebuild("covering");
}

void PubSub::build_tree() {
  // Prim from the lowest id; ties on (weight, new node id, tree node id).
  tree_.clear();
  const auto nodes = kernel_.live_nodes();
  if (nodes.empty()) return;
  for (const auto& n : nodes) tree_[n];
  std::set<NodeId> in_tree{nodes.front()};
  struct Best {
    Millis w = std::numeric_limits<Millis>::max();
    NodeId via;
  };
  std::map<NodeId, Best> best;
  for (std::size_t i = 1; i < nodes.size(); ++i) best[nodes[i]] = {kernel_.latency(nodes.front(), nodes[i]), nodes.front()};
  while (!best.empty()) {
    auto pick = best.begin();
    for (auto it = best.begin(); it != best.end(); ++it) {
      const auto& [n, b] = *it;
      const auto& [pn, pb] = *pick;
      if (b.w < pb.w || (b.w == pb.w && (n < pn || (n == pn && b.via < pb.via)))) pick = it;
    }
    const NodeId added = pick->first;
    const NodeId via = pick->second.via;
    best.erase(pick);
    tree_[added].push_back(via);
    tree_[via].push_back(added);
    in_tree.insert(added);
    for (auto& [n, b] : best) {
      const Millis w = kernel_.latency(added, n);
      if (w < b.w || (w == b.w && added < b.via)) b = {w, added};
    }
  }
  for (auto& [n, adj] : tree_) std::sort(adj.begin(), adj.end());
}

void PubSub::rebuild(const char* reason) {
  build_tree();
  routes_.clear();
  const std::uint64_t before = forward_count_;
  for (const auto& [id, entry] : subs_) {
    if (kernel_.alive(entry.node)) propagate(id, false);
  }
  Json d = Json::object();
  d["reason"] = reason;
  d["brokers"] = tree_.size();
  d["forwarded"] = forward_count_ - before;
  kernel_.emit("pubsub.rebuild", std::nullopt, std::move(d));
}

void PubSub::propagate(std::uint64_t id, bool trace) {
  const Entry& entry = subs_.at(id);
  if (!tree_.count(entry.node)) return;
  // Breadth-first flood away from the subscriber, pruned per edge by covering.
  std::vector<std::pair<NodeId, NodeId>> frontier;  // (from, to)
  for (const auto& n : tree_.at(entry.node)) frontier.emplace_back(entry.node, n);
  while (!frontier.empty()) {
    std::vector<std::pair<NodeId, NodeId>> next;
    for (const auto& [u, v] : frontier) {
      auto& edge = routes_[u][v];
      if (covering_) {
        const bool covered = std::any_of(edge.begin(), edge.end(),
                                         [&](std::uint64_t other) { return covers(subs_.at(other).sub, entry.sub); });
        if (covered) continue;
      }
      edge.push_back(id);
      ++forward_count_;
      if (trace) {
        Json d = Json::object();
        d["handle"] = id;
        d["to"] = v.hex();
        kernel_.emit("pubsub.forward", u, std::move(d));
      }
      for (const auto& w : tree_.at(v)) {
        if (w != u) next.emplace_back(v, w);
      }
    }
    frontier = std::move(next);
  }
}

SubscriptionHandle PubSub::subscribe(const NodeId& node, Subscription s, std::string sink_label, Sink sink) {
  if (!kernel_.alive(node)) throw InvalidArgument("subscribe at dead node " + node.hex());
  const std::uint64_t id = ++next_id_;
  subs_.emplace(id, Entry{node, std::move(s), std::move(sink_label), std::move(sink)});
  propagate(id, true);
  return SubscriptionHandle{id};
}

void PubSub::unsubscribe(SubscriptionHandle h) {
  if (subs_.erase(h.id) == 0) return;
  rebuild("unsubscribe");
}

EventPtr PubSub::publish(const NodeId& node, Event e) {
  if (e.timestamp > kernel_.now()) throw InvalidArgument("event timestamp is in the future");
  if (e.event_id == 0) e.event_id = kernel_.next_event_id();
  e.source = node;
  auto ptr = std::make_shared<const Event>(std::move(e));
  if (!kernel_.alive(node)) return ptr;
  Json d = Json::object();
  d["event"] = ptr->to_json();
  kernel_.emit("pubsub.publish", node, std::move(d));
  route(node, std::nullopt, ptr);
  return ptr;
}

void PubSub::route(const NodeId& at, const std::optional<NodeId>& from, const EventPtr& e) {
  if (!seen_[at].insert(e->event_id).second) return;
  for (const auto& [id, entry] : subs_) {
    if (entry.node != at || !match(entry.sub, *e)) continue;
    kernel_.send(at, at, "pubsub.local", [this, id, e] { deliver(id, e); });
  }
  auto adj = tree_.find(at);
  if (adj == tree_.end()) return;
  for (const auto& n : adj->second) {
    if (from && n == *from) continue;
    const auto& edge = routes_[n][at];
    const bool wanted = std::any_of(edge.begin(), edge.end(), [&](std::uint64_t id) {
      auto it = subs_.find(id);
      return it != subs_.end() && match(it->second.sub, *e);
    });
    if (!wanted) continue;
    kernel_.send(at, n, "pubsub.event", [this, n, at, e] { route(n, at, e); });
  }
}

void PubSub::deliver(std::uint64_t id, const EventPtr& e) {
  auto it = subs_.find(id);
  if (it == subs_.end()) return;
  if (!delivered_.emplace(id, e->event_id).second) return;
  ++delivery_count_;
  const Entry& entry = it->second;
  Json d = Json::object();
  d["event_id"] = e->event_id;
  d["type"] = e->type_name;
  d["sink"] = entry.sink_label;
  d["handle"] = id;
  d["published_at"] = e->timestamp.millis;
  d["latency_ms"] = kernel_.now() - e->timestamp;
  kernel_.emit("pubsub.deliver", entry.node, std::move(d));
  Sink sink = entry.sink;  // the sink may unsubscribe itself
  sink(e);
}

const std::vector<NodeId>& PubSub::tree_neighbors(const NodeId& node) const {
  static const std::vector<NodeId> kNone;
  auto it = tree_.find(node);
  return it == tree_.end() ? kNone : it->second;
}

std::vector<std::pair<NodeId, NodeId>> PubSub::tree_edges() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  for (const auto& [n, adj] : tree_) {
    for (const auto& m : adj) {
      if (n < m) out.emplace_back(n, m);
    }
  }
  return out;
}

std::set<std::string> PubSub::subscribed_types() const {
  std::set<std::string> out;
  for (const auto& [id, entry] : subs_) {
    if (entry.sub.type_pattern != Subscription::kAnyType) out.insert(entry.sub.type_pattern);
  }
  return out;
}

}  // namespace ctxmatch::pubsub
