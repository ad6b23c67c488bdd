#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctxmatch/pubsub/subscription.hpp"
#include "ctxmatch/sim/kernel.hpp"

namespace ctxmatch::pubsub {

struct SubscriptionHandle {
  std::uint64_t id = 0;
  auto operator<=>(const SubscriptionHandle&) const = default;
};

using Sink = std::function<void(const EventPtr&)>;

/// Every live node is a broker. Brokers form a minimum spanning tree over
/// pairwise latency; subscriptions flood the tree (pruned by covering) and
/// events follow the reverse paths of matching subscriptions.
class PubSub {
 public:
  explicit PubSub(sim::Kernel& kernel);

  /// Builds the tree over the kernel's live nodes and follows membership
  /// changes from then on.
  void attach();

  /// Covering-based suppression of subscription forwarding. Changing it
  /// rebuilds the routing state.
  void set_covering(bool enabled);
  bool covering() const { return covering_; }

  /// Throws InvalidArgument when `node` is dead.
  SubscriptionHandle subscribe(const NodeId& node, Subscription s, std::string sink_label, Sink sink);
  void unsubscribe(SubscriptionHandle h);

  /// Stamps event_id (if zero) and source, then routes. The timestamp must
  /// not lie in the future. Events published at
  /// a dead node are dropped. Returns the stamped event.
  EventPtr publish(const NodeId& node, Event e);

  const std::vector<NodeId>& tree_neighbors(const NodeId& node) const;
  /// Undirected tree edges (a < b).
  std::vector<std::pair<NodeId, NodeId>> tree_edges() const;
  std::uint64_t forward_count() const { return forward_count_; }
  std::uint64_t delivery_count() const { return delivery_count_; }

  /// Type names that some active subscription names exactly.
  std::set<std::string> subscribed_types() const;

 private:
  struct Entry {
    NodeId node;
    Subscription sub;
    std::string sink_label;
    Sink sink;
  };

  void rebuild(const char* reason);
  void build_tree();
  void propagate(std::uint64_t id, bool trace);
  void route(const NodeId& at, const std::optional<NodeId>& from, const EventPtr& e);
  void deliver(std::uint64_t id, const EventPtr& e);

  sim::Kernel& kernel_;
  bool covering_ = true;
  bool attached_ = false;
  std::map<std::uint64_t, Entry> subs_;
  std::uint64_t next_id_ = 0;
  std::map<NodeId, std::vector<NodeId>> tree_;
  // routes_[u][v]: subscriptions u has forwarded to v.
  std::map<NodeId, std::map<NodeId, std::vector<std::uint64_t>>> routes_;
  std::map<NodeId, std::set<std::uint64_t>> seen_;
  std::set<std::pair<std::uint64_t, std::uint64_t>> delivered_;
  std::uint64_t forward_count_ = 0;
  std::uint64_t delivery_count_ = 0;
};

}  // namespace ctxmatch::pubsub
