#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxmatch/core/guid.hpp"
#include "ctxmatch/core/json_types.hpp"
#include "ctxmatch/core/sim_time.hpp"
#include "ctxmatch/core/value.hpp"
#include "ctxmatch/sim/trace.hpp"

namespace ctxmatch::sim {

struct NodeProfile {
  NodeId id;
  std::string region;
  GeoPoint coords;
  int storage_slots = 0;
  int compute_slots = 0;
  bool alive = true;
};

/// latency(a,b) = 1 ms if a = b; 5 ms intra-region; 40 ms + 10 ms per hop
/// between regions, where regions sit on a ring in declaration order.
class LatencyModel {
 public:
  static constexpr Millis kSelf = 1;
  static constexpr Millis kIntraRegion = 5;
  static constexpr Millis kInterRegionBase = 40;
  static constexpr Millis kPerRegionHop = 10;

  /// Returns the ring index of `region`, appending it if unseen.
  std::size_t intern(const std::string& region);
  int region_hops(const std::string& a, const std::string& b) const;
  Millis between(const NodeProfile& a, const NodeProfile& b) const;
  const std::vector<std::string>& regions() const { return ring_; }

 private:
  std::size_t index_of(const std::string& region) const;

  std::vector<std::string> ring_;
};

enum class MembershipChange { Join, Leave, Crash };

struct ActionHandle {
  std::uint64_t id = 0;
  bool operator==(const ActionHandle&) const = default;
};

struct MessageCounters {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::map<std::string, std::uint64_t> sent_by_kind;
};

/// Deterministic discrete-event core. Single-threaded; one instance per
/// simulation. Same-time actions run in insertion order.
class Kernel {
 public:
  using Action = std::function<void()>;
  using MembershipListener = std::function<void(const NodeId&, MembershipChange)>;
  using WithdrawHook = std::function<void(const NodeId&)>;
  using TraceFilter = std::function<bool(const std::string& kind)>;

  explicit Kernel(std::uint64_t seed, std::vector<std::string> region_ring = {});

  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  SimTime now() const { return now_; }

  /// Throws InvalidArgument when `at` is before the current clock.
  ActionHandle schedule(SimTime at, Action action);
  ActionHandle schedule_after(Millis delay, Action action);
  /// Runs `action` at first, first+period, ... until cancelled.
  ActionHandle schedule_periodic(SimTime first, Millis period, Action action);
  bool cancel(ActionHandle h);

  /// Executes every action with time <= t and leaves the clock at t.
  /// Returns the records appended during this call; the view is invalidated
  /// by the next append.
  std::span<const TraceRecord> run_until(SimTime t);

  // Nodes ------------------------------------------------------------------

  /// Adds an alive node at the current time (setup). Throws on duplicate id.
  void add_node(NodeProfile profile);
  void join(NodeProfile profile, SimTime at);
  /// Graceful departure: withdraw hooks run first, then the node is marked dead.
  void leave(const NodeId& node, SimTime at);
  /// Silent failure: no hooks.
  void crash(const NodeId& node, SimTime at);

  bool has_node(const NodeId& node) const { return nodes_.count(node) != 0; }
  bool alive(const NodeId& node) const;
  const NodeProfile& node(const NodeId& node) const;
  /// Sorted ascending by id.
  std::vector<NodeId> live_nodes() const;
  std::vector<NodeId> all_nodes() const;

  void on_membership(MembershipListener listener) { membership_listeners_.push_back(std::move(listener)); }
  void on_withdraw(WithdrawHook hook) { withdraw_hooks_.push_back(std::move(hook)); }

  // Messages ---------------------------------------------------------------

  Millis latency(const NodeId& a, const NodeId& b) const;
  const LatencyModel& latency_model() const { return latency_; }

  /// Delivers after latency(from, to) by running `on_deliver`, unless `to`
  /// is dead at delivery time, in which case the message is dropped and
  /// counted. A dead sender sends nothing (counted as a drop).
  void send(const NodeId& from, const NodeId& to, std::string kind, Action on_deliver);
  const MessageCounters& counters() const { return counters_; }

  // Trace ------------------------------------------------------------------

  void emit(std::string kind, std::optional<NodeId> node, Json detail = Json::object());
  const Trace& trace() const { return trace_; }
  /// Records whose kind fails the filter are not stored.
  void set_trace_filter(TraceFilter filter) { trace_filter_ = std::move(filter); }

  // Randomness and ids -----------------------------------------------------

  std::uint64_t random_u64() { return rng_(); }
  /// Uniform in [0, bound). bound must be > 0.
  std::uint64_t random_below(std::uint64_t bound);
  double random_unit();
  std::uint64_t next_event_id() { return ++last_event_id_; }

 private:
  struct Entry {
    SimTime at;
    std::uint64_t seq;
    std::uint64_t id;
    bool operator>(const Entry& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  void kill(const NodeId& node, MembershipChange how);
  void notify(const NodeId& node, MembershipChange how);
  NodeProfile& mutable_node(const NodeId& node);

  SimTime now_{};
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_action_id_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
  std::unordered_map<std::uint64_t, Action> actions_;
  std::unordered_map<std::uint64_t, std::shared_ptr<bool>> periodic_;

  std::map<NodeId, NodeProfile> nodes_;
  std::map<NodeId, bool> pending_kill_;
  LatencyModel latency_;
  std::vector<MembershipListener> membership_listeners_;
  std::vector<WithdrawHook> withdraw_hooks_;

  MessageCounters counters_;
  Trace trace_;
  TraceFilter trace_filter_;
  std::mt19937_64 rng_;
  std::uint64_t last_event_id_ = 0;
};

}  // namespace ctxmatch::sim
