#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxmatch/knowledge/knowledge_base.hpp"
#include "ctxmatch/matching/matchlet.hpp"
#include "ctxmatch/pubsub/broker.hpp"
#include "ctxmatch/sim/kernel.hpp"

namespace ctxmatch::matching {

/// Where fact joins read from and derived facts are written to.
class FactSource {
 public:
  virtual ~FactSource() = default;
  /// Guids of every fact of `kind`; nullopt when the index is unreachable.
  virtual std::optional<std::vector<Guid>> members(const NodeId& at, const std::string& kind) = 0;
  virtual std::optional<knowledge::Fact> get(const NodeId& at, const Guid& guid) = 0;
  virtual void store(const NodeId& at, knowledge::Fact f) = 0;
};

class KbFactSource : public FactSource {
 public:
  explicit KbFactSource(knowledge::KnowledgeBase& kb) : kb_(kb) {}
  std::optional<std::vector<Guid>> members(const NodeId& at, const std::string& kind) override;
  std::optional<knowledge::Fact> get(const NodeId& at, const Guid& guid) override;
  void store(const NodeId& at, knowledge::Fact f) override;

 private:
  knowledge::KnowledgeBase& kb_;
};

/// Plain map, insertion ordered per kind. Used by tests and oracles.
class MemoryFactSource : public FactSource {
 public:
  Guid add(knowledge::Fact f);
  std::optional<std::vector<Guid>> members(const NodeId& at, const std::string& kind) override;
  std::optional<knowledge::Fact> get(const NodeId& at, const Guid& guid) override;
  void store(const NodeId&, knowledge::Fact f) override { add(std::move(f)); }

 private:
  std::map<Guid, knowledge::Fact> facts_;
  std::map<std::string, std::vector<Guid>> by_kind_;
};

struct EngineConfig {
  Clock clock;
  double walking_speed_kmh = 5.0;
  /// Candidate combinations allowed per arrival.
  std::size_t combination_cap = 10'000;
};

struct Emission {
  std::vector<EventPtr> events;
  std::vector<std::uint64_t> contributing;
  Binding binding;
  SimTime at;
};

class MatchingEngine;

class MatchletInstance {
 public:
  MatchletInstance(MatchingEngine& engine, NodeId node, MatchletDef def);

  const MatchletDef& def() const { return def_; }
  const NodeId& node() const { return node_; }

  /// Arrival of `e` for pattern `index`. Returns the emitted events.
  std::vector<EventPtr> on_event(std::size_t index, const EventPtr& e);
  /// Arrival for every pattern `e` matches, in pattern order.
  std::vector<EventPtr> on_any(const EventPtr& e);

  bool admits_type(const std::string& type) const;
  const std::vector<Emission>& emissions() const { return emissions_; }
  std::size_t buffered(std::size_t index) const { return buffers_.at(index).size(); }
  std::uint64_t overflows() const { return overflows_; }
  std::size_t subscription_count() const { return subscriptions_.size(); }

  /// Emitted events go to pub/sub when set (default).
  bool publish = true;
  /// Called with every emitted event after publication.
  std::function<void(const EventPtr&)> on_emit;

 private:
  friend class MatchingEngine;

  struct ArrivalMemo {
    std::map<std::string, std::optional<std::vector<Guid>>> members;
    std::map<Guid, std::shared_ptr<const knowledge::Fact>> facts;
  };

  void prune(SimTime horizon);
  bool join(std::size_t fact_index, Binding& b, ArrivalMemo& memo);
  bool guards_hold(const Binding& b);
  void emit(const Binding& b, std::vector<std::uint64_t> ids, const EventPtr& trigger, std::vector<EventPtr>& out);
  std::optional<TypedValue> instantiate(const std::string& attr, const Json& v, const Binding& b);

  MatchingEngine& engine_;
  NodeId node_;
  MatchletDef def_;
  std::vector<std::deque<EventPtr>> buffers_;
  std::set<std::vector<std::uint64_t>> emitted_;
  std::vector<Emission> emissions_;
  std::vector<pubsub::SubscriptionHandle> subscriptions_;
  std::uint64_t overflows_ = 0;
};

/// Hosts matchlet instances on simulated nodes and the discovery fallback
/// for event types no local matchlet handles.
class MatchingEngine {
 public:
  /// Fetches a stored bundle by key; nullopt when absent.
  using BundleFetch = std::function<std::optional<std::string>(const NodeId& at, const Guid& key)>;
  /// Deploys bundle bytes on `node`; returns an empty string on success,
  /// otherwise the rejection reason.
  using Deployer = std::function<std::string(const NodeId& node, const std::string& bundle)>;

  MatchingEngine(sim::Kernel& kernel, pubsub::PubSub* pubsub, FactSource& facts, EngineConfig config = {});

  sim::Kernel& kernel() { return kernel_; }
  pubsub::PubSub* pubsub() { return pubsub_; }
  FactSource& facts() { return facts_; }
  const EngineConfig& config() const { return config_; }

  /// Installs one subscription per pattern unless `subscribe` is false.
  /// Throws InvalidArgument on a dead node or an id already used on it.
  MatchletInstance& register_matchlet(const NodeId& node, MatchletDef def, bool subscribe = true);
  MatchletInstance& register_matchlet(const NodeId& node, const Json& def);
  void unregister(const NodeId& node, const std::string& id);

  MatchletInstance* find(const NodeId& node, const std::string& id);
  std::vector<MatchletInstance*> instances();
  /// Whether some matchlet on `node` has a pattern admitting `type`.
  bool admits(const NodeId& node, const std::string& type) const;

  /// Wildcard discovery sink on `node`. Types in `ignored`, "fact:*" and
  /// "node-*" types, and types emitted by registered matchlets are skipped.
  void enable_discovery(const NodeId& node, std::set<std::string> ignored = {});
  void set_bundle_fetch(BundleFetch f) { bundle_fetch_ = std::move(f); }
  void set_deployer(Deployer d) { deployer_ = std::move(d); }
  static Guid bundle_key(const std::string& type) { return guid_of("matchlet:" + type); }

  /// Type mismatches and unresolved references are false and traced.
  bool eval_guard(const Guard& g, const Binding& b, const std::string& matchlet);

  std::uint64_t emission_count() const { return emission_count_; }

 private:
  friend class MatchletInstance;

  void discover(const NodeId& node, const EventPtr& e);
  bool ignored_by_discovery(const std::string& type) const;
  void diagnostic(const std::string& matchlet, const std::string& what, Json detail = Json::object());

  sim::Kernel& kernel_;
  pubsub::PubSub* pubsub_;
  FactSource& facts_;
  EngineConfig config_;
  std::map<std::pair<NodeId, std::string>, std::unique_ptr<MatchletInstance>> instances_;
  std::optional<NodeId> discovery_node_;
  std::set<std::string> discovery_ignored_;
  BundleFetch bundle_fetch_;
  Deployer deployer_;
  std::uint64_t emission_count_ = 0;
};

}  // namespace ctxmatch::matching
