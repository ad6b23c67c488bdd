#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxmatch/deploy/bundle.hpp"
#include "ctxmatch/knowledge/knowledge_base.hpp"
#include "ctxmatch/matching/engine.hpp"
#include "ctxmatch/overlay/overlay.hpp"
#include "ctxmatch/pipeline/component.hpp"
#include "ctxmatch/pubsub/broker.hpp"
#include "ctxmatch/sim/kernel.hpp"

namespace ctxmatch::deploy {

struct DeployConfig {
  Millis heartbeat_period = 2 * kSecond;
  Millis fail_timeout = 6 * kSecond;
  /// When set, a node stores replicas only while it hosts a storelet.
  bool storelet_gated_storage = false;
};

struct DeployResult {
  bool ok = false;
  std::string component_id;
  std::string reason;
};

struct Deployment {
  std::string component_id;
  std::string bundle_id;
  std::string component_type;
  NodeId node;
  int compute_slots = 0;
  int storage_slots = 0;
  /// Matchlet id or pipeline component id; empty for storelets.
  std::string local_id;
};

struct PlacementConstraint {
  enum class Kind { MinInstances, ReplicaCount, MaxLatency };

  Kind kind = Kind::MinInstances;
  std::string component_type;  // MIN_INSTANCES
  std::string region;          // MIN_INSTANCES
  int n = 0;
  std::string fact_kind;  // REPLICA_COUNT
  int k = 1;
  std::string src_type, dst_type;  // MAX_LATENCY
  Millis ms = 0;
  /// Bundle used for repairs; defaults to the first catalog bundle of the type.
  std::string bundle;

  Json to_json() const;
  /// {"kind": "min_instances"|"replica_count"|"max_latency", ...}. Throws InvalidArgument.
  static PlacementConstraint from_json(const Json& j);
};

class EvolutionEngine;

/// Thin-server infrastructure on every node, bundle deployment, heartbeats
/// and per-region failure monitors, plus one evolution engine per region.
class DeployManager {
 public:
  DeployManager(sim::Kernel& kernel, pubsub::PubSub& pubsub, overlay::Overlay& overlay, DeployConfig config = {});
  ~DeployManager();

  void set_pipeline(pipeline::PipelineHost* host) { host_ = host; }
  void set_matching(matching::MatchingEngine* engine) { matching_ = engine; }
  void set_knowledge(knowledge::KnowledgeBase* kb) { kb_ = kb; }
  const DeployConfig& config() const { return config_; }
  sim::Kernel& kernel() { return kernel_; }

  /// Starts the periodic monitor and planning round. Call once.
  void start();

  /// Throws InvalidArgument for a dead or already installed node.
  void install_infrastructure(const NodeId& node);
  bool installed(const NodeId& node) const { return installed_.count(node) != 0; }

  /// Never throws; rejections leave every piece of node state unchanged.
  DeployResult deploy_bundle(const NodeId& node, const Bundle& b);
  /// Returns false when no such component is deployed.
  bool undeploy(const std::string& component_id);

  /// Restricts the component types `node` accepts.
  void set_allow_list(const NodeId& node, std::set<std::string> types) { allow_[node] = std::move(types); }

  void add_bundle(Bundle b);
  const Bundle* bundle(const std::string& bundle_id) const;
  const Bundle* bundle_for_type(const std::string& component_type) const;

  void add_constraint(PlacementConstraint c);
  const std::vector<PlacementConstraint>& constraints() const { return constraints_; }

  const std::map<std::string, Deployment>& deployments() const { return deployments_; }
  /// Deployments of `type` in `region` on nodes not known to have departed.
  std::size_t count(const std::string& type, const std::string& region) const;
  bool hosts(const NodeId& node, const std::string& type) const;
  int free_compute(const NodeId& node) const;
  int free_storage(const NodeId& node) const;
  int used_compute(const NodeId& node) const;

  bool departed(const NodeId& node) const { return departed_.count(node) != 0; }
  /// Installed, not departed nodes of `region` as this layer sees them.
  std::vector<NodeId> region_members(const std::string& region) const;
  /// Lowest-id live installed node of the region; hosts its monitor and engine.
  std::optional<NodeId> leader(const std::string& region) const;
  std::vector<std::string> regions() const;

  EvolutionEngine* engine(const std::string& region);

  /// One failure-monitor pass at the region leader; returns the nodes declared departed.
  std::vector<NodeId> failure_monitor_tick(const std::string& region);

  static Guid departed_set_key() { return guid_of("departed-set"); }

 private:
  friend class EvolutionEngine;

  std::string check(const NodeId& node, const Bundle& b) const;
  std::string instantiate(const NodeId& node, const Bundle& b, Deployment& d);
  void teardown(const Deployment& d);
  void heartbeat(const NodeId& node);
  void round();
  void on_withdraw(const NodeId& node);
  void mark_departed(const NodeId& node);
  bool record_departed(const NodeId& at, const NodeId& node);
  void publish_resource(const NodeId& from, const std::string& type, const NodeId& about);

  sim::Kernel& kernel_;
  pubsub::PubSub& pubsub_;
  overlay::Overlay& overlay_;
  DeployConfig config_;
  pipeline::PipelineHost* host_ = nullptr;
  matching::MatchingEngine* matching_ = nullptr;
  knowledge::KnowledgeBase* kb_ = nullptr;

  std::set<NodeId> installed_;
  std::set<NodeId> departed_;
  std::map<NodeId, sim::ActionHandle> heartbeats_;
  std::map<NodeId, std::set<std::string>> allow_;
  std::map<std::string, Bundle> catalog_;
  std::vector<PlacementConstraint> constraints_;
  std::map<std::string, Deployment> deployments_;
  std::map<NodeId, std::pair<int, int>> used_;
  // Per monitor node: last heartbeat send time of each region member.
  std::map<NodeId, std::map<NodeId, SimTime>> last_seen_;
  std::map<std::string, std::unique_ptr<EvolutionEngine>> engines_;
  std::map<std::string, Json> last_infeasible_;
  bool started_ = false;
};

/// Constraint evaluation and greedy repair for one region, hosted on the
/// region leader and fed by that region's resource events.
class EvolutionEngine {
 public:
  struct Action {
    enum class Op { Deploy, Undeploy };
    Op op = Op::Deploy;
    std::string bundle_id;
    std::string component_id;
    NodeId node;

    Json to_json() const;
  };

  EvolutionEngine(DeployManager& manager, std::string region);
  ~EvolutionEngine();

  const std::string& region() const { return region_; }
  /// Plans against the current deployment without executing.
  std::vector<Action> plan(std::vector<Json>* infeasible = nullptr) const;
  /// Plans, executes and traces. Returns the executed plan.
  std::vector<Action> evolve(const std::string& trigger);
  /// Keeps the resource subscriptions on the current leader.
  void follow_leader();
  std::uint64_t rounds() const { return rounds_; }

 private:
  std::vector<NodeId> candidates(const Bundle& b, const std::string& region, const std::set<NodeId>& taken) const;

  DeployManager& manager_;
  std::string region_;
  std::optional<NodeId> host_;
  std::vector<pubsub::SubscriptionHandle> subscriptions_;
  std::uint64_t rounds_ = 0;
};

}  // namespace ctxmatch::deploy
