#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "ctxmatch/deploy/deploy_manager.hpp"
#include "ctxmatch/harness/scenario.hpp"
#include "ctxmatch/knowledge/knowledge_base.hpp"
#include "ctxmatch/matching/engine.hpp"
#include "ctxmatch/overlay/overlay.hpp"
#include "ctxmatch/pipeline/component.hpp"
#include "ctxmatch/pubsub/broker.hpp"
#include "ctxmatch/sim/kernel.hpp"

namespace ctxmatch::harness {

/// Every subsystem of one simulated deployment, wired from a scenario.
/// Construction performs the whole setup at sim time 0; nothing runs until
/// run_until is called.
class World {
 public:
  World(const Scenario& s, std::uint64_t seed);
  ~World();
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  void run_until(SimTime t);
  /// Appends the sim.summary record. Call once, after the last run_until.
  void finish();

  const Scenario& scenario() const { return scenario_; }
  NodeId node_id(const std::string& name) const;

  sim::Kernel& kernel() { return kernel_; }
  overlay::Overlay& overlay() { return overlay_; }
  pubsub::PubSub& pubsub() { return pubsub_; }
  knowledge::KnowledgeBase& kb() { return *kb_; }
  matching::MatchingEngine& engine() { return *engine_; }
  pipeline::PipelineHost& host() { return *host_; }
  deploy::DeployManager& deployer() { return *deploy_; }

  /// One kb.census record: live replica count of every stored fact.
  void census();

 private:
  void add_node(const NodeDecl& n);
  void deploy_components();
  void schedule_churn();

  const Scenario& scenario_;
  sim::Kernel kernel_;
  overlay::Overlay overlay_;
  pubsub::PubSub pubsub_;
  std::unique_ptr<knowledge::KnowledgeBase> kb_;
  std::unique_ptr<matching::KbFactSource> facts_;
  std::unique_ptr<matching::MatchingEngine> engine_;
  std::unique_ptr<pipeline::PipelineHost> host_;
  std::unique_ptr<deploy::DeployManager> deploy_;
  bool finished_ = false;
};

struct RunResult {
  sim::Trace trace;
  Json metrics;
};

/// Builds a world, runs it to `until` and computes metrics from its trace.
/// until == 0 performs setup only.
RunResult run(const Scenario& s, std::uint64_t seed, SimTime until);

}  // namespace ctxmatch::harness
