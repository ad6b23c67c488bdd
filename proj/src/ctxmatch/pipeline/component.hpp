#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ctxmatch/core/event.hpp"
#include "ctxmatch/core/json_types.hpp"
#include "ctxmatch/pubsub/broker.hpp"
#include "ctxmatch/sim/kernel.hpp"

namespace ctxmatch::pipeline {

/// Scenario-level declaration: {id, type, node, config, outputs}.
struct ComponentSpec {
  std::string id;
  std::string type;
  NodeId node;
  Json config = Json::object();
  std::vector<std::string> outputs;
};

class PipelineHost;

/// A pipeline stage exposing put(event). Subclasses decide what to forward.
class Component {
 public:
  Component(ComponentSpec spec, PipelineHost& host);
  virtual ~Component() = default;

  const std::string& id() const { return spec_.id; }
  const std::string& type() const { return spec_.type; }
  const NodeId& node() const { return spec_.node; }
  const Json& config() const { return spec_.config; }
  const std::vector<std::string>& outputs() const { return outputs_; }

  /// Called once after wiring.
  virtual void start() {}
  /// Called on undeploy. Must cancel any scheduled work.
  virtual void stop() {}
  virtual void on_put(const EventPtr& e) = 0;

 protected:
  /// Sends `e` to every output, in connection order.
  void forward(const EventPtr& e);

  PipelineHost& host_;

 private:
  friend class PipelineHost;

  ComponentSpec spec_;
  std::vector<std::string> outputs_;
};

using ComponentFactory = std::function<std::unique_ptr<Component>(const ComponentSpec&, PipelineHost&)>;

struct PipelineCounters {
  std::uint64_t puts = 0;
  std::uint64_t drops = 0;
  std::uint64_t errors = 0;
};

/// Owns every component in a simulation and the wiring between them.
class PipelineHost {
 public:
  PipelineHost(sim::Kernel& kernel, pubsub::PubSub* pubsub);

  sim::Kernel& kernel() { return kernel_; }
  pubsub::PubSub* pubsub() { return pubsub_; }

  void register_type(const std::string& type, ComponentFactory factory);
  bool knows_type(const std::string& type) const { return factories_.count(type) != 0; }

  /// Instantiates a component without wiring its declared outputs. Throws
  /// InvalidArgument on unknown type, duplicate id, unknown node or bad config.
  Component& create(const ComponentSpec& spec);
  /// Creates, connects declared outputs and starts. Outputs must exist.
  Component& deploy(const ComponentSpec& spec);
  /// Stops the component and removes it together with every edge into it.
  void remove(const std::string& id);

  /// Throws InvalidArgument on self-loop or duplicate edge, NotFound on
  /// unknown ids.
  void connect(const std::string& src, const std::string& dst);
  bool is_remote(const std::string& src, const std::string& dst) const;

  /// External put. Throws NotFound for unknown components; events for a
  /// component on a dead node are dropped and counted.
  void put(const std::string& id, const EventPtr& e);

  Component* find(const std::string& id);
  const Component* find(const std::string& id) const;
  std::vector<const Component*> components() const;
  std::vector<const Component*> on_node(const NodeId& node) const;

  void record_drop(const Component& c, const EventPtr& e, const std::string& reason);
  void record_error(const Component& c, const EventPtr& e, const std::string& reason);
  const PipelineCounters& counters() const { return counters_; }

 private:
  friend class Component;

  void transmit(const Component& from, const std::string& dst, const EventPtr& e);
  void arrive(const std::string& dst, const EventPtr& e, const std::string* from);

  sim::Kernel& kernel_;
  pubsub::PubSub* pubsub_;
  std::map<std::string, ComponentFactory> factories_;
  std::map<std::string, std::unique_ptr<Component>> components_;
  PipelineCounters counters_;
};

/// Registers sensor_source, distance_filter, fanout_bus, buffer, publisher
/// and collector.
void register_builtin_components(PipelineHost& host);

/// Test and scenario sink that keeps every event it receives.
class Collector : public Component {
 public:
  using Component::Component;
  void on_put(const EventPtr& e) override { received.push_back(e); }
  std::vector<EventPtr> received;
};

}  // namespace ctxmatch::pipeline
