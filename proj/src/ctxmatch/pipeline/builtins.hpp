#pragma once

#include <deque>
#include <optional>

#include "ctxmatch/pipeline/component.hpp"
#include "ctxmatch/pipeline/geo.hpp"

namespace ctxmatch::pipeline {

struct ScheduledEvent {
  SimTime at;
  std::string type;
  AttributeList attributes;
};

/// Emits a fixed schedule of events, publishing each one (unless
/// config.publish is false) and forwarding it to the outputs.
/// config: {"schedule": [{"at": millis, "type": ..., "attributes": {...}}], "publish": bool}
class SensorSource : public Component {
 public:
  SensorSource(const ComponentSpec& spec, PipelineHost& host);
  void start() override;
  void stop() override;
  void on_put(const EventPtr& e) override { forward(e); }
  const std::vector<ScheduledEvent>& schedule() const { return schedule_; }

 private:
  void fire(std::size_t index);

  std::vector<ScheduledEvent> schedule_;
  bool publish_ = true;
  std::vector<sim::ActionHandle> pending_;
};

/// config: {"attribute": name, "threshold_m": meters}
class DistanceFilter : public Component {
 public:
  DistanceFilter(const ComponentSpec& spec, PipelineHost& host);
  void on_put(const EventPtr& e) override;

 private:
  std::string attribute_;
  double threshold_m_ = 0;
  std::optional<GeoPoint> last_;
};

class FanoutBus : public Component {
 public:
  using Component::Component;
  void on_put(const EventPtr& e) override { forward(e); }
};

/// Holds at most `capacity` events, dropping the oldest on overflow, and
/// forwards them in arrival order every `flush_interval_ms`.
class Buffer : public Component {
 public:
  Buffer(const ComponentSpec& spec, PipelineHost& host);
  void start() override;
  void stop() override;
  void on_put(const EventPtr& e) override;
  std::size_t held() const { return held_.size(); }

 private:
  void flush();

  std::size_t capacity_ = 0;
  Millis interval_ = 0;
  std::deque<EventPtr> held_;
  std::optional<sim::ActionHandle> timer_;
};

/// Publishes every event it receives, then forwards it.
class Publisher : public Component {
 public:
  using Component::Component;
  void on_put(const EventPtr& e) override;
};

}  // namespace ctxmatch::pipeline
