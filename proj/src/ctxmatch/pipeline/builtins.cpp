#include "ctxmatch/pipeline/builtins.hpp"

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::pipeline {

namespace {

const Json& required(const Json& config, const char* key) {
  if (!config.is_object() || !config.contains(key)) throw InvalidArgument(std::string("config.") + key + " is required");
  return config[key];
}

template <typename F>
std::unique_ptr<Component> make(const ComponentSpec& spec, PipelineHost& host) {
  return std::make_unique<F>(spec, host);
}

}  // namespace

SensorSource::SensorSource(const ComponentSpec& spec, PipelineHost& host) : Component(spec, host) {
  const Json& cfg = config();
  if (cfg.contains("publish")) publish_ = cfg["publish"].get<bool>();
  if (!cfg.contains("schedule")) return;
  const Json& sched = cfg["schedule"];
  if (!sched.is_array()) throw InvalidArgument("config.schedule must be an array");
  for (std::size_t i = 0; i < sched.size(); ++i) {
    const Json& item = sched[i];
    const std::string where = "config.schedule[" + std::to_string(i) + "]";
    if (!item.is_object() || !item.contains("at") || !item["at"].is_number_integer() || !item.contains("type")) {
      throw InvalidArgument(where + ": expected {at, type, attributes}");
    }
    ScheduledEvent ev{SimTime{item["at"].get<Millis>()}, item["type"].get<std::string>(), {}};
    if (item.contains("attributes")) ev.attributes = AttributeList::from_json(item["attributes"]);
    if (!schedule_.empty() && ev.at < schedule_.back().at) throw InvalidArgument(where + ": schedule is not sorted by time");
    schedule_.push_back(std::move(ev));
  }
}

void SensorSource::start() {
  for (std::size_t i = 0; i < schedule_.size(); ++i) {
    if (schedule_[i].at < host_.kernel().now()) continue;
    pending_.push_back(host_.kernel().schedule(schedule_[i].at, [this, i] { fire(i); }));
  }
}

void SensorSource::stop() {
  for (const auto& h : pending_) host_.kernel().cancel(h);
  pending_.clear();
}

void SensorSource::fire(std::size_t index) {
  auto& kernel = host_.kernel();
  if (!kernel.alive(node())) return;
  const ScheduledEvent& s = schedule_[index];
  Event e;
  e.type_name = s.type;
  e.attributes = s.attributes;
  e.timestamp = kernel.now();
  e.source = node();
  EventPtr ptr;
  if (publish_ && host_.pubsub() != nullptr) {
    ptr = host_.pubsub()->publish(node(), std::move(e));
  } else {
    e.event_id = kernel.next_event_id();
    ptr = std::make_shared<const Event>(std::move(e));
  }
  forward(ptr);
}

DistanceFilter::DistanceFilter(const ComponentSpec& spec, PipelineHost& host) : Component(spec, host) {
  attribute_ = required(config(), "attribute").get<std::string>();
  threshold_m_ = required(config(), "threshold_m").get<double>();
  if (threshold_m_ < 0) throw InvalidArgument("config.threshold_m must be >= 0");
}

void DistanceFilter::on_put(const EventPtr& e) {
  const auto step = distance_filter_step(last_, *e, attribute_, threshold_m_);
  if (!step) {
    host_.record_error(*this, e, "missing geo attribute '" + attribute_ + "'");
    return;
  }
  last_ = step->state;
  if (step->emit) {
    forward(e);
    return;
  }
  Json d = Json::object();
  d["component"] = id();
  d["event_id"] = e->event_id;
  d["moved_m"] = *step->moved_m;
  d["threshold_m"] = threshold_m_;
  host_.kernel().emit("pipe.filter_suppress", node(), std::move(d));
}

Buffer::Buffer(const ComponentSpec& spec, PipelineHost& host) : Component(spec, host) {
  const auto cap = required(config(), "capacity").get<std::int64_t>();
  interval_ = required(config(), "flush_interval_ms").get<Millis>();
  if (cap < 1) throw InvalidArgument("config.capacity must be >= 1");
  if (interval_ < 1) throw InvalidArgument("config.flush_interval_ms must be >= 1");
  capacity_ = static_cast<std::size_t>(cap);
}

void Buffer::start() {
  auto& k = host_.kernel();
  timer_ = k.schedule_periodic(k.now() + interval_, interval_, [this] { flush(); });
}

void Buffer::stop() {
  if (timer_) host_.kernel().cancel(*timer_);
  timer_.reset();
}

void Buffer::on_put(const EventPtr& e) {
  if (held_.size() == capacity_) {
    host_.record_drop(*this, held_.front(), "overflow");
    held_.pop_front();
  }
  held_.push_back(e);
}

void Buffer::flush() {
  if (!host_.kernel().alive(node())) return;
  std::deque<EventPtr> out;
  out.swap(held_);
  for (const auto& e : out) forward(e);
}

void Publisher::on_put(const EventPtr& e) {
  EventPtr out = e;
  if (host_.pubsub() != nullptr) out = host_.pubsub()->publish(node(), *e);
  forward(out);
}

void register_builtin_components(PipelineHost& host) {
  host.register_type("sensor_source", make<SensorSource>);
  host.register_type("distance_filter", make<DistanceFilter>);
  host.register_type("fanout_bus", make<FanoutBus>);
  host.register_type("buffer", make<Buffer>);
  host.register_type("publisher", make<Publisher>);
  host.register_type("collector", make<Collector>);
}

}  // namespace ctxmatch::pipeline
