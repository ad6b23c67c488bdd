#include "ctxmatch/pipeline/component.hpp"

#include <algorithm>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::pipeline {

Component::Component(ComponentSpec spec, PipelineHost& host) : host_(host), spec_(std::move(spec)) {}

void Component::forward(const EventPtr& e) {
  for (const auto& dst : outputs_) host_.transmit(*this, dst, e);
}

PipelineHost::PipelineHost(sim::Kernel& kernel, pubsub::PubSub* pubsub) : kernel_(kernel), pubsub_(pubsub) {}

void PipelineHost::register_type(const std::string& type, ComponentFactory factory) {
  factories_[type] = std::move(factory);
}

Component& PipelineHost::create(const ComponentSpec& spec) {
  if (spec.id.empty()) throw InvalidArgument("component id must not be empty");
  if (components_.count(spec.id)) throw InvalidArgument("duplicate component id '" + spec.id + "'");
  if (!kernel_.has_node(spec.node)) throw InvalidArgument("component '" + spec.id + "': unknown node " + spec.node.hex());
  auto f = factories_.find(spec.type);
  if (f == factories_.end()) throw InvalidArgument("component '" + spec.id + "': unknown type '" + spec.type + "'");
  std::unique_ptr<Component> c;
  try {
    c = f->second(spec, *this);
  } catch (const std::exception& e) {
    throw InvalidArgument("component '" + spec.id + "': " + e.what());
  }
  Component& ref = *c;
  components_.emplace(spec.id, std::move(c));
  return ref;
}

Component& PipelineHost::deploy(const ComponentSpec& spec) {
  for (const auto& out : spec.outputs) {
    if (out != spec.id && !components_.count(out)) {
      throw InvalidArgument("component '" + spec.id + "': unknown output '" + out + "'");
    }
  }
  Component& c = create(spec);
  try {
    for (const auto& out : spec.outputs) connect(spec.id, out);
  } catch (...) {
    components_.erase(spec.id);
    throw;
  }
  c.start();
  return c;
}

void PipelineHost::remove(const std::string& id) {
  auto it = components_.find(id);
  if (it == components_.end()) throw NotFound("unknown component '" + id + "'");
  it->second->stop();
  components_.erase(it);
  for (auto& [cid, c] : components_) {
    auto& outs = c->outputs_;
    outs.erase(std::remove(outs.begin(), outs.end(), id), outs.end());
  }
}

void PipelineHost::connect(const std::string& src, const std::string& dst) {
  if (src == dst) throw InvalidArgument("self-loop on component '" + src + "'");
  Component* s = find(src);
  if (s == nullptr) throw NotFound("unknown component '" + src + "'");
  if (find(dst) == nullptr) throw NotFound("unknown component '" + dst + "'");
  if (std::find(s->outputs_.begin(), s->outputs_.end(), dst) != s->outputs_.end()) {
    throw InvalidArgument("duplicate edge " + src + " -> " + dst);
  }
  s->outputs_.push_back(dst);
}

bool PipelineHost::is_remote(const std::string& src, const std::string& dst) const {
  const Component* s = find(src);
  const Component* d = find(dst);
  if (s == nullptr || d == nullptr) throw NotFound("unknown edge " + src + " -> " + dst);
  return s->node() != d->node();
}

void PipelineHost::put(const std::string& id, const EventPtr& e) {
  if (find(id) == nullptr) throw NotFound("unknown component '" + id + "'");
  arrive(id, e, nullptr);
}

void PipelineHost::transmit(const Component& from, const std::string& dst, const EventPtr& e) {
  const Component* d = find(dst);
  if (d == nullptr) return;
  if (d->node() == from.node()) {
    arrive(dst, e, &from.id());
    return;
  }
  // Constant per-pair latency plus FIFO tie-breaking keeps each remote edge in order.
  kernel_.send(from.node(), d->node(), "pipe.remote",
               [this, dst, e, src = from.id()] { arrive(dst, e, &src); });
}

void PipelineHost::arrive(const std::string& dst, const EventPtr& e, const std::string* from) {
  Component* c = find(dst);
  if (c == nullptr) return;  // undeployed while the event was in flight
  if (!kernel_.alive(c->node())) {
    record_drop(*c, e, "node dead");
    return;
  }
  ++counters_.puts;
  Json d = Json::object();
  d["component"] = c->id();
  d["event_id"] = e->event_id;
  d["type"] = e->type_name;
  d["from"] = from ? Json(*from) : Json(nullptr);
  kernel_.emit("pipe.put", c->node(), std::move(d));
  c->on_put(e);
}

Component* PipelineHost::find(const std::string& id) {
  auto it = components_.find(id);
  return it == components_.end() ? nullptr : it->second.get();
}

const Component* PipelineHost::find(const std::string& id) const {
  auto it = components_.find(id);
  return it == components_.end() ? nullptr : it->second.get();
}

std::vector<const Component*> PipelineHost::components() const {
  std::vector<const Component*> out;
  for (const auto& [id, c] : components_) out.push_back(c.get());
  return out;
}

std::vector<const Component*> PipelineHost::on_node(const NodeId& node) const {
  std::vector<const Component*> out;
  for (const auto& [id, c] : components_) {
    if (c->node() == node) out.push_back(c.get());
  }
  return out;
}

void PipelineHost::record_drop(const Component& c, const EventPtr& e, const std::string& reason) {
  ++counters_.drops;
  Json d = Json::object();
  d["component"] = c.id();
  d["event_id"] = e->event_id;
  d["reason"] = reason;
  kernel_.emit("pipe.drop", c.node(), std::move(d));
}

void PipelineHost::record_error(const Component& c, const EventPtr& e, const std::string& reason) {
  ++counters_.errors;
  Json d = Json::object();
  d["component"] = c.id();
  d["event_id"] = e->event_id;
  d["reason"] = reason;
  kernel_.emit("pipe.error", c.node(), std::move(d));
}

}  // namespace ctxmatch::pipeline
