#include "ctxmatch/matching/component.hpp"

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::matching {

MatchletComponent::MatchletComponent(const pipeline::ComponentSpec& spec, pipeline::PipelineHost& host,
                                     MatchingEngine& engine)
    : Component(spec, host), engine_(engine) {
  if (!spec.config.contains("matchlet")) throw InvalidArgument("matchlet component needs config.matchlet");
  def_ = MatchletDef::from_json(spec.config["matchlet"]);
}

void MatchletComponent::start() {
  instance_ = &engine_.register_matchlet(node(), def_, config().value("subscribe", true));
  instance_->publish = config().value("publish", true);
  instance_->on_emit = [this](const EventPtr& e) { forward(e); };
}

void MatchletComponent::stop() {
  if (instance_ == nullptr) return;
  engine_.unregister(node(), def_.id);
  instance_ = nullptr;
}

void MatchletComponent::on_put(const EventPtr& e) {
  if (instance_ != nullptr) instance_->on_any(e);
}

void register_matchlet_component(pipeline::PipelineHost& host, MatchingEngine& engine) {
  host.register_type("matchlet", [&engine](const pipeline::ComponentSpec& spec, pipeline::PipelineHost& h) {
    return std::make_unique<MatchletComponent>(spec, h, engine);
  });
}

}  // namespace ctxmatch::matching
