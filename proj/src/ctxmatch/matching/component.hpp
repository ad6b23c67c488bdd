#pragma once

#include "ctxmatch/matching/engine.hpp"
#include "ctxmatch/pipeline/component.hpp"

namespace ctxmatch::matching {

/// Pipeline type "matchlet". Config: {"matchlet": {...}, "subscribe": true,
/// "publish": true}. Events put into the component are matched against
/// every pattern they satisfy; emissions are forwarded to the outputs.
class MatchletComponent : public pipeline::Component {
 public:
  MatchletComponent(const pipeline::ComponentSpec& spec, pipeline::PipelineHost& host, MatchingEngine& engine);

  void start() override;
  void stop() override;
  void on_put(const EventPtr& e) override;

  MatchletInstance* instance() { return instance_; }

 private:
  MatchingEngine& engine_;
  MatchletDef def_;
  MatchletInstance* instance_ = nullptr;
};

void register_matchlet_component(pipeline::PipelineHost& host, MatchingEngine& engine);

}  // namespace ctxmatch::matching
