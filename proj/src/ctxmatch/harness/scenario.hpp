#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxmatch/core/error.hpp"
#include "ctxmatch/core/json_types.hpp"
#include "ctxmatch/core/sim_time.hpp"
#include "ctxmatch/deploy/deploy_manager.hpp"
#include "ctxmatch/knowledge/fact.hpp"
#include "ctxmatch/knowledge/knowledge_base.hpp"
#include "ctxmatch/core/value.hpp"

namespace ctxmatch::harness {

/// Scenario epoch: a calendar day plus the time of day sim time 0 falls on.
struct Epoch {
  std::int64_t day = 0;  // days since 1970-01-01
  Millis offset_in_day = 0;

  /// "YYYY-MM-DDTHH:MM[:SS]". Throws InvalidArgument.
  static Epoch parse(const std::string& text);
  /// Integer millis, "HH:MM[:SS]" on the epoch day, or "YYYY-MM-DDTHH:MM[:SS]".
  /// Times before the epoch are rejected. Throws InvalidArgument.
  Millis to_millis(const Json& value) const;
};

struct NodeDecl {
  std::string name;
  NodeId id;
  std::string region;
  GeoPoint coords;
  int storage_slots = 4;
  int compute_slots = 4;
  std::optional<std::set<std::string>> allow;
};

struct FactDecl {
  knowledge::Fact fact;
  std::string origin;  // node name
};

struct MatchletDecl {
  std::string node;
  Json def;
};

struct BundleDecl {
  deploy::Bundle bundle;
  /// Stored in the overlay under the discovery key of this event type.
  std::optional<std::string> discovery_type;
};

struct ComponentDecl {
  std::string id;
  std::string type;
  std::string node;
  Json config = Json::object();
  std::vector<std::string> outputs;
  /// Sensors declared in the `sensors` section.
  bool sensor = false;
};

struct ChurnDecl {
  enum class Op { Crash, Leave, Join };
  SimTime at;
  Op op = Op::Crash;
  std::string node;
  /// Profile for joins.
  std::optional<NodeDecl> profile;
};

struct Policies {
  knowledge::KbPolicy kb;
  deploy::DeployConfig deploy;
  double walking_speed_kmh = 5.0;
  bool covering = true;
  Millis census_period = kSecond;
};

/// Outcome checks evaluated against a trace. `spec` keeps the normalized
/// form: times in millis, constraint references inlined.
struct Assertion {
  enum class Kind { EventEmitted, NoEvent, ReplicaCountAt, ConstraintSatisfiedBy, MetricBound };
  Kind kind = Kind::EventEmitted;
  std::string label;
  Json spec = Json::object();

  static std::string kind_name(Kind k);
};

struct Scenario {
  std::string name;
  std::string epoch_text;
  Epoch epoch;
  std::vector<std::string> regions;
  std::vector<NodeDecl> nodes;
  std::vector<std::pair<std::string, GeoPoint>> gazetteer;
  std::vector<FactDecl> facts;
  std::vector<MatchletDecl> matchlets;
  std::vector<BundleDecl> bundles;
  std::vector<ComponentDecl> components;
  std::vector<deploy::PlacementConstraint> constraints;
  Policies policies;
  std::vector<ChurnDecl> churn;
  std::optional<std::string> discovery_node;
  std::set<std::string> discovery_ignore;
  std::vector<Assertion> assertions;
  /// Default run length when the caller gives none.
  std::optional<Millis> until;

  const NodeDecl* node(const std::string& name) const;
  std::size_t sensor_event_count() const;
};

/// Diagnostics carry a JSON path ("matchlets[1].matchlet.guards[0]: ...")
/// or, for syntax errors, a line and column.
class ScenarioError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

Scenario parse_scenario(const std::string& text);
/// Throws ScenarioError, including for unreadable files.
Scenario load_scenario(const std::string& path);

}  // namespace ctxmatch::harness
