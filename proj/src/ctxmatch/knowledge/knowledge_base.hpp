#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxmatch/knowledge/fact.hpp"
#include "ctxmatch/knowledge/lru_cache.hpp"
#include "ctxmatch/overlay/overlay.hpp"
#include "ctxmatch/pubsub/broker.hpp"

namespace ctxmatch::knowledge {

struct KbPolicy {
  int k = 5;
  Millis heal_period = 10 * kSecond;
  int access_threshold = 3;
  Millis access_window = 60 * kSecond;
  double cache_fraction = 0.25;
  bool caching = true;
  bool on_path_caching = false;
  bool backup = false;
  bool latency_reduction = false;
  /// Publish a "fact:<kind>" event for every stored fact.
  bool announce_facts = true;
};

struct PutResult {
  Guid guid;
  std::vector<NodeId> holders;
  bool degraded = false;
  std::optional<NodeId> backup;
};

struct GetResult {
  std::optional<Fact> fact;
  std::size_t hops = 0;
  Millis latency = 0;
  bool from_cache = false;
  std::optional<NodeId> served_by;
};

/// Fact store over the overlay: kind indexes, replica targets, backup and
/// latency-reduction placement, per-node LRU caches and periodic healing.
class KnowledgeBase : public overlay::CacheHooks {
 public:
  KnowledgeBase(sim::Kernel& kernel, overlay::Overlay& overlay, pubsub::PubSub* pubsub, KbPolicy policy = {});

  const KbPolicy& policy() const { return policy_; }
  /// Schedules heal rounds (and the access monitor when enabled).
  void start();

  /// Throws InvalidArgument when k < 1.
  PutResult put_fact(const NodeId& origin, Fact f, std::optional<int> k = std::nullopt);
  GetResult get_fact(const NodeId& requester, const Guid& guid);
  /// Members of the kind index as seen from `requester`; nullopt when the
  /// index cannot be fetched.
  std::optional<std::vector<Guid>> kind_members(const NodeId& requester, const std::string& kind);

  /// Replica target override for every fact of `kind`.
  void set_kind_target(const std::string& kind, int k);
  std::optional<int> kind_target(const std::string& kind) const;

  /// Holder reports, then heal_tick on every live owner.
  void heal_round();
  /// Returns the repair actions taken (also traced as kb.heal).
  std::vector<Json> heal_tick(const NodeId& owner);
  std::vector<Json> access_monitor_tick();

  std::size_t live_replicas(const Guid& guid) const { return overlay_.live_holders(guid).size(); }
  const std::set<Guid>& stored_facts() const { return facts_; }
  std::optional<std::string> kind_of(const Guid& guid) const;

  // overlay::CacheHooks
  overlay::BytesPtr lookup(const NodeId& node, const Guid& guid) override;
  void insert(const NodeId& node, const Guid& guid, overlay::BytesPtr body) override;
  bool cached(const NodeId& node, const Guid& guid) const;

  static Guid index_key(const std::string& kind) { return guid_of("idx:" + kind); }

 private:
  struct Access {
    SimTime at;
    Guid guid;
  };

  void update_index(const NodeId& origin, const std::string& kind, const Guid& guid);
  std::optional<NodeId> place_backup(const NodeId& origin, const Guid& guid, const std::vector<NodeId>& holders);
  LruCache<Guid, overlay::BytesPtr>& cache_of(const NodeId& node);
  int target_for(const Guid& guid, const overlay::Overlay::RegistryEntry& entry) const;

  sim::Kernel& kernel_;
  overlay::Overlay& overlay_;
  pubsub::PubSub* pubsub_;
  KbPolicy policy_;
  std::set<Guid> facts_;
  std::map<Guid, SimTime> created_;
  std::map<Guid, std::string> kinds_;
  std::map<std::string, int> kind_targets_;
  std::map<NodeId, LruCache<Guid, overlay::BytesPtr>> caches_;
  std::map<std::pair<std::string, std::string>, std::deque<Access>> accesses_;
};

}  // namespace ctxmatch::knowledge
