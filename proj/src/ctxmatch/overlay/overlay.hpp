#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxmatch/core/guid.hpp"
#include "ctxmatch/core/sim_time.hpp"
#include "ctxmatch/sim/kernel.hpp"

namespace ctxmatch::overlay {

/// Raw item contents.
using Bytes = std::string;
using BytesPtr = std::shared_ptr<const Bytes>;

/// True when `a` ranks before `b` as owner of `key`: longer shared prefix,
/// then smaller absolute numeric distance, then lower id.
bool closer_to(const Guid& key, const NodeId& a, const NodeId& b);

/// Plaxton/Pastry-style routing state for one node. Row r, column c holds a
/// member sharing r leading digits with the node whose digit r is c (the
/// numerically nearest such member). The neighbor set holds up to four
/// numerically closest members on each side.
struct RoutingTable {
  static constexpr std::size_t kRows = Guid::kDigits;
  static constexpr std::size_t kColumns = Guid::kRadix;
  static constexpr std::size_t kNeighborsPerSide = 4;

  NodeId self;
  std::array<std::array<std::optional<NodeId>, kColumns>, kRows> cells{};
  std::vector<NodeId> neighbors;
  /// Every distinct node referenced by cells or neighbors.
  std::vector<NodeId> known;
};

struct RouteResult {
  NodeId owner;
  /// path.front() is the start node, path.back() the owner.
  std::vector<NodeId> path;
  Millis latency = 0;

  std::size_t hops() const { return path.size() - 1; }
};

struct StoredItem {
  BytesPtr body;
  int k = 1;
  std::string tag;
  bool named = false;
  std::uint32_t version = 1;
};

struct StoreResult {
  Guid guid;
  NodeId owner;
  std::vector<NodeId> holders;
  bool degraded = false;
};

/// Per-node cache consulted by fetch. The overlay never decides what is
/// cached; it only calls these hooks.
class CacheHooks {
 public:
  virtual ~CacheHooks() = default;
  virtual BytesPtr lookup(const NodeId& node, const Guid& guid) = 0;
  virtual void insert(const NodeId& node, const Guid& guid, BytesPtr body) = 0;
};

struct FetchOptions {
  CacheHooks* cache = nullptr;
  bool on_path_caching = false;
};

struct FetchResult {
  BytesPtr body;
  std::size_t hops = 0;
  Millis latency = 0;
  std::optional<NodeId> served_by;
  bool from_cache = false;

  bool found() const { return body != nullptr; }
};

class Overlay {
 public:
  struct RegistryEntry {
    int k = 1;
    std::string tag;
    bool named = false;
    std::set<NodeId> holders;
  };

  explicit Overlay(sim::Kernel& kernel);

  /// Throws InvalidArgument on duplicate join or unknown/dead node.
  void join(const NodeId& node);
  /// Throws InvalidArgument when `node` is not a member.
  void depart(const NodeId& node);

  bool contains(const NodeId& node) const;
  std::size_t size() const { return members_.size(); }
  /// Sorted ascending.
  const std::vector<NodeId>& members() const { return members_; }

  /// Routes greedily from `start`. Throws Error on an empty overlay or when
  /// `start` is not a member.
  RouteResult route(const NodeId& start, const Guid& key) const;
  NodeId owner_of(const Guid& key) const;
  /// Members ordered by closer_to(key).
  std::vector<NodeId> ranked(const Guid& key) const;
  const RoutingTable& routing_table(const NodeId& node) const;

  /// Restricts which members may hold replicas (storelet hosts). Default: all.
  void set_storage_filter(std::function<bool(const NodeId&)> filter) { storage_filter_ = std::move(filter); }
  bool can_store(const NodeId& node) const;

  /// Content-addressed store: places `body` on the k highest-ranked storage
  /// members for guid_of(body). Degraded when fewer than k are available.
  StoreResult store(const NodeId& origin, Bytes body, int k, std::string tag = {});
  /// Replaces the contents held under a fixed key (indexes, directories).
  StoreResult store_named(const NodeId& origin, const Guid& key, Bytes body, int k, std::string tag = {});

  FetchResult fetch(const NodeId& requester, const Guid& guid, const FetchOptions& options = {});

  /// Copies an existing item onto `holder` and registers it with the owner.
  bool add_replica(const Guid& guid, const NodeId& holder);
  /// Leaves a location pointer at `at` naming `holder`.
  void add_pointer(const NodeId& at, const Guid& guid, const NodeId& holder);

  bool holds(const NodeId& node, const Guid& guid) const;
  /// Registered holders at the current owner that are alive and still hold the item.
  std::vector<NodeId> live_holders(const Guid& guid) const;
  std::size_t load(const NodeId& node) const;
  std::vector<Guid> stored_items(const NodeId& node) const;
  const StoredItem* item_at(const NodeId& node, const Guid& guid) const;

  /// Every live member reports the items it holds to the current owner of
  /// each item; owner registries are rebuilt from these reports.
  void report_holdings();
  const std::map<Guid, RegistryEntry>& registry(const NodeId& owner) const;

 private:
  void rebuild_tables();
  void register_holder(const NodeId& owner, const Guid& guid, const NodeId& holder, const StoredItem& item);
  void trace_repair(const char* change, const NodeId& node);

  sim::Kernel& kernel_;
  std::vector<NodeId> members_;
  std::map<NodeId, RoutingTable> tables_;
  std::function<bool(const NodeId&)> storage_filter_;
  std::map<NodeId, std::map<Guid, StoredItem>> stores_;
  std::map<NodeId, std::map<Guid, RegistryEntry>> registries_;
  std::map<NodeId, std::map<Guid, std::set<NodeId>>> pointers_;
};

}  // namespace ctxmatch::overlay
