#include <doctest.h>

#include <cmath>
#include <random>

#include "ctxmatch/core/error.hpp"
#include "ctxmatch/overlay/overlay.hpp"
#include "support/oracles.hpp"

using namespace ctxmatch;
using namespace ctxmatch::overlay;

namespace {

struct Net {
  sim::Kernel kernel;
  Overlay overlay;

  explicit Net(int n, std::uint64_t seed = 1, std::vector<std::string> regions = {"r0"})
      : kernel(seed, regions), overlay(kernel) {
    for (int i = 0; i < n; ++i) add("n" + std::to_string(i), regions[static_cast<std::size_t>(i) % regions.size()]);
  }

  NodeId add(const std::string& name, const std::string& region) {
    const NodeId id = guid_of("node:" + name);
    kernel.add_node(sim::NodeProfile{id, region, GeoPoint{0, 0}, 8, 8, true});
    overlay.join(id);
    return id;
  }

  std::vector<std::string> live_hex() const {
    std::vector<std::string> out;
    for (const auto& m : overlay.members()) out.push_back(m.hex());
    return out;
  }
};

Guid random_key(std::mt19937_64& rng) {
  return Guid::from_value((UInt128{rng()} << 64) | rng());
}

class MapCache : public CacheHooks {
 public:
  BytesPtr lookup(const NodeId& node, const Guid& guid) override {
    auto it = items.find({node, guid});
    return it == items.end() ? nullptr : it->second;
  }
  void insert(const NodeId& node, const Guid& guid, BytesPtr body) override { items[{node, guid}] = body; }
  std::map<std::pair<NodeId, Guid>, BytesPtr> items;
};

}  // namespace

TEST_SUITE("overlay") {

TEST_CASE("single-node overlay owns every key") {
  Net net(1);
  const auto only = net.overlay.members().front();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto r = net.overlay.route(only, random_key(rng));
    CHECK(r.owner == only);
    CHECK(r.hops() == 0);
  }
}

TEST_CASE("empty overlay rejects routing") {
  sim::Kernel k(1);
  Overlay o(k);
  CHECK_THROWS_AS(o.owner_of(guid_of("x")), Error);
}

TEST_CASE("a node's own id routes to it") {
  Net net(20);
  for (const auto& m : net.overlay.members()) {
    CHECK(net.overlay.route(net.overlay.members().front(), m).owner == m);
  }
}

TEST_CASE("32-node overlay agrees with the linear-scan oracle from every start") {
  Net net(32);
  std::mt19937_64 rng(5);
  const auto ids = net.live_hex();
  for (int i = 0; i < 500; ++i) {
    const Guid key = random_key(rng);
    const std::string expect = oracle::owner_scan(ids, key.hex());
    const auto& start = net.overlay.members()[static_cast<std::size_t>(i) % ids.size()];
    const auto r = net.overlay.route(start, key);
    REQUIRE(r.owner.hex() == expect);
    CHECK(r.hops() <= 32);
  }
}

TEST_CASE("close ids stress the numeric tie-break") {
  sim::Kernel k(1);
  Overlay o(k);
  std::vector<std::string> ids;
  const UInt128 base = UInt128{0xabcd} << 112;
  for (UInt128 d : {UInt128{0}, UInt128{1}, UInt128{3}, UInt128{16}, UInt128{255}, UInt128{256}, UInt128{4096},
                    UInt128{1} << 100, ~UInt128{0}}) {
    const Guid id = Guid::from_value(base + d);
    k.add_node(sim::NodeProfile{id, "r", GeoPoint{}, 1, 1, true});
    o.join(id);
    ids.push_back(id.hex());
  }
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const Guid key = Guid::from_value(base + (UInt128{rng()} % 5000) - 100);
    for (const auto& s : o.members()) REQUIRE(o.route(s, key).owner.hex() == oracle::owner_scan(ids, key.hex()));
  }
}

TEST_CASE("join then route to the new node's own id") {
  Net net(10);
  const NodeId fresh = net.add("fresh", "r0");
  CHECK(net.overlay.owner_of(fresh) == fresh);
  CHECK_THROWS_AS(net.overlay.join(fresh), InvalidArgument);
}

TEST_CASE("departing owner hands keys to the oracle owner of the remaining set") {
  Net net(16);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 30; ++i) {
    const Guid key = random_key(rng);
    const NodeId owner = net.overlay.owner_of(key);
    net.overlay.depart(owner);
    net.kernel.crash(owner, net.kernel.now());
    CHECK(net.overlay.owner_of(key).hex() == oracle::owner_scan(net.live_hex(), key.hex()));
    net.add("re" + std::to_string(i), "r0");
  }
}

TEST_CASE("join/depart storm then routes match the oracle") {
  Net net(24);
  std::mt19937_64 rng(13);
  int fresh = 0;
  for (int op = 0; op < 20; ++op) {
    if (rng() % 2 == 0 && net.overlay.size() > 2) {
      const auto victim = net.overlay.members()[rng() % net.overlay.size()];
      net.overlay.depart(victim);
    } else {
      net.add("storm" + std::to_string(fresh++), "r0");
    }
  }
  const auto ids = net.live_hex();
  for (int i = 0; i < 100; ++i) {
    const Guid key = random_key(rng);
    const auto& start = net.overlay.members()[rng() % ids.size()];
    CHECK(net.overlay.route(start, key).owner.hex() == oracle::owner_scan(ids, key.hex()));
  }
}

TEST_CASE("routing table entries satisfy the prefix rule and exclude self") {
  Net net(40);
  for (const auto& m : net.overlay.members()) {
    const auto& t = net.overlay.routing_table(m);
    for (std::size_t r = 0; r < RoutingTable::kRows; ++r) {
      for (unsigned c = 0; c < RoutingTable::kColumns; ++c) {
        if (!t.cells[r][c]) continue;
        const NodeId& e = *t.cells[r][c];
        CHECK(e != m);
        CHECK(shared_prefix(e, m) == r);
        CHECK(e.digit(r) == c);
        CHECK(net.overlay.contains(e));
      }
    }
    CHECK(t.neighbors.size() == 8);
  }
}

TEST_CASE("median hops within the logarithmic bound") {
  Net net(256);
  std::mt19937_64 rng(17);
  std::vector<double> hops;
  for (int i = 0; i < 500; ++i) {
    const auto& start = net.overlay.members()[rng() % net.overlay.size()];
    hops.push_back(static_cast<double>(net.overlay.route(start, random_key(rng)).hops()));
  }
  const double bound = std::ceil(std::log(256.0) / std::log(16.0)) + 2;
  CHECK(oracle::percentile(hops, 50) <= bound);
}

TEST_CASE("store places k replicas including the oracle owner") {
  Net net(64);
  const auto res = net.overlay.store(net.overlay.members()[3], "fact body", 5);
  CHECK(res.guid == guid_of("fact body"));
  CHECK(res.holders.size() == 5);
  CHECK_FALSE(res.degraded);
  CHECK(std::set<NodeId>(res.holders.begin(), res.holders.end()).size() == 5);
  CHECK(res.holders.front().hex() == oracle::owner_scan(net.live_hex(), res.guid.hex()));
  CHECK(net.overlay.live_holders(res.guid).size() == 5);

  const auto one = net.overlay.store(net.overlay.members()[0], "other", 1);
  CHECK(one.holders == std::vector<NodeId>{net.overlay.owner_of(one.guid)});
}

TEST_CASE("store with k above the live count is degraded") {
  Net net(4);
  const auto res = net.overlay.store(net.overlay.members()[0], "x", 7);
  CHECK(res.holders.size() == 4);
  CHECK(res.degraded);
  CHECK_THROWS_AS(net.overlay.store(net.overlay.members()[0], "y", 0), InvalidArgument);
}

TEST_CASE("fetch from the owner costs zero hops and returns the stored bytes") {
  Net net(30);
  const auto res = net.overlay.store(net.overlay.members()[0], "payload", 3);
  const auto f = net.overlay.fetch(res.owner, res.guid);
  REQUIRE(f.found());
  CHECK(*f.body == "payload");
  CHECK(f.hops == 0);
  CHECK(guid_of(*f.body) == res.guid);
}

TEST_CASE("second fetch hits the requester cache") {
  Net net(30);
  const auto res = net.overlay.store(net.overlay.members()[0], "payload", 1);
  NodeId far = net.overlay.members()[0];
  for (const auto& m : net.overlay.members()) {
    if (net.overlay.route(m, res.guid).hops() >= 1 && !net.overlay.holds(m, res.guid)) far = m;
  }
  MapCache cache;
  FetchOptions opt{&cache, false};
  const auto first = net.overlay.fetch(far, res.guid, opt);
  const auto second = net.overlay.fetch(far, res.guid, opt);
  REQUIRE(first.found());
  REQUIRE(second.found());
  CHECK(first.hops >= 1);
  CHECK(second.hops == 0);
  CHECK(second.from_cache);
  CHECK(*second.body == *first.body);
}

TEST_CASE("all holders crashed and no cache means not found") {
  Net net(12);
  const auto res = net.overlay.store(net.overlay.members()[0], "gone", 2);
  for (const auto& h : res.holders) {
    net.overlay.depart(h);
    net.kernel.crash(h, net.kernel.now());
  }
  net.kernel.run_until(net.kernel.now());
  const auto f = net.overlay.fetch(net.overlay.members()[0], res.guid);
  CHECK_FALSE(f.found());
}

TEST_CASE("surviving non-owner holder is found through the owner registry") {
  Net net(20);
  const auto res = net.overlay.store(net.overlay.members()[0], "survivor", 3);
  for (std::size_t i = 0; i + 1 < res.holders.size(); ++i) {
    net.overlay.depart(res.holders[i]);
    net.kernel.crash(res.holders[i], net.kernel.now());
  }
  net.kernel.run_until(net.kernel.now());
  for (const auto& m : net.overlay.members()) {
    const auto f = net.overlay.fetch(m, res.guid);
    REQUIRE(f.found());
    CHECK(*f.body == "survivor");
  }
}

TEST_CASE("storage filter excludes non-storelet nodes") {
  Net net(10);
  const NodeId banned = net.overlay.members()[0];
  net.overlay.set_storage_filter([&](const NodeId& n) { return n != banned; });
  for (int i = 0; i < 20; ++i) {
    const auto res = net.overlay.store(banned, "item" + std::to_string(i), 3);
    CHECK(std::find(res.holders.begin(), res.holders.end(), banned) == res.holders.end());
    CHECK(res.holders.size() == 3);
  }
}

TEST_CASE("named items are replaced in place") {
  Net net(10);
  const Guid key = guid_of("idx:test");
  net.overlay.store_named(net.overlay.members()[0], key, "v1", 3);
  const auto second = net.overlay.store_named(net.overlay.members()[1], key, "v2", 3);
  CHECK(second.holders.size() == 3);
  const auto f = net.overlay.fetch(net.overlay.members()[5], key);
  REQUIRE(f.found());
  CHECK(*f.body == "v2");
  CHECK(net.overlay.item_at(second.holders[0], key)->version == 2);
}

}
