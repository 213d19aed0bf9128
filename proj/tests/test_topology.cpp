#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "edgetwin/topology.hpp"

using namespace edgetwin;

TEST(Topology, DefaultMixCounts) {
  NetworkConfig cfg;
  cfg.rng_seed = 3;
  const auto topo = build_topology(cfg);
  ASSERT_EQ(topo.devices.size(), 50000u);
  ASSERT_EQ(topo.gnbs.size(), 100u);
  std::array<std::size_t, 3> counts{};
  for (const auto& d : topo.devices) ++counts[idx(d.cls)];
  EXPECT_EQ(counts[idx(DeviceClass::kMmtc)], 30000u);
  EXPECT_EQ(counts[idx(DeviceClass::kEmbb)], 15000u);
  EXPECT_EQ(counts[idx(DeviceClass::kUrllc)], 5000u);
}

TEST(Topology, EmptyDeviceList) {
  NetworkConfig cfg;
  cfg.n_devices = 0;
  cfg.n_gnbs = 1;
  const auto topo = build_topology(cfg);
  EXPECT_TRUE(topo.devices.empty());
  EXPECT_EQ(topo.gnbs.size(), 1u);
}

TEST(Topology, SameSeedSameTopology) {
  NetworkConfig cfg;
  cfg.n_devices = 10;
  cfg.n_gnbs = 3;
  cfg.rng_seed = 7;
  const auto a = build_topology(cfg);
  const auto b = build_topology(cfg);
  for (std::size_t i = 0; i < a.devices.size(); ++i) {
    EXPECT_EQ(a.devices[i].pos.x, b.devices[i].pos.x);
    EXPECT_EQ(a.devices[i].pos.y, b.devices[i].pos.y);
    EXPECT_EQ(a.devices[i].home_gnb, b.devices[i].home_gnb);
    EXPECT_EQ(a.devices[i].puf_seed, b.devices[i].puf_seed);
  }
}

TEST(Topology, InvalidConfigs) {
  NetworkConfig cfg;
  cfg.class_mix = {0.5, 0.5, 0.5};
  EXPECT_THROW(build_topology(cfg), ConfigError);
  NetworkConfig none;
  none.n_gnbs = 0;
  EXPECT_THROW(build_topology(none), ConfigError);
}

static std::vector<GnbState> gnbs_at(std::initializer_list<Point> pts) {
  std::vector<GnbState> g;
  for (auto p : pts) {
    GnbState s;
    s.id = static_cast<GnbId>(g.size());
    s.pos = p;
    g.push_back(s);
  }
  return g;
}

TEST(NearestGnb, UniqueMinimum) {
  const auto g = gnbs_at({{1, 0}, {5, 5}});
  EXPECT_EQ(nearest_gnb({0, 0}, g), 0u);
}

TEST(NearestGnb, TieGoesToLowestIndex) {
  const auto g = gnbs_at({{3, 4}, {4, 3}});
  EXPECT_EQ(nearest_gnb({0, 0}, g), 0u);
  const auto h = gnbs_at({{9, 9}, {4, 3}, {3, 4}});
  EXPECT_EQ(nearest_gnb({0, 0}, h), 1u);
}

TEST(NearestGnb, EmptyListIsAContractError) {
  std::vector<GnbState> none;
  EXPECT_THROW(nearest_gnb({0, 0}, none), ContractError);
}

TEST(NearestGnb, MatchesExhaustiveScan) {
  Rng rng = Rng::stream(11, StreamKey::kTopology);
  std::vector<GnbState> g(10);
  for (auto& s : g) s.pos = {rng.uniform(0, 1000), rng.uniform(0, 1000)};
  for (int i = 0; i < 1000; ++i) {
    const Point p{rng.uniform(0, 1000), rng.uniform(0, 1000)};
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double d = std::hypot(p.x - g[j].pos.x, p.y - g[j].pos.y);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    EXPECT_EQ(nearest_gnb(p, g), best);
  }
}

TEST(Topology, PropertiesHoldForBuiltNetworks) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    NetworkConfig cfg;
    cfg.n_devices = 997;
    cfg.n_gnbs = 13;
    cfg.area_km2 = 0.25;
    cfg.rng_seed = seed;
    const auto topo = build_topology(cfg);
    const double side = cfg.side_m();
    std::array<std::size_t, 3> counts{};
    for (const auto& d : topo.devices) {
      ++counts[idx(d.cls)];
      EXPECT_GE(d.pos.x, 0.0);
      EXPECT_LE(d.pos.x, side);
      EXPECT_GE(d.pos.y, 0.0);
      EXPECT_LE(d.pos.y, side);
      EXPECT_EQ(d.slice, slice_of(d.cls));
      const double home = squared_distance(d.pos, topo.gnbs[d.home_gnb].pos);
      for (const auto& g : topo.gnbs) EXPECT_GE(squared_distance(d.pos, g.pos), home);
    }
    const auto mix = cfg.class_mix.as_array();
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(static_cast<double>(counts[k]) - mix[k] * 997.0), 1.0);
    for (const auto& g : topo.gnbs)
      for (auto id : g.attached_devices) EXPECT_EQ(topo.devices[id].home_gnb, g.id);
  }
}

TEST(Apportion, LargestRemainder) {
  const auto c = apportion(10, {0.6, 0.3, 0.1});
  EXPECT_EQ(c[0] + c[1] + c[2], 10u);
  EXPECT_EQ(c[0], 6u);
  const auto d = apportion(7, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_EQ(d[0] + d[1] + d[2], 7u);
  for (auto v : d) EXPECT_TRUE(v == 2u || v == 3u);
}
