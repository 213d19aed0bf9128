#pragma once

// Static three-tier network: devices, gNodeBs and the nearest-gNodeB association.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edgetwin/rng.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double squared_distance(Point a, Point b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Fractions of (mMTC, eMBB, URLLC) devices.
struct ClassMix {
  double mmtc = 0.6;
  double embb = 0.3;
  double urllc = 0.1;

  std::array<double, 3> as_array() const { return {mmtc, embb, urllc}; }
};

struct NetworkConfig {
  std::uint64_t n_devices = 50000;
  std::uint32_t n_gnbs = 100;
  double area_km2 = 1.0;
  ClassMix class_mix{};
  Resources gnb_capacity{8.0, 16.0, 400.0};
  /// Bits per second carried per Hz of allocated bandwidth.
  double spectral_efficiency = 5.0;
  std::uint64_t rng_seed = 1;

  double side_m() const { return std::sqrt(area_km2) * 1000.0; }

  void validate() const {
    const auto mix = class_mix.as_array();
    double sum = 0.0;
    for (double f : mix) {
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("class_mix: each fraction must lie in [0, 1]");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("class_mix: fractions must sum to 1 (got " + std::to_string(sum) + ")");
    if (n_devices > 0 && n_gnbs == 0) throw ConfigError("n_gnbs: at least one gNodeB is required when n_devices > 0");
    if (!(area_km2 > 0.0)) throw ConfigError("area_km2: must be positive");
    if (!gnb_capacity.nonnegative()) throw ConfigError("gnb_capacity: entries must be nonnegative");
    if (!(spectral_efficiency > 0.0)) throw ConfigError("spectral_efficiency: must be positive");
  }
};

struct DeviceState {
  DeviceId id = 0;
  Point pos{};
  DeviceClass cls = DeviceClass::kMmtc;
  Slice slice = Slice::kNrts;
  GnbId home_gnb = 0;
  /// Seed of the device's PUF secret; the 256-vector is materialised on demand
  /// (see security.hpp) so large topologies do not hold 50k x 256 doubles.
  std::uint64_t puf_seed = 0;
  bool honest = true;
};

struct GnbEnergy {
  double grid_j = 0.0;
  double renewable_j = 0.0;
  double comp_j = 0.0;
  double comm_j = 0.0;
};

struct GnbState {
  GnbId id = 0;
  Point pos{};
  Resources capacity{};
  std::array<Resources, kNumSlices> alloc{};
  std::vector<DeviceId> attached_devices;
  GnbEnergy energy{};

  Resources allocated_total() const {
    Resources t{};
    for (const auto& a : alloc) t += a;
    return t;
  }
};

struct Topology {
  std::vector<DeviceState> devices;
  std::vector<GnbState> gnbs;
};

/// Index of the gNodeB closest to pos; ties go to the lowest index.
inline GnbId nearest_gnb(Point pos, std::span<const GnbState> gnbs) {
  if (gnbs.empty()) throw ContractError("nearest_gnb: gNodeB list is empty");
  GnbId best = 0;
  double best_d = squared_distance(pos, gnbs[0].pos);
  for (std::size_t j = 1; j < gnbs.size(); ++j) {
    const double d = squared_distance(pos, gnbs[j].pos);
    if (d < best_d) {
      best_d = d;
      best = static_cast<GnbId>(j);
    }
  }
  return best;
}

/// Largest-remainder apportionment of n items over fractions. Ties in the
/// remainder go to the lower index.
inline std::array<std::uint64_t, 3> apportion(std::uint64_t n, const std::array<double, 3>& fractions) {
  std::array<std::uint64_t, 3> counts{};
  std::array<double, 3> rem{};
  std::uint64_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * fractions[k];
    counts[k] = static_cast<std::uint64_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < n; i = (i + 1) % 3) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

inline Topology build_topology(const NetworkConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::stream(cfg.rng_seed, StreamKey::kTopology);
  const double side = cfg.side_m();

  Topology topo;
  topo.gnbs.resize(cfg.n_gnbs);
  for (GnbId j = 0; j < cfg.n_gnbs; ++j) {
    auto& g = topo.gnbs[j];
    g.id = j;
    g.pos = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
    g.capacity = cfg.gnb_capacity;
  }

  const auto counts = apportion(cfg.n_devices, cfg.class_mix.as_array());
  std::vector<DeviceClass> classes;
  classes.reserve(cfg.n_devices);
  for (std::size_t k = 0; k < 3; ++k) classes.insert(classes.end(), counts[k], static_cast<DeviceClass>(k));
  for (std::size_t i = classes.size(); i > 1; --i) std::swap(classes[i - 1], classes[rng.below(i)]);

  topo.devices.resize(cfg.n_devices);
  for (DeviceId i = 0; i < cfg.n_devices; ++i) {
    auto& d = topo.devices[i];
    d.id = i;
    d.pos = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
    d.cls = classes[i];
    d.slice = slice_of(d.cls);
    d.home_gnb = nearest_gnb(d.pos, topo.gnbs);
    d.puf_seed = rng();
    topo.gnbs[d.home_gnb].attached_devices.push_back(i);
  }
  return topo;
}

}  // namespace edgetwin
