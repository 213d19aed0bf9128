#pragma once

// Discrete-time simulation loop: traffic generation, twin synchronization,
// per-epoch slice allocation, fluid FIFO service, energy stepping, federated
// rounds and attack handling. A run is a pure function of (scenario, seed)
// apart from the wall-clock scheduler timing, which is kept out of the
// serialized metrics.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "edgetwin/arima.hpp"
#include "edgetwin/cybertwin.hpp"
#include "edgetwin/energy.hpp"
#include "edgetwin/federated.hpp"
#include "edgetwin/metrics.hpp"
#include "edgetwin/rng.hpp"
#include "edgetwin/scheduler.hpp"
#include "edgetwin/security.hpp"
#include "edgetwin/topology.hpp"
#include "edgetwin/traffic.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

struct FeatureFlags {
  bool compression = true;
  bool solar = true;
  bool security = true;
};

struct Scenario {
  NetworkConfig network{};
  PolicyKind policy = PolicyKind::kHybrid;
  double duration_s = 3600.0;
  double timestep_ms = 1.0;
  std::size_t replications = 10;
  std::uint64_t master_seed = 1;

  TrafficParams traffic{};
  SchedulerConfig scheduler{};
  AttackScenario attacks{};
  EnergyParams energy{};
  SolarConfig solar{};
  /// Optional irradiance CSV replacing the synthetic trace.
  std::string solar_csv;
  FeatureFlags flags{};

  double epoch_ms = 10.0;  ///< allocation refresh period
  double twin_interval_ms = 1000.0;
  std::array<double, 3> sync_interval_ms{1000.0, 100.0, 10.0};  ///< LOW, NORMAL, HIGH
  std::size_t twin_dim = 1000;
  double sensing_mask_fraction = 0.0;
  double reauth_interval_s = 10.0;
  double quarantine_s = 60.0;
  /// Requests whose demand exceeds this multiple of the class nominal are implausible.
  double plausibility_factor = 4.0;
  double fl_interval_s = 10.0;
  double fl_window_s = 1.0;
  std::size_t fl_history = 60;
  std::size_t fl_participants = 10;
  double nrts_drain_s = 0.1;
  double forecast_refresh_min = 15.0;
  std::size_t forecast_history_min = 360;
  bool learned_policy = false;
  double timeline_interval_s = 1.0;
  std::size_t reservoir_capacity = 1'000'000;

  void validate() const {
    network.validate();
    traffic.validate();
    scheduler.validate();
    attacks.validate();
    energy.validate();
    solar.validate();
    if (!(timestep_ms > 0.0)) throw ConfigError("timestep_ms: must be positive");
    if (replications < 1) throw ConfigError("replications: must be >= 1");
    if (!(duration_s >= 0.0)) throw ConfigError("duration_s: must be nonnegative");
    if (!(epoch_ms > 0.0 && twin_interval_ms > 0.0)) throw ConfigError("epoch_ms/twin_interval_ms: must be positive");
    for (double s : sync_interval_ms)
      if (!(s > 0.0)) throw ConfigError("sync_interval_ms: must be positive");
    if (!(reauth_interval_s > 0.0 && quarantine_s >= 0.0)) throw ConfigError("reauth_interval_s/quarantine_s out of range");
    if (!(plausibility_factor >= 1.0)) throw ConfigError("plausibility_factor: must be >= 1");
    if (!(fl_interval_s > 0.0 && fl_window_s > 0.0)) throw ConfigError("fl_interval_s/fl_window_s: must be positive");
    if (fl_participants < 1) throw ConfigError("fl_participants: must be >= 1");
    if (!(nrts_drain_s > 0.0)) throw ConfigError("nrts_drain_s: must be positive");
    if (!(forecast_refresh_min > 0.0)) throw ConfigError("forecast_refresh_min: must be positive");
    if (forecast_history_min < kMinArimaHistory) throw ConfigError("forecast_history_min: must be >= 50");
    if (!(timeline_interval_s > 0.0)) throw ConfigError("timeline_interval_s: must be positive");
    if (reservoir_capacity < 1) throw ConfigError("reservoir_capacity: must be >= 1");
  }
};

struct SliceLatency {
  std::optional<double> p50, p99, max;
  std::optional<double> compliance;
  std::uint64_t count = 0;
};

struct TimelineRow {
  double t_s = 0.0;
  std::array<double, kNumSlices> mean_latency_ms{};
  std::array<double, kNumSlices> max_latency_ms{};
  double grid_w = 0.0;
  double renewable_w = 0.0;
  double irradiance = 0.0;
  double forecast = 0.0;
  double nrts_alloc_fraction = 0.0;
  std::size_t rejects = 0;
  std::size_t quarantined = 0;
};

struct MetricsReport {
  std::uint64_t seed = 0;
  PolicyKind policy = PolicyKind::kHybrid;
  double duration_s = 0.0;

  std::array<SliceLatency, kNumSlices> latency{};
  std::array<std::vector<double>, kNumSlices> latency_samples{};

  std::array<double, kNumSlices> offered_bytes{};
  std::array<double, kNumSlices> admitted_bytes{};
  std::array<double, kNumSlices> served_bytes{};
  std::array<double, kNumSlices> dropped_bytes{};
  std::array<double, kNumSlices> backlog_bytes{};

  double grid_j = 0.0;
  double renewable_j = 0.0;
  std::array<double, kNumSlices> slice_grid_j{};
  std::array<double, kNumSlices> slice_renewable_j{};
  double dissatisfaction = 0.0;

  /// Time-averaged allocated fraction of capacity, [slice][cpu, ram, bw].
  std::array<std::array<double, kNumResources>, kNumSlices> allocated_fraction{};
  double busy_utilization = 0.0;

  DetectionMetrics security{};
  std::size_t quarantines = 0;
  std::map<Provenance, std::size_t> provenance;
  std::size_t fallbacks = 0;
  std::size_t nrts_delayed_epochs = 0;
  std::size_t nrts_forced_epochs = 0;

  std::vector<AggregationRound> fl_rounds;
  std::uint64_t fl_bytes = 0;
  std::uint64_t twin_bytes = 0;
  std::uint64_t twin_raw_bytes = 0;
  double twin_recovery_error = 0.0;

  std::optional<double> policy_net_error;
  double objective = 0.0;

  std::vector<TimelineRow> timeline;

  /// Wall-clock seconds spent inside allocation calls (not serialized to metrics.csv).
  double scheduler_wall_s = 0.0;
  double run_wall_s = 0.0;

  double compression_ratio() const {
    return twin_raw_bytes == 0 ? 0.0 : static_cast<double>(twin_bytes) / static_cast<double>(twin_raw_bytes);
  }

  struct Row {
    std::string metric;
    std::string slice;
    double value;
  };

  /// Deterministic flat view of every scalar metric.
  std::vector<Row> rows() const {
    std::vector<Row> r;
    auto add = [&](std::string m, std::string s, double v) { r.push_back({std::move(m), std::move(s), v}); };
    for (Slice s : kAllSlices) {
      const auto i = idx(s);
      const std::string sn{to_string(s)};
      add("latency_p50_ms", sn, latency[i].p50.value_or(0.0) * 1e3);
      add("latency_p99_ms", sn, latency[i].p99.value_or(0.0) * 1e3);
      add("latency_max_ms", sn, latency[i].max.value_or(0.0) * 1e3);
      add("sla_compliance", sn, latency[i].compliance.value_or(1.0));
      add("packets_served", sn, static_cast<double>(latency[i].count));
      add("offered_bytes", sn, offered_bytes[i]);
      add("served_bytes", sn, served_bytes[i]);
      add("dropped_bytes", sn, dropped_bytes[i]);
      add("backlog_bytes", sn, backlog_bytes[i]);
      add("grid_energy_j", sn, slice_grid_j[i]);
      add("renewable_energy_j", sn, slice_renewable_j[i]);
      add("utilization_cpu", sn, allocated_fraction[i][0]);
      add("utilization_ram", sn, allocated_fraction[i][1]);
      add("utilization_bw", sn, allocated_fraction[i][2]);
    }
    add("grid_energy_j", "all", grid_j);
    add("renewable_energy_j", "all", renewable_j);
    add("total_energy_j", "all", grid_j + renewable_j);
    add("mean_power_w", "all", duration_s > 0.0 ? (grid_j + renewable_j) / duration_s : 0.0);
    add("nrts_mean_power_w", "NRTS",
        duration_s > 0.0 ? (slice_grid_j[idx(Slice::kNrts)] + slice_renewable_j[idx(Slice::kNrts)]) / duration_s : 0.0);
    add("energy_dissatisfaction", "all", dissatisfaction);
    add("busy_utilization", "all", busy_utilization);
    add("objective", "all", objective);
    add("detection_accuracy", "all", security.accuracy);
    add("verification_decisions", "all", static_cast<double>(security.decisions));
    for (AttackType a : kAttackTypes) {
      const auto it = security.per_attack_rate.find(a);
      if (it != security.per_attack_rate.end() && it->second) add("detection_rate", std::string(to_string(a)), *it->second);
    }
    if (security.mean_response_time_s) add("detection_response_s", "all", *security.mean_response_time_s);
    add("quarantines", "all", static_cast<double>(quarantines));
    add("fallbacks", "all", static_cast<double>(fallbacks));
    add("nrts_delayed_epochs", "NRTS", static_cast<double>(nrts_delayed_epochs));
    add("nrts_forced_epochs", "NRTS", static_cast<double>(nrts_forced_epochs));
    for (const auto& [p, n] : provenance) add("provenance_" + std::string(to_string(p)), "all", static_cast<double>(n));
    add("fl_rounds", "all", static_cast<double>(fl_rounds.size()));
    if (!fl_rounds.empty()) add("fl_final_accuracy", "all", fl_rounds.back().accuracy);
    add("fl_bytes", "all", static_cast<double>(fl_bytes));
    add("twin_sync_bytes", "all", static_cast<double>(twin_bytes));
    add("twin_sync_raw_bytes", "all", static_cast<double>(twin_raw_bytes));
    add("twin_compression_ratio", "all", compression_ratio());
    add("twin_recovery_error", "all", twin_recovery_error);
    if (policy_net_error) add("policy_net_error", "all", *policy_net_error);
    return r;
  }
};

namespace detail {

struct QueuedPacket {
  double arrival_ms;
  double remaining;
};

struct SliceQueue {
  std::deque<QueuedPacket> q;
  double bytes = 0.0;
  std::vector<QueuedPacket> staged;
};

struct GnbRuntime {
  std::array<SliceQueue, kNumSlices> queues;
  std::array<double, kNumSlices> declared_bps{};  ///< nominal x demand scale, before headroom
  std::array<double, kNumSlices> twin_load_bps{};
  bool twin_ready = false;
  std::array<double, kNumSlices> window_bytes{};  ///< offered in current twin interval
  double fl_window_bytes = 0.0;
  std::vector<double> nrts_series;
  std::vector<double> nrts_hours;
  double last_data_s = 0.0;
  SliceResources alloc{};
  Resources nrts_alloc{};
  GnbView view{};
  std::size_t quarantined = 0;
  std::size_t devices = 0;
};

struct DeviceRuntime {
  TrafficProcess proc;
  Rng rng;
  double quarantined_until_s = -1.0;
  double demand_scale = 1.0;
};

inline double class_packet_bytes(DeviceClass c, const TrafficParams& p) {
  switch (c) {
    case DeviceClass::kMmtc: return p.mmtc_packet_bytes;
    case DeviceClass::kEmbb: return p.mtu_bytes;
    case DeviceClass::kUrllc: return p.urllc_packet_bytes;
  }
  return 0.0;
}

inline SliceMetadata class_metadata(DeviceClass c, const TrafficParams& p) {
  SliceMetadata m;
  m.packet_bytes = class_packet_bytes(c, p);
  m.rate_bps = nominal_rate_bps(c, p);
  m.mean_interarrival_ms = m.rate_bps > 0.0 ? m.packet_bytes * 8.0 * 1000.0 / m.rate_bps : 0.0;
  m.declared_class = c;
  return m;
}

inline std::size_t steps_for(double interval_ms, double dt_ms) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(interval_ms / dt_ms)));
}

}  // namespace detail

class Simulation {
 public:
  Simulation(const Scenario& sc, std::uint64_t seed) : sc_(sc), seed_(seed) {
    sc_.validate();
    NetworkConfig net = sc_.network;
    net.rng_seed = seed;
    topo_ = build_topology(net);
    cfg_ = sc_.scheduler;
    cfg_.resources.spectral_efficiency = net.spectral_efficiency;
    hybrid_ = sc_.policy == PolicyKind::kHybrid || sc_.policy == PolicyKind::kFedAvgHybrid;
    report_.seed = seed;
    report_.policy = sc_.policy;
    report_.duration_s = sc_.duration_s;

    plan_ = plan_attacks(sc_.attacks, topo_.devices, topo_.gnbs.size(), seed);
    gnbs_.resize(topo_.gnbs.size());
    dr_active_.assign(topo_.devices.size(), true);
    devices_.reserve(topo_.devices.size());
    for (const auto& d : topo_.devices) {
      Rng r = Rng::stream(seed, StreamKey::kTraffic, d.id);
      TrafficProcess p(traffic_kind_for(d.cls), sc_.traffic, d.id, d.slice, r);
      devices_.push_back({std::move(p), r});
      auto& g = gnbs_[d.home_gnb];
      g.declared_bps[idx(d.slice)] += nominal_rate_bps(d.cls, sc_.traffic);
      ++g.devices;
    }
    for (Slice s : kAllSlices) {
      reservoirs_.emplace_back(sc_.reservoir_capacity, seed, idx(s));
      reservoirs_.back().set_bound(cfg_.latency_bound_s[idx(s)]);
    }

    Rng req = Rng::stream(seed, StreamKey::kRequests);
    for (const auto& d : topo_.devices) {
      const double first = req.uniform() * sc_.reauth_interval_s;
      requests_.push({first, d.id});
    }
    puf_rng_ = Rng::stream(seed, StreamKey::kPufNoise);

    if (sc_.flags.compression && sc_.twin_dim > 0) twin_phi_ = SensingMatrix(sc_.twin_dim, seed ^ 0x7417ULL, sc_.sensing_mask_fraction);

    if (hybrid_) {
      Rng fr = Rng::stream(seed, StreamKey::kFederated);
      global_ = make_local_model();
      global_.init(fr);
      if (sc_.policy == PolicyKind::kHybrid && sc_.flags.compression) {
        fl_phi_ = SensingMatrix(global_.param_count(), seed ^ 0xF1ULL);
        channel_.phi = &fl_phi_;
      }
      if (sc_.learned_policy && !topo_.gnbs.empty()) {
        auto t = train_policy_net(topo_.gnbs.front().capacity, cfg_, seed);
        report_.policy_net_error = t.holdout_error;
        if (t.enabled) policy_ = std::move(t.policy);
      }
    }
    setup_solar();
  }

  MetricsReport run() {
    const auto wall0 = std::chrono::steady_clock::now();
    const double dt = sc_.timestep_ms;
    const auto total_steps = static_cast<std::size_t>(std::llround(sc_.duration_s * 1000.0 / dt));
    const auto epoch_steps = detail::steps_for(sc_.epoch_ms, dt);
    const auto twin_steps = detail::steps_for(sc_.twin_interval_ms, dt);
    const auto fl_window_steps = detail::steps_for(sc_.fl_window_s * 1000.0, dt);
    const auto fl_steps = detail::steps_for(sc_.fl_interval_s * 1000.0, dt);
    const auto timeline_steps = detail::steps_for(sc_.timeline_interval_s * 1000.0, dt);
    std::array<std::size_t, 3> sync_steps{};
    for (std::size_t p = 0; p < 3; ++p) sync_steps[p] = detail::steps_for(sc_.sync_interval_ms[p], dt);

    for (std::size_t step = 0; step < total_steps; ++step) {
      const double t0 = static_cast<double>(step) * dt;
      const double t1 = t0 + dt;
      const double t_s = t0 / 1000.0;

      if (solar_on_) refresh_forecast(t_s);
      if (step % epoch_steps == 0) allocate_all(t0, static_cast<double>(std::min(epoch_steps, total_steps - step)));
      process_requests(t_s);
      generate_traffic(t0, dt, t_s);
      serve_and_account(t0, t1, t_s);

      const std::size_t next = step + 1;
      for (std::size_t p = 0; p < 3; ++p)
        if (next % sync_steps[p] == 0) sync_devices(static_cast<SyncPriority>(p));
      if (next % twin_steps == 0) sync_twins(t1 / 1000.0);
      if (next % fl_window_steps == 0) close_fl_window(t1 / 1000.0);
      if (hybrid_ && next % fl_steps == 0) fl_round(t1 / 1000.0);
      if (next % timeline_steps == 0) flush_timeline(t1 / 1000.0);
    }
    finish();
    report_.run_wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return std::move(report_);
  }

 private:
  // -------------------------------------------------------------------------
  // Solar

  double irradiance_minute(double t_s) const {
    return static_cast<double>(history_minutes_) + t_s / 60.0 * sc_.solar.time_scale;
  }

  void setup_solar() {
    solar_on_ = sc_.flags.solar;
    if (!solar_on_) return;
    history_minutes_ = 24 * 60;
    const double run_minutes = sc_.duration_s / 60.0 * sc_.solar.time_scale;
    const auto minutes =
        history_minutes_ + static_cast<std::size_t>(std::ceil(run_minutes)) + static_cast<std::size_t>(sc_.energy.horizon_h * 60.0) + 2;
    const double first_hour = sc_.solar.start_hour - 24.0;
    if (!sc_.solar_csv.empty()) {
      trace_ = SolarTrace::from_csv(sc_.solar_csv, sc_.solar, first_hour);
      history_minutes_ = 0;
    } else {
      trace_ = SolarTrace::synthetic(sc_.solar, first_hour, minutes, seed_);
    }
  }

  void refresh_forecast(double t_s) {
    if (!hybrid_) return;
    const double m = irradiance_minute(t_s);
    const auto block = static_cast<std::int64_t>(std::floor(m / sc_.forecast_refresh_min));
    if (block == forecast_block_) return;
    forecast_block_ = block;
    const auto m0 = static_cast<std::size_t>(std::floor(m));
    forecast_base_ = m0;
    const std::size_t len = std::min(sc_.forecast_history_min, m0 + 1);
    if (len < kMinArimaHistory) {
      forecast_.assign(1, trace_.at_minute(m));
      return;
    }
    const std::size_t from = m0 + 1 - len;
    const auto horizon = static_cast<std::size_t>(sc_.energy.horizon_h * 60.0);
    std::span<const double> hist(trace_.values().data() + from, len);
    const auto clear = trace_.clear_profile(from, len + horizon);
    forecast_ = forecast_solar(hist, horizon, clear);
  }

  double current_forecast(double t_s) const {
    if (forecast_.empty()) return 0.0;
    const auto m = static_cast<std::size_t>(std::floor(irradiance_minute(t_s)));
    const std::size_t k = m > forecast_base_ ? m - forecast_base_ - 1 : 0;
    return forecast_[std::min(k, forecast_.size() - 1)];
  }

  // -------------------------------------------------------------------------
  // Allocation

  Resources rate_resources(double bps) const { return cfg_.resources.for_rate(bps); }

  void build_view(GnbId j) {
    auto& g = gnbs_[j];
    auto& v = g.view;
    v.gnb = j;
    v.capacity = topo_.gnbs[j].capacity;
    for (Slice s : kAllSlices) {
      const auto i = idx(s);
      v.demand[i] = rate_resources(g.declared_bps[i] * cfg_.headroom[i]);
      v.load[i] = rate_resources(g.twin_ready ? g.twin_load_bps[i] : g.declared_bps[i]);
      v.backlog_bytes[i] = g.queues[i].bytes;
    }
    v.current = g.alloc;
  }

  double oldest_age_s(const detail::SliceQueue& q, double t_ms) const {
    return q.q.empty() ? 0.0 : (t_ms - q.q.front().arrival_ms) / 1000.0;
  }

  Resources nrts_reservation(GnbId j, double t_ms) {
    auto& g = gnbs_[j];
    const auto n = idx(Slice::kNrts);
    const double t_s = t_ms / 1000.0;
    if (solar_on_) {
      const auto action = solar_action(Slice::kNrts, current_forecast(t_s), sc_.energy.theta_w_m2);
      if (action == SolarAction::kDelayAllocation) {
        if (oldest_age_s(g.queues[n], t_ms) < sc_.energy.max_delay_s) {
          ++report_.nrts_delayed_epochs;
          return {};
        }
        ++report_.nrts_forced_epochs;
      }
    }
    double predicted = g.twin_ready ? g.twin_load_bps[n] : g.declared_bps[n];
    if (fl_ready_ && g.declared_bps[n] > 0.0 && g.nrts_series.size() >= kDemandLags) {
      const auto& s = g.nrts_series;
      std::vector<double> tail(s.end() - static_cast<std::ptrdiff_t>(kDemandLags), s.end());
      tail.push_back(0.0);
      const auto x = demand_sample(tail, kDemandLags, g.declared_bps[n], hour_at(t_s));
      predicted = std::max(0.0, global_.forward(x.x)[0]) * g.declared_bps[n];
    }
    const double rate = predicted * cfg_.headroom[n] + g.queues[n].bytes * 8.0 / sc_.nrts_drain_s;
    Resources want = rate_resources(rate);
    // Leave the latency-critical slices their headroom-inflated load.
    const auto& v = g.view;
    Resources room = v.capacity - v.load[idx(Slice::kLss)] * cfg_.headroom[idx(Slice::kLss)] -
                     v.load[idx(Slice::kRts)] * cfg_.headroom[idx(Slice::kRts)];
    for (std::size_t d = 0; d < kNumResources; ++d) room[d] = std::max(0.0, room[d]);
    return min(want, room);
  }

  double hour_at(double t_s) const { return sc_.solar.start_hour + t_s / 3600.0 * sc_.solar.time_scale; }

  void allocate_all(double t_ms, double epoch_len_steps) {
    const auto c0 = std::chrono::steady_clock::now();
    for (GnbId j = 0; j < gnbs_.size(); ++j) {
      auto& g = gnbs_[j];
      build_view(j);
      const auto& v = g.view;
      SliceResources a{};
      switch (sc_.policy) {
        case PolicyKind::kStatic: a = static_allocate(v.capacity, cfg_); break;
        case PolicyKind::kHrass: a = hrass_allocate(v.demand, v.capacity); break;
        case PolicyKind::kHybrid:
        case PolicyKind::kFedAvgHybrid: {
          HybridInputs in;
          g.nrts_alloc = nrts_reservation(j, t_ms);
          in.nrts_allocation = g.nrts_alloc;
          in.policy = policy_ ? &*policy_ : nullptr;
          a = hybrid_base(v, cfg_, in);
          for (Slice s : {Slice::kLss, Slice::kRts}) {
            const auto i = idx(s);
            if (g.declared_bps[i] <= 0.0 && v.backlog_bytes[i] <= 0.0) continue;
            if (enforce_latency(a[i], v.backlog_bytes[i], 0.0, cfg_.enforce_bound_s, cfg_.resources)) continue;
            SliceRequest r;
            r.gnb = j;
            a = fallback_allocation(r, s, v, a, cfg_).per_slice;
            ++report_.fallbacks;
          }
          break;
        }
      }
      if (!satisfies_capacity(a, v.capacity))
        throw InvariantViolation("capacity constraint violated at gNodeB " + std::to_string(j) + ", t=" +
                                 std::to_string(t_ms) + " ms");
      g.alloc = a;
      topo_.gnbs[j].alloc = a;
      for (std::size_t s = 0; s < kNumSlices; ++s)
        for (std::size_t d = 0; d < kNumResources; ++d)
          if (v.capacity[d] > 0.0) alloc_frac_sum_[s][d] += a[s][d] / v.capacity[d] * epoch_len_steps;
      alloc_frac_weight_ += epoch_len_steps;
    }
    report_.scheduler_wall_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
  }

  // -------------------------------------------------------------------------
  // Requests and security

  bool quarantined(DeviceId d, double t_s) const { return devices_[d].quarantined_until_s > t_s; }

  void set_declared(DeviceId d, double scale, bool active) {
    const auto& ds = topo_.devices[d];
    auto& g = gnbs_[ds.home_gnb];
    auto& dr = devices_[d];
    const double nominal = nominal_rate_bps(ds.cls, sc_.traffic);
    g.declared_bps[idx(ds.slice)] -= dr_active_[d] ? nominal * dr.demand_scale : 0.0;
    dr.demand_scale = scale;
    dr_active_[d] = active;
    g.declared_bps[idx(ds.slice)] += active ? nominal * dr.demand_scale : 0.0;
    g.declared_bps[idx(ds.slice)] = std::max(0.0, g.declared_bps[idx(ds.slice)]);
  }

  bool verify(const SliceRequest& r, const AuthRequest& ar) {
    const auto presenter = PufIdentity::from_seed(topo_.devices[ar.presenter].puf_seed);
    const auto claimed = PufIdentity::from_seed(topo_.devices[ar.claimed_id].puf_seed);
    const auto challenge = make_challenge(puf_rng_);
    if (!authenticate(presenter, claimed, challenge, puf_rng_)) return false;
    const auto& cd = topo_.devices[ar.claimed_id];
    const Resources limit = rate_resources(nominal_rate_bps(cd.cls, sc_.traffic) * cfg_.headroom[idx(cd.slice)] *
                                           sc_.plausibility_factor);
    return r.demand.fits_within(limit);
  }

  void process_requests(double t_s) {
    const double horizon = t_s + sc_.timestep_ms / 1000.0;
    while (!requests_.empty() && requests_.top().first < horizon) {
      const auto [when, d] = requests_.top();
      requests_.pop();
      requests_.push({when + sc_.reauth_interval_s, d});
      handle_request(d, when);
    }
  }

  void handle_request(DeviceId d, double t_s) {
    const auto& ds = topo_.devices[d];
    auto& dr = devices_[d];

    AuthRequest ar{d, d, 1.0, AttackType::kNone};
    inject_attacks(sc_.attacks, plan_, std::span<AuthRequest>(&ar, 1), t_s);
    dr.proc.set_load_multiplier(ar.demand_scale);
    if (quarantined(d, t_s)) return;

    SliceRequest r;
    r.device = d;
    r.claimed_id = ar.claimed_id;
    r.gnb = ds.home_gnb;
    r.metadata = detail::class_metadata(topo_.devices[ar.claimed_id].cls, sc_.traffic);
    r.arrival_s = t_s;
    const Slice s = classify_slice(r.metadata);
    r.demand = rate_resources(r.metadata.rate_bps * ar.demand_scale * cfg_.headroom[idx(s)]);

    auto& g = gnbs_[ds.home_gnb];
    if (!hybrid_) {
      ++report_.provenance[sc_.policy == PolicyKind::kStatic ? Provenance::kStaticBaseline : Provenance::kHrassBaseline];
      if (ar.demand_scale != dr.demand_scale) set_declared(d, ar.demand_scale, true);
      return;
    }

    bool passed = true;
    HybridInputs in;
    in.nrts_allocation = g.nrts_alloc;
    in.policy = policy_ ? &*policy_ : nullptr;
    in.verify = [&](const SliceRequest& req) {
      if (!sc_.flags.security) return true;
      passed = verify(req, ar);
      return passed;
    };
    const auto c0 = std::chrono::steady_clock::now();
    const Allocation a = schedule(r, g.view, cfg_, in);
    report_.scheduler_wall_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
    if (!satisfies_capacity(a.per_slice, g.view.capacity))
      throw InvariantViolation("capacity constraint violated by a scheduling decision at gNodeB " + std::to_string(r.gnb));
    ++report_.provenance[a.provenance];
    if (sc_.flags.security) security_log_.push_back({t_s, d, ar.attack, !passed});

    if (a.provenance == Provenance::kQuarantine) {
      if (a.request_grant != Resources{}) throw InvariantViolation("quarantined request received resources");
      dr.quarantined_until_s = t_s + sc_.quarantine_s;
      set_declared(d, 1.0, false);
      ++report_.quarantines;
      ++window_rejects_;
      ++g.quarantined;
      release_at_.push({dr.quarantined_until_s, d});
    } else if (ar.demand_scale != dr.demand_scale) {
      set_declared(d, ar.demand_scale, true);
    }
  }

  void release_quarantines(double t_s) {
    while (!release_at_.empty() && release_at_.top().first <= t_s) {
      const DeviceId d = release_at_.top().second;
      release_at_.pop();
      if (quarantined(d, t_s) || dr_active_[d]) continue;
      set_declared(d, devices_[d].demand_scale, true);
      --gnbs_[topo_.devices[d].home_gnb].quarantined;
    }
  }

  // -------------------------------------------------------------------------
  // Traffic and service

  void generate_traffic(double t0, double dt, double t_s) {
    if (!release_at_.empty()) release_quarantines(t_s);
    for (DeviceId d = 0; d < devices_.size(); ++d) {
      auto& dr = devices_[d];
      const auto& ds = topo_.devices[d];
      const bool drop = quarantined(d, t_s);
      auto& g = gnbs_[ds.home_gnb];
      const auto si = idx(ds.slice);
      auto& q = g.queues[si];
      dr.proc.emit(t0, dt, dr.rng, [&](const Packet& p) {
        report_.offered_bytes[si] += p.size_bytes;
        if (drop) {
          report_.dropped_bytes[si] += p.size_bytes;
          return;
        }
        report_.admitted_bytes[si] += p.size_bytes;
        g.window_bytes[si] += p.size_bytes;
        if (ds.slice == Slice::kNrts) g.fl_window_bytes += p.size_bytes;
        q.staged.push_back({p.created_at_ms, static_cast<double>(p.size_bytes)});
      });
    }
    for (auto& g : gnbs_) {
      for (auto& q : g.queues) {
        if (q.staged.empty()) continue;
        std::stable_sort(q.staged.begin(), q.staged.end(),
                         [](const detail::QueuedPacket& a, const detail::QueuedPacket& b) { return a.arrival_ms < b.arrival_ms; });
        for (const auto& p : q.staged) {
          q.q.push_back(p);
          q.bytes += p.remaining;
        }
        q.staged.clear();
      }
    }
  }

  void record_latency(std::size_t s, double latency_ms) {
    if (latency_ms < -1e-9 || latency_ms > sc_.duration_s * 1000.0 + 1e-6)
      throw InvariantViolation("latency sample outside [0, duration]");
    const double l = std::max(0.0, latency_ms) / 1000.0;
    reservoirs_[s].add(l);
    win_lat_sum_[s] += latency_ms;
    win_lat_max_[s] = std::max(win_lat_max_[s], latency_ms);
    ++win_lat_n_[s];
  }

  void serve_and_account(double t0, double t1, double t_s) {
    const double dt_s = (t1 - t0) / 1000.0;
    const double irr = solar_on_ ? trace_.at_minute(irradiance_minute(t_s)) : 0.0;
    for (GnbId j = 0; j < gnbs_.size(); ++j) {
      auto& g = gnbs_[j];
      std::array<double, kNumSlices> served{};
      for (std::size_t s = 0; s < kNumSlices; ++s) {
        auto& q = g.queues[s];
        const double rate_bpms = cfg_.resources.service_rate_bps(g.alloc[s]) / 8000.0;
        if (rate_bpms <= 0.0) continue;
        double clock = t0;
        while (!q.q.empty()) {
          auto& p = q.q.front();
          const double start = std::max(clock, p.arrival_ms);
          if (start >= t1) break;
          const double need = p.remaining / rate_bpms;
          if (start + need <= t1) {
            const double done = start + need;
            served[s] += p.remaining;
            q.bytes -= p.remaining;
            record_latency(s, done - p.arrival_ms);
            clock = done;
            q.q.pop_front();
          } else {
            const double part = (t1 - start) * rate_bpms;
            p.remaining -= part;
            served[s] += part;
            q.bytes -= part;
            break;
          }
        }
        if (q.q.empty()) q.bytes = 0.0;
        report_.served_bytes[s] += served[s];
      }

      const Resources& cap = topo_.gnbs[j].capacity;
      double total = 0.0;
      for (double b : served) total += b;
      const double rate = total * 8.0 / dt_s;
      const Resources used = rate_resources(rate);
      Utilization u;
      u.cpu = cap.cpu > 0.0 ? std::min(1.0, used.cpu / cap.cpu) : 0.0;
      u.bw = cap.bw > 0.0 ? std::min(1.0, used.bw / cap.bw) : 0.0;
      busy_sum_ += u.bw;
      ++busy_n_;
      const EnergyStep e = step_energy(topo_.gnbs[j].energy, u, dt_s, irr, sc_.energy);
      if (std::abs(e.grid_w + e.renewable_w - e.demand_w) > 1e-9 * std::max(1.0, e.demand_w))
        throw InvariantViolation("energy conservation violated at gNodeB " + std::to_string(j));
      win_grid_j_ += e.grid_w * dt_s;
      win_ren_j_ += e.renewable_w * dt_s;
      if (total > 0.0) {
        for (std::size_t s = 0; s < kNumSlices; ++s) {
          const double share = served[s] / total;
          report_.slice_grid_j[s] += e.grid_w * share * dt_s;
          report_.slice_renewable_j[s] += e.renewable_w * share * dt_s;
        }
      }
    }
    win_irr_sum_ += irr;
    ++win_irr_n_;
  }

  // -------------------------------------------------------------------------
  // Twins

  void sync_devices(SyncPriority p) {
    std::uint64_t count = 0;
    const DeviceClass cls = p == SyncPriority::kHigh ? DeviceClass::kUrllc
                            : p == SyncPriority::kNormal ? DeviceClass::kEmbb
                                                         : DeviceClass::kMmtc;
    for (const auto& d : topo_.devices)
      if (d.cls == cls) ++count;
    report_.twin_bytes += count * sync_cost(sc_.twin_dim, p, sc_.flags.compression);
    report_.twin_raw_bytes += count * sync_cost(sc_.twin_dim, p, false);
  }

  void sync_twins(double t_s) {
    const double interval_s = sc_.twin_interval_ms / 1000.0;
    for (GnbId j = 0; j < gnbs_.size(); ++j) {
      auto& g = gnbs_[j];
      std::vector<double> x(sc_.twin_dim, 0.0);
      auto put = [&](std::size_t k, double v) {
        if (k < x.size()) x[k] = v;
      };
      for (std::size_t s = 0; s < kNumSlices; ++s) {
        put(s, g.queues[s].bytes);
        put(3 + s, g.window_bytes[s] * 8.0 / interval_s);
      }
      put(6, topo_.gnbs[j].energy.grid_j);
      put(7, topo_.gnbs[j].energy.renewable_j);
      put(8, static_cast<double>(g.devices));
      put(9, static_cast<double>(g.quarantined));
      put(10, t_s);
      std::vector<double> view = x;
      if (sc_.flags.compression && twin_phi_.cols() == x.size() && !x.empty()) {
        const auto y = compress(x, twin_phi_);
        const auto rec = reconstruct(y, twin_phi_, recoverable_sparsity(x.size()));
        view = rec.x;
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
          num += (view[k] - x[k]) * (view[k] - x[k]);
          den += x[k] * x[k];
        }
        if (den > 0.0) report_.twin_recovery_error = std::max(report_.twin_recovery_error, std::sqrt(num / den));
      }
      report_.twin_bytes += sync_cost(sc_.twin_dim, SyncPriority::kNormal, sc_.flags.compression);
      report_.twin_raw_bytes += sync_cost(sc_.twin_dim, SyncPriority::kNormal, false);
      for (std::size_t s = 0; s < kNumSlices; ++s) g.twin_load_bps[s] = std::max(0.0, view.size() > 3 + s ? view[3 + s] : 0.0);
      g.twin_ready = view.size() > 5;
      g.window_bytes = {};
    }
  }

  // -------------------------------------------------------------------------
  // Federated NRTS prediction

  void close_fl_window(double t_s) {
    for (auto& g : gnbs_) {
      g.nrts_series.push_back(g.fl_window_bytes * 8.0 / sc_.fl_window_s);
      g.nrts_hours.push_back(hour_at(t_s));
      g.fl_window_bytes = 0.0;
      g.last_data_s = t_s;
      const std::size_t keep = sc_.fl_history + kDemandLags + 1;
      if (g.nrts_series.size() > keep) {
        g.nrts_series.erase(g.nrts_series.begin());
        g.nrts_hours.erase(g.nrts_hours.begin());
      }
    }
  }

  void fl_round(double t_s) {
    std::vector<FlClient> clients;
    Dataset eval;
    const auto n = idx(Slice::kNrts);
    for (GnbId j = 0; j < gnbs_.size(); ++j) {
      const auto& g = gnbs_[j];
      const double scale = g.declared_bps[n];
      if (scale <= 0.0 || g.nrts_series.size() < kDemandLags + 2) continue;
      FlClient c;
      c.id = j;
      c.last_data_s = g.last_data_s;
      c.byzantine = plan_.byzantine_client.size() > j && plan_.byzantine_client[j] && sc_.attacks.active_at(t_s) &&
                    sc_.attacks.byzantine;
      const std::size_t last = g.nrts_series.size() - 1;
      for (std::size_t t = kDemandLags; t < last; ++t)
        c.data.push_back(demand_sample(g.nrts_series, t, scale, g.nrts_hours[t]));
      eval.push_back(demand_sample(g.nrts_series, last, scale, g.nrts_hours[last]));
      clients.push_back(std::move(c));
    }
    if (clients.empty()) return;
    RoundOptions opt;
    opt.aggregator = sc_.policy == PolicyKind::kHybrid ? Aggregator::kKrum : Aggregator::kFedAvg;
    opt.participation = sc_.policy == PolicyKind::kHybrid ? Participation::kFreshest : Participation::kAll;
    opt.max_participants = sc_.fl_participants;
    opt.compress = channel_.phi != nullptr;
    opt.byzantine_scale = sc_.attacks.byzantine_scale;
    auto round = run_round(global_, clients, eval, opt, report_.fl_rounds.size() + 1, &channel_);
    fl_ready_ = fl_ready_ || !round.aborted;
    report_.fl_bytes += round.bytes_on_wire;
    if (sc_.flags.security && opt.aggregator == Aggregator::kKrum && !round.aborted) {
      for (const auto& c : clients) {
        if (std::find(round.participants.begin(), round.participants.end(), c.id) == round.participants.end()) continue;
        const bool flagged = std::find(round.flagged.begin(), round.flagged.end(), c.id) != round.flagged.end();
        security_log_.push_back({t_s, c.id, c.byzantine ? AttackType::kByzantine : AttackType::kNone, flagged});
        if (flagged) ++window_rejects_;
      }
    }
    report_.fl_rounds.push_back(std::move(round));
  }

  // -------------------------------------------------------------------------
  // Reporting

  void flush_timeline(double t_s) {
    TimelineRow r;
    r.t_s = t_s;
    const double w = sc_.timeline_interval_s;
    for (std::size_t s = 0; s < kNumSlices; ++s) {
      r.mean_latency_ms[s] = win_lat_n_[s] > 0 ? win_lat_sum_[s] / static_cast<double>(win_lat_n_[s]) : 0.0;
      r.max_latency_ms[s] = win_lat_max_[s];
    }
    r.grid_w = win_grid_j_ / w;
    r.renewable_w = win_ren_j_ / w;
    r.irradiance = win_irr_n_ > 0 ? win_irr_sum_ / static_cast<double>(win_irr_n_) : 0.0;
    r.forecast = solar_on_ ? current_forecast(t_s) : 0.0;
    double frac = 0.0;
    for (GnbId j = 0; j < gnbs_.size(); ++j)
      if (topo_.gnbs[j].capacity.bw > 0.0) frac += gnbs_[j].alloc[idx(Slice::kNrts)].bw / topo_.gnbs[j].capacity.bw;
    r.nrts_alloc_fraction = gnbs_.empty() ? 0.0 : frac / static_cast<double>(gnbs_.size());
    r.rejects = window_rejects_;
    for (const auto& g : gnbs_) r.quarantined += g.quarantined;
    report_.timeline.push_back(r);
    win_lat_sum_ = {};
    win_lat_max_ = {};
    win_lat_n_ = {};
    win_grid_j_ = win_ren_j_ = win_irr_sum_ = 0.0;
    win_irr_n_ = 0;
    window_rejects_ = 0;
  }

  void finish() {
    auto& r = report_;
    for (std::size_t s = 0; s < kNumSlices; ++s) {
      const auto& res = reservoirs_[s];
      const auto samples = res.samples();
      r.latency[s].count = res.seen();
      r.latency[s].p50 = percentile(samples, 50.0);
      r.latency[s].p99 = percentile(samples, 99.0);
      if (res.seen() > 0) r.latency[s].max = res.max();
      r.latency[s].compliance = res.exact_compliance();
      r.latency_samples[s].assign(samples.begin(), samples.end());
      if (r.latency[s].p50 && !(*r.latency[s].p50 <= *r.latency[s].p99 && *r.latency[s].p99 <= *r.latency[s].max))
        throw InvariantViolation("latency percentiles are not monotone");
      for (const auto& g : gnbs_) r.backlog_bytes[s] += g.queues[s].bytes;
      if (r.served_bytes[s] > r.admitted_bytes[s] * (1.0 + 1e-12) + 1e-6)
        throw InvariantViolation("served more bytes than were offered");
      if (std::abs(r.admitted_bytes[s] - r.served_bytes[s] - r.backlog_bytes[s]) > 1e-6 * std::max(1.0, r.admitted_bytes[s]))
        throw InvariantViolation("byte conservation violated");
      for (std::size_t d = 0; d < kNumResources; ++d)
        r.allocated_fraction[s][d] = alloc_frac_weight_ > 0.0 ? alloc_frac_sum_[s][d] / alloc_frac_weight_ : 0.0;
    }
    for (const auto& g : topo_.gnbs) {
      r.grid_j += g.energy.grid_j;
      r.renewable_j += g.energy.renewable_j;
    }
    r.busy_utilization = busy_n_ > 0 ? busy_sum_ / static_cast<double>(busy_n_) : 0.0;
    r.security = detection_metrics(security_log_);

    // Energy budgets default to the static split of the measured total.
    std::array<double, kNumSlices> actual{}, target = sc_.energy.targets_j;
    const double total = r.grid_j + r.renewable_j;
    for (std::size_t s = 0; s < kNumSlices; ++s) {
      actual[s] = r.slice_grid_j[s] + r.slice_renewable_j[s];
      if (target[s] <= 0.0) target[s] = total * cfg_.static_split[s];
    }
    bool targets_ok = true;
    for (double t : target) targets_ok = targets_ok && t > 0.0;
    r.dissatisfaction = targets_ok ? dissatisfaction(actual, target, sc_.energy.weights) : 0.0;

    // E normalized by full-load draw, L by ten times each slice's bound.
    const double e_ref = (sc_.energy.beta_c_w + sc_.energy.beta_b_w) * static_cast<double>(topo_.gnbs.size()) * sc_.duration_s;
    const double e_norm = e_ref > 0.0 ? std::min(1.0, total / e_ref) : 0.0;
    double l_norm = 0.0;
    for (std::size_t s = 0; s < kNumSlices; ++s)
      l_norm += std::min(1.0, r.latency[s].p99.value_or(0.0) / (10.0 * cfg_.latency_bound_s[s])) / kNumSlices;
    r.objective = objective(e_norm, l_norm, cfg_.lambda);
  }

  Scenario sc_;
  std::uint64_t seed_;
  Topology topo_;
  SchedulerConfig cfg_;
  bool hybrid_ = false;
  MetricsReport report_;
  AttackPlan plan_;

  std::vector<detail::GnbRuntime> gnbs_;
  std::vector<detail::DeviceRuntime> devices_;
  std::vector<bool> dr_active_;
  std::vector<Reservoir> reservoirs_;

  using TimedDevice = std::pair<double, DeviceId>;
  std::priority_queue<TimedDevice, std::vector<TimedDevice>, std::greater<>> requests_;
  std::priority_queue<TimedDevice, std::vector<TimedDevice>, std::greater<>> release_at_;
  Rng puf_rng_;
  std::vector<VerificationRecord> security_log_;

  SensingMatrix twin_phi_;
  SensingMatrix fl_phi_;
  CompressedChannel channel_;
  Mlp global_;
  bool fl_ready_ = false;
  std::optional<PolicyNet> policy_;

  bool solar_on_ = false;
  SolarTrace trace_;
  std::size_t history_minutes_ = 0;
  std::int64_t forecast_block_ = -1;
  std::size_t forecast_base_ = 0;
  std::vector<double> forecast_;

  std::array<std::array<double, kNumResources>, kNumSlices> alloc_frac_sum_{};
  double alloc_frac_weight_ = 0.0;
  double busy_sum_ = 0.0;
  std::size_t busy_n_ = 0;

  std::array<double, kNumSlices> win_lat_sum_{};
  std::array<double, kNumSlices> win_lat_max_{};
  std::array<std::size_t, kNumSlices> win_lat_n_{};
  double win_grid_j_ = 0.0, win_ren_j_ = 0.0, win_irr_sum_ = 0.0;
  std::size_t win_irr_n_ = 0;
  std::size_t window_rejects_ = 0;
};

inline MetricsReport run(const Scenario& sc, std::uint64_t seed) { return Simulation(sc, seed).run(); }

// ---------------------------------------------------------------------------
// Replication and sweeps

struct AggregatedMetric {
  std::string metric;
  std::string slice;
  Summary summary;
};

struct ReplicatedReport {
  std::vector<MetricsReport> runs;
  std::vector<AggregatedMetric> metrics;

  const AggregatedMetric* find(std::string_view metric, std::string_view slice) const {
    for (const auto& m : metrics)
      if (m.metric == metric && m.slice == slice) return &m;
    return nullptr;
  }
};

/// Aggregates each scalar metric across runs; metrics missing from a run are skipped for it.
inline std::vector<AggregatedMetric> aggregate(const std::vector<MetricsReport>& runs) {
  std::vector<AggregatedMetric> out;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : runs) {
    for (const auto& row : r.rows()) {
      auto key = std::make_pair(row.metric, row.slice);
      auto it = values.find(key);
      if (it == values.end()) {
        order.push_back(key);
        it = values.emplace(key, std::vector<double>{}).first;
      }
      it->second.push_back(row.value);
    }
  }
  for (const auto& key : order) out.push_back({key.first, key.second, summarize(values[key])});
  return out;
}

/// Runs seeds master_seed + i for i < replications.
inline ReplicatedReport replicate(const Scenario& sc) {
  sc.validate();
  ReplicatedReport rep;
  for (std::size_t i = 0; i < sc.replications; ++i) rep.runs.push_back(run(sc, sc.master_seed + i));
  rep.metrics = aggregate(rep.runs);
  return rep;
}

struct SweepRow {
  double density = 0.0;
  std::uint64_t n_devices = 0;
  Summary p99_lss_ms;
  Summary compliance_lss;
};

/// Densities in devices per km^2 over the base scenario's area.
inline std::vector<SweepRow> density_sweep(const Scenario& base, std::span<const double> densities) {
  for (std::size_t i = 1; i < densities.size(); ++i)
    if (densities[i] < densities[i - 1]) throw ConfigError("densities: must be sorted ascending");
  std::vector<SweepRow> rows;
  for (double d : densities) {
    if (!(d >= 0.0)) throw ConfigError("densities: must be nonnegative");
    Scenario sc = base;
    sc.network.n_devices = static_cast<std::uint64_t>(std::llround(d * base.network.area_km2));
    const auto rep = replicate(sc);
    SweepRow row;
    row.density = d;
    row.n_devices = sc.network.n_devices;
    if (const auto* m = rep.find("latency_p99_ms", "LSS")) row.p99_lss_ms = m->summary;
    if (const auto* m = rep.find("sla_compliance", "LSS")) row.compliance_lss = m->summary;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace edgetwin
