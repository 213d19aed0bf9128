#pragma once

// Slice scheduling policies: the hybrid scheduler (centralized allocation with
// latency enforcement and fallback for LSS/RTS, federated prediction for NRTS,
// quarantine on failed verification) and the static and priority-greedy
// baselines. All policies produce per-gNodeB, per-slice resource triples that
// respect the gNodeB's capacity in every dimension.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgetwin/mlp.hpp"
#include "edgetwin/rng.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

using SliceResources = std::array<Resources, kNumSlices>;

enum class Provenance : std::uint8_t {
  kCentralizedAi,
  kFederatedModel,
  kFallback,
  kQuarantine,
  kStaticBaseline,
  kHrassBaseline,
};

inline constexpr std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kCentralizedAi: return "CentralizedAI";
    case Provenance::kFederatedModel: return "FederatedModel";
    case Provenance::kFallback: return "Fallback";
    case Provenance::kQuarantine: return "Quarantine";
    case Provenance::kStaticBaseline: return "StaticBaseline";
    case Provenance::kHrassBaseline: return "HrassBaseline";
  }
  return "?";
}

enum class PolicyKind : std::uint8_t { kHybrid, kStatic, kHrass, kFedAvgHybrid };

inline constexpr std::array<std::string_view, 4> kPolicyNames{"hybrid", "static", "hrass", "fedavg-hybrid"};

inline constexpr std::string_view to_string(PolicyKind k) { return kPolicyNames[static_cast<std::size_t>(k)]; }

inline std::optional<PolicyKind> parse_policy(std::string_view name) {
  for (std::size_t i = 0; i < kPolicyNames.size(); ++i)
    if (kPolicyNames[i] == name) return static_cast<PolicyKind>(i);
  return std::nullopt;
}

inline Resources sum(const SliceResources& a) {
  Resources t{};
  for (const auto& r : a) t += r;
  return t;
}

/// True when sum_s alloc[s] <= capacity in each dimension and every entry is >= 0.
inline bool satisfies_capacity(const SliceResources& alloc, const Resources& capacity, double rel_slack = 1e-9) {
  for (const auto& a : alloc)
    if (!a.nonnegative()) return false;
  const Resources t = sum(alloc);
  for (std::size_t d = 0; d < kNumResources; ++d)
    if (t[d] > capacity[d] * (1.0 + rel_slack) + 1e-12) return false;
  return true;
}

/// Maps offered bit rates to resource demands.
struct ResourceModel {
  double spectral_efficiency = 5.0;  ///< bit/s per Hz
  double cpu_cores_per_gbps = 4.0;
  double ram_gb_per_gbps = 8.0;

  Resources for_rate(double bps) const {
    const double gbps = bps / 1e9;
    return {gbps * cpu_cores_per_gbps, gbps * ram_gb_per_gbps, bps / (spectral_efficiency * 1e6)};
  }
  double service_rate_bps(const Resources& alloc) const { return alloc.bw * 1e6 * spectral_efficiency; }
};

struct SchedulerConfig {
  std::array<double, kNumSlices> weights{3.0, 2.0, 1.0};
  std::array<double, kNumSlices> static_split{0.40, 0.35, 0.25};
  /// Declared demand = offered rate x headroom.
  std::array<double, kNumSlices> headroom{2.0, 1.25, 1.1};
  std::array<double, kNumSlices> latency_bound_s{1e-3, 10e-3, 100e-3};
  double enforce_bound_s = 1e-3;
  double fallback_factor = 2.0;
  /// Minimum interval between scheduling decisions per slice (tau_min), seconds.
  std::array<double, kNumSlices> tau_min_s{0.0, 0.0, 0.0};
  double lambda = 0.5;
  ResourceModel resources{};

  void validate() const {
    double split = 0.0;
    for (std::size_t s = 0; s < kNumSlices; ++s) {
      if (!(weights[s] >= 0.0)) throw ConfigError("scheduler.weights: must be nonnegative");
      if (!(static_split[s] >= 0.0)) throw ConfigError("scheduler.static_split: must be nonnegative");
      if (!(headroom[s] >= 1.0)) throw ConfigError("scheduler.headroom: must be >= 1");
      if (!(latency_bound_s[s] > 0.0)) throw ConfigError("scheduler.latency_bound_s: must be positive");
      if (!(tau_min_s[s] >= 0.0)) throw ConfigError("scheduler.tau_min_s: must be nonnegative");
      split += static_split[s];
    }
    if (split > 1.0 + 1e-9) throw ConfigError("scheduler.static_split: fractions must sum to <= 1");
    if (!(enforce_bound_s > 0.0)) throw ConfigError("scheduler.enforce_bound_s: must be positive");
    if (!(fallback_factor >= 1.0)) throw ConfigError("scheduler.fallback_factor: must be >= 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("scheduler.lambda: must lie in [0, 1]");
    if (!(resources.spectral_efficiency > 0.0)) throw ConfigError("scheduler: spectral efficiency must be positive");
  }
};

// ---------------------------------------------------------------------------
// Requests and classification

struct SliceMetadata {
  double packet_bytes = 0.0;
  double mean_interarrival_ms = 0.0;
  double rate_bps = 0.0;
  std::optional<DeviceClass> declared_class;
};

struct SliceRequest {
  DeviceId device = 0;
  DeviceId claimed_id = 0;
  GnbId gnb = 0;
  SliceMetadata metadata{};
  Resources demand{};
  double arrival_s = 0.0;
};

/// Shallow decision tree over traffic metadata.
inline Slice classify_slice(const SliceMetadata& m) {
  if (m.packet_bytes <= 64.0 && std::abs(m.mean_interarrival_ms - 1.0) <= 0.15) return Slice::kLss;
  if (m.rate_bps >= 1e6) return Slice::kRts;
  return Slice::kNrts;
}

// ---------------------------------------------------------------------------
// Network state seen by the scheduler for one gNodeB

struct GnbView {
  GnbId gnb = 0;
  Resources capacity{};
  /// Declared (headroom-inflated) demand per slice.
  SliceResources demand{};
  /// Offered load per slice as measured through the CyberTwin view (no headroom).
  SliceResources load{};
  std::array<double, kNumSlices> backlog_bytes{};
  SliceResources current{};
};

struct Allocation {
  GnbId gnb = 0;
  SliceResources per_slice{};
  Provenance provenance = Provenance::kCentralizedAi;
  Slice slice = Slice::kNrts;
  /// Resources attributable to the request itself (zero under quarantine).
  Resources request_grant{};
  bool sla_violation = false;
};

// ---------------------------------------------------------------------------
// Building blocks

/// Weighted proportional share of the full capacity: per dimension, slice s
/// receives capacity * w_s d_s / sum_k w_k d_k. Zero demand gets zero.
inline SliceResources weighted_fair(const SliceResources& demand, const Resources& capacity,
                                    const std::array<double, kNumSlices>& weights) {
  SliceResources out{};
  for (std::size_t d = 0; d < kNumResources; ++d) {
    double total = 0.0;
    for (std::size_t s = 0; s < kNumSlices; ++s) total += weights[s] * std::max(0.0, demand[s][d]);
    if (total <= 0.0) continue;
    for (std::size_t s = 0; s < kNumSlices; ++s)
      out[s][d] = capacity[d] * weights[s] * std::max(0.0, demand[s][d]) / total;
  }
  return out;
}

/// Heuristic centralized allocation over the measured slice loads.
inline SliceResources centralized_allocate(const GnbView& view, const SchedulerConfig& cfg) {
  return weighted_fair(view.load, view.capacity, cfg.weights);
}

/// Predicted queueing delay at the slice under `alloc` is
/// (backlog + request bytes) / service rate; true iff it is <= bound.
inline bool enforce_latency(const Resources& slice_alloc, double backlog_bytes, double request_bytes, double bound_s,
                            const ResourceModel& rm) {
  const double rate = rm.service_rate_bps(slice_alloc);
  const double bits = 8.0 * (std::max(0.0, backlog_bytes) + std::max(0.0, request_bytes));
  if (rate <= 0.0) return bits <= 0.0;
  return bits / rate <= bound_s;
}

/// Raises slice s toward fallback_factor x demand using free capacity first,
/// then preempting NRTS, then RTS (never LSS, never the slice itself).
inline Allocation fallback_allocation(const SliceRequest& r, Slice s, const GnbView& view, const SliceResources& base,
                                      const SchedulerConfig& cfg) {
  Allocation out;
  out.gnb = view.gnb;
  out.slice = s;
  out.provenance = Provenance::kFallback;
  out.per_slice = base;
  const std::size_t si = idx(s);
  const Resources slice_demand = view.demand[si];
  Resources need{};
  for (std::size_t d = 0; d < kNumResources; ++d)
    need[d] = cfg.fallback_factor * std::max(r.demand[d], slice_demand[d]);

  const Resources used = sum(base);
  bool granted_any = false;
  for (std::size_t d = 0; d < kNumResources; ++d) {
    double have = out.per_slice[si][d];
    if (have >= need[d]) {
      granted_any = granted_any || have > 0.0;
      continue;
    }
    double missing = need[d] - have;
    const double free = std::max(0.0, view.capacity[d] - used[d]);
    const double take_free = std::min(free, missing);
    have += take_free;
    missing -= take_free;
    for (Slice victim : {Slice::kNrts, Slice::kRts}) {
      if (missing <= 0.0 || victim == s) continue;
      if (s == Slice::kNrts) break;
      if (s == Slice::kRts && victim == Slice::kRts) continue;
      double& v = out.per_slice[idx(victim)][d];
      const double take = std::min(v, missing);
      v -= take;
      have += take;
      missing -= take;
    }
    out.per_slice[si][d] = have;
    granted_any = granted_any || have > 0.0;
  }
  out.sla_violation = !granted_any;
  return out;
}

/// Fixed 40/35/25 partition of every resource regardless of load.
inline SliceResources static_allocate(const Resources& capacity, const SchedulerConfig& cfg = {}) {
  SliceResources out{};
  for (std::size_t s = 0; s < kNumSlices; ++s) out[s] = capacity * cfg.static_split[s];
  return out;
}

/// Priority-greedy surrogate for the MILP baseline: LSS, then RTS, then NRTS
/// each take min(demand, remaining) per dimension. No energy term.
inline SliceResources hrass_allocate(const SliceResources& demand, const Resources& capacity) {
  SliceResources out{};
  Resources remaining = capacity;
  for (Slice s : kAllSlices) {
    for (std::size_t d = 0; d < kNumResources; ++d) {
      const double g = std::clamp(demand[idx(s)][d], 0.0, std::max(0.0, remaining[d]));
      out[idx(s)][d] = g;
      remaining[d] -= g;
    }
  }
  return out;
}

/// lambda * E + (1 - lambda) * L on normalized inputs.
inline double objective(double e_total, double l_total, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("objective: lambda must lie in [0, 1]");
  return lambda * e_total + (1.0 - lambda) * l_total;
}

// ---------------------------------------------------------------------------
// Learned centralized policy

/// Feed-forward policy: 9 inputs (per-slice load / capacity for each
/// resource), one softmax group of 4 per resource (LSS, RTS, NRTS, idle).
class PolicyNet {
 public:
  static constexpr std::size_t kInputs = kNumSlices * kNumResources;
  static constexpr std::size_t kGroup = kNumSlices + 1;

  explicit PolicyNet(std::size_t hidden = 128) : net_(kInputs, hidden, kGroup * kNumResources, OutputHead::kSoftmaxGroups, kGroup) {}

  static std::vector<double> features(const SliceResources& load, const Resources& capacity) {
    std::vector<double> x(kInputs, 0.0);
    for (std::size_t s = 0; s < kNumSlices; ++s)
      for (std::size_t d = 0; d < kNumResources; ++d)
        x[s * kNumResources + d] = capacity[d] > 0.0 ? load[s][d] / capacity[d] : 0.0;
    return x;
  }

  /// Target fractions from the heuristic: 4 per resource, idle takes the rest.
  static std::vector<double> heuristic_target(const SliceResources& load, const Resources& capacity,
                                              const SchedulerConfig& cfg) {
    const auto a = weighted_fair(load, capacity, cfg.weights);
    std::vector<double> y(kGroup * kNumResources, 0.0);
    for (std::size_t d = 0; d < kNumResources; ++d) {
      double used = 0.0;
      for (std::size_t s = 0; s < kNumSlices; ++s) {
        const double f = capacity[d] > 0.0 ? a[s][d] / capacity[d] : 0.0;
        y[d * kGroup + s] = f;
        used += f;
      }
      y[d * kGroup + kNumSlices] = std::max(0.0, 1.0 - used);
    }
    return y;
  }

  SliceResources allocate(const SliceResources& load, const Resources& capacity) const {
    const auto out = net_.forward(features(load, capacity));
    SliceResources a{};
    for (std::size_t d = 0; d < kNumResources; ++d)
      for (std::size_t s = 0; s < kNumSlices; ++s) a[s][d] = out[d * kGroup + s] * capacity[d];
    return a;
  }

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
};

/// Random slice loads for supervised training of the policy network. Each
/// dimension scales with one per-slice intensity so the demand profile matches
/// the rate-driven loads the engine produces.
inline Dataset policy_training_set(std::size_t n, const Resources& capacity, const SchedulerConfig& cfg, Rng& rng) {
  Dataset data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SliceResources load{};
    for (std::size_t s = 0; s < kNumSlices; ++s) {
      const double active = rng.uniform() < 0.85 ? 1.0 : 0.0;
      const double level = active * rng.uniform() * 1.5;
      for (std::size_t d = 0; d < kNumResources; ++d) load[s][d] = level * capacity[d] / kNumSlices;
    }
    data.push_back({PolicyNet::features(load, capacity), PolicyNet::heuristic_target(load, capacity, cfg)});
  }
  return data;
}

/// Mean absolute difference between network and heuristic fractions.
inline double policy_error(const PolicyNet& p, const Dataset& data) {
  double err = 0.0;
  std::size_t cnt = 0;
  for (const auto& s : data) {
    const auto out = p.net().forward(s.x);
    for (std::size_t d = 0; d < kNumResources; ++d)
      for (std::size_t k = 0; k < kNumSlices; ++k) {
        err += std::abs(out[d * PolicyNet::kGroup + k] - s.y[d * PolicyNet::kGroup + k]);
        ++cnt;
      }
  }
  return cnt == 0 ? 0.0 : err / static_cast<double>(cnt);
}

struct PolicyTraining {
  PolicyNet policy{};
  double holdout_error = 1.0;
  bool enabled = false;
};

/// Trains the 128-unit policy on heuristic decisions and enables it only if
/// its held-out error is within `max_error` (5% by default).
inline PolicyTraining train_policy_net(const Resources& capacity, const SchedulerConfig& cfg, std::uint64_t seed,
                                       std::size_t samples = 2000, std::size_t epochs = 60, double max_error = 0.05) {
  Rng rng = Rng::stream(seed, StreamKey::kPolicyNet);
  PolicyTraining t;
  t.policy.net().init(rng);
  const auto train = policy_training_set(samples, capacity, cfg, rng);
  const auto hold = policy_training_set(samples / 4 + 1, capacity, cfg, rng);
  t.policy.net().fit_adam(train, epochs, 3e-3, 32, rng);
  t.holdout_error = policy_error(t.policy, hold);
  t.enabled = t.holdout_error <= max_error;
  return t;
}

// ---------------------------------------------------------------------------
// The hybrid scheduler

/// Per-call inputs of the hybrid path that come from other subsystems.
struct HybridInputs {
  /// NRTS reservation from the federated demand model (already solar-gated).
  Resources nrts_allocation{};
  /// Learned centralized policy, when enabled.
  const PolicyNet* policy = nullptr;
  /// SecurityAgent.verify(r.id).
  std::function<bool(const SliceRequest&)> verify;
};

/// LSS/RTS share of the capacity left after the NRTS reservation.
inline SliceResources hybrid_base(const GnbView& view, const SchedulerConfig& cfg, const HybridInputs& in) {
  const Resources nrts = min(in.nrts_allocation, view.capacity);
  GnbView rest = view;
  rest.capacity = view.capacity - nrts;
  rest.load[idx(Slice::kNrts)] = {};
  SliceResources a = in.policy != nullptr ? in.policy->allocate(rest.load, rest.capacity) : centralized_allocate(rest, cfg);
  a[idx(Slice::kNrts)] = nrts;
  return a;
}

/// Applies latency enforcement and fallback to one latency-critical slice.
inline Allocation enforce_or_fallback(const SliceRequest& r, Slice s, const GnbView& view, const SliceResources& base,
                                      const SchedulerConfig& cfg) {
  const bool ok = enforce_latency(base[idx(s)], view.backlog_bytes[idx(s)], r.metadata.packet_bytes, cfg.enforce_bound_s,
                                  cfg.resources);
  if (ok) {
    Allocation a;
    a.gnb = view.gnb;
    a.per_slice = base;
    a.slice = s;
    a.provenance = Provenance::kCentralizedAi;
    return a;
  }
  return fallback_allocation(r, s, view, base, cfg);
}

/// One pass of the hybrid scheduler for request r at its home gNodeB.
inline Allocation schedule(const SliceRequest& r, const GnbView& view, const SchedulerConfig& cfg,
                           const HybridInputs& in) {
  const Slice s = classify_slice(r.metadata);
  const SliceResources base = hybrid_base(view, cfg, in);
  Allocation a;
  if (s == Slice::kLss || s == Slice::kRts) {
    a = enforce_or_fallback(r, s, view, base, cfg);
  } else {
    a.gnb = view.gnb;
    a.per_slice = base;
    a.slice = s;
    a.provenance = Provenance::kFederatedModel;
  }
  const Resources slice_demand = view.demand[idx(s)];
  for (std::size_t d = 0; d < kNumResources; ++d) {
    const double share = slice_demand[d] > 0.0 ? std::min(1.0, r.demand[d] / slice_demand[d]) : 0.0;
    a.request_grant[d] = a.per_slice[idx(s)][d] * share;
  }
  if (in.verify && !in.verify(r)) {
    a.provenance = Provenance::kQuarantine;
    a.per_slice = view.current;
    a.request_grant = {};
  }
  return a;
}

}  // namespace edgetwin
