#pragma once

// PUF challenge-response authentication, attack injection and detection accounting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "edgetwin/rng.hpp"
#include "edgetwin/topology.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

inline constexpr std::size_t kPufLength = 256;
inline constexpr double kAuthThreshold = 0.8;

using PufVector = std::array<double, kPufLength>;

/// Device secret: 256 i.i.d. standard normal weights.
struct PufIdentity {
  PufVector secret{};
  double noise_sigma = 0.05;

  static PufIdentity from_seed(std::uint64_t seed, double noise_sigma = 0.05) {
    PufIdentity id;
    id.noise_sigma = noise_sigma;
    Rng rng = Rng::stream(seed, StreamKey::kPuf);
    for (auto& w : id.secret) w = rng.normal();
    return id;
  }
};

/// A +/-1 challenge vector.
inline PufVector make_challenge(Rng& rng) {
  PufVector c{};
  for (auto& v : c) v = (rng() >> 63) != 0u ? 1.0 : -1.0;
  return c;
}

/// tanh(secret * challenge) elementwise, plus Gaussian(0, noise_sigma) noise.
inline PufVector puf_response(const PufIdentity& id, std::span<const double> challenge, Rng& rng) {
  if (challenge.size() != kPufLength) throw ContractError("puf_response: challenge must have 256 entries");
  PufVector r{};
  for (std::size_t i = 0; i < kPufLength; ++i) {
    r[i] = std::tanh(id.secret[i] * challenge[i]);
    if (id.noise_sigma > 0.0) r[i] += id.noise_sigma * rng.normal();
  }
  return r;
}

/// Noise-free response held by the verifier from enrollment.
inline PufVector enrolled_response(const PufIdentity& id, std::span<const double> challenge) {
  if (challenge.size() != kPufLength) throw ContractError("enrolled_response: challenge must have 256 entries");
  PufVector r{};
  for (std::size_t i = 0; i < kPufLength; ++i) r[i] = std::tanh(id.secret[i] * challenge[i]);
  return r;
}

/// Pearson correlation; empty when either side has zero variance.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ContractError("pearson: length mismatch");
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

/// Accepts iff the correlation is strictly above the threshold.
inline bool authenticate_response(std::span<const double> response, std::span<const double> enrolled,
                                  double threshold = kAuthThreshold) {
  const auto c = pearson(response, enrolled);
  return c.has_value() && *c > threshold;
}

/// Challenge the presenting device (which holds `presenter`) for the claimed
/// identity `claimed`; only the genuine holder reproduces the enrolled response.
inline bool authenticate(const PufIdentity& presenter, const PufIdentity& claimed, std::span<const double> challenge,
                         Rng& rng, double threshold = kAuthThreshold) {
  const auto fresh = puf_response(presenter, challenge, rng);
  const auto enrolled = enrolled_response(claimed, challenge);
  return authenticate_response(fresh, enrolled, threshold);
}

// ---------------------------------------------------------------------------
// Attacks

enum class AttackType : std::uint8_t { kNone = 0, kByzantine = 1, kImpersonation = 2, kResourceExhaustion = 3 };

inline constexpr std::array<AttackType, 3> kAttackTypes{AttackType::kByzantine, AttackType::kImpersonation,
                                                        AttackType::kResourceExhaustion};

inline constexpr std::string_view to_string(AttackType a) {
  switch (a) {
    case AttackType::kNone: return "none";
    case AttackType::kByzantine: return "byzantine";
    case AttackType::kImpersonation: return "impersonation";
    case AttackType::kResourceExhaustion: return "resource_exhaustion";
  }
  return "?";
}

struct AttackScenario {
  double adversary_fraction = 0.0;
  bool byzantine = false;
  bool impersonation = false;
  bool resource_exhaustion = false;
  double start_s = 0.0;
  double stop_s = 1e18;
  /// Slice whose demands exhaustion attackers inflate.
  Slice exhaustion_slice = Slice::kRts;
  double exhaustion_factor = 20.0;
  double byzantine_scale = 10.0;

  bool any() const { return adversary_fraction > 0.0 && (byzantine || impersonation || resource_exhaustion); }
  bool active_at(double t_s) const { return t_s >= start_s && t_s < stop_s; }

  void validate() const {
    if (!(adversary_fraction >= 0.0 && adversary_fraction <= 0.3))
      throw ConfigError("attacks.adversary_fraction: must lie in [0, 0.3]");
    if (stop_s < start_s) throw ConfigError("attacks: stop_s must be >= start_s");
    if (!(exhaustion_factor >= 1.0)) throw ConfigError("attacks.exhaustion_factor: must be >= 1");
  }
};

struct AttackPlan {
  /// Per device: which attack it runs (kNone for honest devices).
  std::vector<AttackType> device_attack;
  /// Per impersonating device: the victim id it claims.
  std::map<DeviceId, DeviceId> victim;
  /// Per FL client: true when the client sends corrupted updates.
  std::vector<bool> byzantine_client;
};

/// Picks floor(fraction * n) devices (and FL clients for Byzantine) and assigns
/// attacks round-robin over the enabled types. Marks them dishonest.
inline AttackPlan plan_attacks(const AttackScenario& sc, std::vector<DeviceState>& devices, std::size_t n_fl_clients,
                               std::uint64_t seed) {
  sc.validate();
  AttackPlan plan;
  plan.device_attack.assign(devices.size(), AttackType::kNone);
  plan.byzantine_client.assign(n_fl_clients, false);
  if (!sc.any()) return plan;
  Rng rng = Rng::stream(seed, StreamKey::kAttack);

  std::vector<AttackType> device_types;
  if (sc.impersonation) device_types.push_back(AttackType::kImpersonation);
  if (sc.resource_exhaustion) device_types.push_back(AttackType::kResourceExhaustion);

  if (!device_types.empty() && !devices.empty()) {
    const auto n_bad = static_cast<std::size_t>(std::floor(sc.adversary_fraction * static_cast<double>(devices.size())));
    std::vector<DeviceId> order(devices.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<DeviceId>(i);
    for (std::size_t i = 0; i < n_bad; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
    for (std::size_t k = 0; k < n_bad; ++k) {
      const DeviceId d = order[k];
      const AttackType type = device_types[k % device_types.size()];
      plan.device_attack[d] = type;
      devices[d].honest = false;
      if (type == AttackType::kImpersonation) {
        // Victim: any other device (possibly another attacker; the claim still fails).
        DeviceId v = d;
        if (devices.size() > 1) {
          while (v == d) v = static_cast<DeviceId>(rng.below(devices.size()));
        }
        plan.victim[d] = v;
      }
    }
  }
  if (sc.byzantine && n_fl_clients > 0) {
    const auto n_bad = static_cast<std::size_t>(std::floor(sc.adversary_fraction * static_cast<double>(n_fl_clients)));
    std::vector<std::size_t> order(n_fl_clients);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < n_bad; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
    for (std::size_t k = 0; k < n_bad; ++k) plan.byzantine_client[order[k]] = true;
  }
  return plan;
}

/// A scheduling/authentication request as seen by the security layer.
struct AuthRequest {
  DeviceId presenter = 0;  ///< physical device sending the request
  DeviceId claimed_id = 0;  ///< identity it claims
  double demand_scale = 1.0;
  AttackType attack = AttackType::kNone;
};

/// Rewrites the requests of compromised devices active at t_s: impersonators
/// claim their victim's id, exhaustion attackers inflate demand. Returns the
/// attack events produced.
inline std::vector<AttackType> inject_attacks(const AttackScenario& sc, const AttackPlan& plan,
                                              std::span<AuthRequest> requests, double t_s) {
  std::vector<AttackType> events;
  if (!sc.any() || !sc.active_at(t_s)) return events;
  for (auto& r : requests) {
    if (r.presenter >= plan.device_attack.size()) continue;
    const AttackType a = plan.device_attack[r.presenter];
    if (a == AttackType::kImpersonation) {
      r.claimed_id = plan.victim.at(r.presenter);
      r.attack = a;
      events.push_back(a);
    } else if (a == AttackType::kResourceExhaustion) {
      r.demand_scale = sc.exhaustion_factor;
      r.attack = a;
      events.push_back(a);
    }
  }
  return events;
}

/// Sign-flip and scale a Byzantine client's step away from the global model:
/// params <- global - scale * (params - global).
inline void byzantine_corrupt(std::span<double> params, std::span<const double> global, double scale = 10.0) {
  if (params.size() != global.size()) throw ContractError("byzantine_corrupt: length mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) params[k] = global[k] - scale * (params[k] - global[k]);
}

// ---------------------------------------------------------------------------
// Detection accounting

struct VerificationRecord {
  double t_s = 0.0;
  DeviceId device = 0;  ///< physical device (or FL client id for Byzantine records)
  AttackType attack = AttackType::kNone;
  bool rejected = false;
};

struct DetectionMetrics {
  double accuracy = 1.0;
  std::size_t decisions = 0;
  std::size_t true_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  /// Detection rate per attack type; empty optional when no events of that type.
  std::map<AttackType, std::optional<double>> per_attack_rate;
  std::map<AttackType, std::size_t> per_attack_events;
  /// Mean of (first rejection - first malicious event) over detected attackers, seconds.
  std::optional<double> mean_response_time_s;
};

inline DetectionMetrics detection_metrics(std::span<const VerificationRecord> log) {
  DetectionMetrics m;
  std::map<AttackType, std::size_t> hits;
  std::map<std::pair<int, DeviceId>, std::pair<double, std::optional<double>>> first_seen;  // (start, detect)
  for (const auto& r : log) {
    ++m.decisions;
    const bool attack = r.attack != AttackType::kNone;
    if (attack && r.rejected) ++m.true_positive;
    if (attack && !r.rejected) ++m.false_negative;
    if (!attack && !r.rejected) ++m.true_negative;
    if (!attack && r.rejected) ++m.false_positive;
    if (attack) {
      ++m.per_attack_events[r.attack];
      if (r.rejected) ++hits[r.attack];
      const auto key = std::make_pair(static_cast<int>(r.attack), r.device);
      auto it = first_seen.find(key);
      if (it == first_seen.end()) it = first_seen.emplace(key, std::make_pair(r.t_s, std::optional<double>{})).first;
      if (r.rejected && !it->second.second) it->second.second = r.t_s;
    }
  }
  m.accuracy = m.decisions == 0 ? 1.0
                                : static_cast<double>(m.true_positive + m.true_negative) / static_cast<double>(m.decisions);
  for (AttackType a : kAttackTypes) {
    const auto n = m.per_attack_events[a];
    m.per_attack_rate[a] = n == 0 ? std::optional<double>{} : static_cast<double>(hits[a]) / static_cast<double>(n);
  }
  double sum = 0.0;
  std::size_t cnt = 0;
  for (const auto& [key, span] : first_seen) {
    if (span.second) {
      sum += *span.second - span.first;
      ++cnt;
    }
  }
  if (cnt > 0) m.mean_response_time_s = sum / static_cast<double>(cnt);
  return m;
}

}  // namespace edgetwin
