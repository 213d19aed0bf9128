#pragma once

// gNodeB energy accounting, synthetic solar irradiance, the per-slice energy
// dissatisfaction metric and the solar-aware allocation action.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "edgetwin/rng.hpp"
#include "edgetwin/topology.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

struct EnergyParams {
  double beta_c_w = 50.0;  ///< watts at full CPU utilization
  double beta_b_w = 30.0;  ///< watts at full bandwidth utilization
  double theta_w_m2 = 700.0;
  double horizon_h = 24.0;
  double lambda = 0.5;
  std::array<double, kNumSlices> weights{1.0, 1.0, 1.0};
  /// Per-slice energy budgets (joules over the run). Zero means "derive from
  /// the static 40/35/25 split of measured demand".
  std::array<double, kNumSlices> targets_j{0.0, 0.0, 0.0};
  double panel_area_m2 = 2.0;
  double panel_efficiency = 0.2;
  double max_delay_s = 300.0;

  void validate() const {
    if (!(beta_c_w > 0.0 && beta_b_w > 0.0)) throw ConfigError("energy: beta_c_w and beta_b_w must be positive");
    if (!(theta_w_m2 > 0.0)) throw ConfigError("energy.theta_w_m2: must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("energy.lambda: must lie in [0, 1]");
    for (double w : weights)
      if (!(w >= 0.0)) throw ConfigError("energy.weights: must be nonnegative");
    for (double t : targets_j)
      if (!(t >= 0.0)) throw ConfigError("energy.targets_j: must be nonnegative");
    if (!(panel_area_m2 >= 0.0 && panel_efficiency >= 0.0 && panel_efficiency <= 1.0))
      throw ConfigError("energy: panel area/efficiency out of range");
    if (!(max_delay_s >= 0.0)) throw ConfigError("energy.max_delay_s: must be nonnegative");
    if (!(horizon_h > 0.0)) throw ConfigError("energy.horizon_h: must be positive");
  }

  double panel_watts(double irradiance) const { return panel_area_m2 * panel_efficiency * std::max(0.0, irradiance); }
};

struct Utilization {
  double cpu = 0.0;  ///< in [0, 1]
  double bw = 0.0;   ///< in [0, 1]
};

struct EnergyStep {
  double demand_w = 0.0;
  double grid_w = 0.0;
  double renewable_w = 0.0;
  double comp_w = 0.0;
  double comm_w = 0.0;
};

/// Power draw for one step; renewable supply offsets grid draw and never
/// exceeds demand. Accumulates joules into acc.
inline EnergyStep step_energy(GnbEnergy& acc, Utilization u, double dt_s, double irradiance, const EnergyParams& p) {
  if (!(u.cpu >= -1e-12 && u.cpu <= 1.0 + 1e-9 && u.bw >= -1e-12 && u.bw <= 1.0 + 1e-9))
    throw ContractError("step_energy: utilization outside [0, 1]");
  EnergyStep s;
  s.comp_w = p.beta_c_w * u.cpu;
  s.comm_w = p.beta_b_w * u.bw;
  s.demand_w = s.comp_w + s.comm_w;
  s.renewable_w = std::min(s.demand_w, p.panel_watts(irradiance));
  s.grid_w = s.demand_w - s.renewable_w;
  acc.comp_j += s.comp_w * dt_s;
  acc.comm_j += s.comm_w * dt_s;
  acc.renewable_j += s.renewable_w * dt_s;
  acc.grid_j += s.grid_w * dt_s;
  return s;
}

/// sum_s w_s ((actual_s - target_s) / target_s)^2
inline double dissatisfaction(const std::array<double, kNumSlices>& actual, const std::array<double, kNumSlices>& target,
                              const std::array<double, kNumSlices>& w) {
  double d = 0.0;
  for (std::size_t s = 0; s < kNumSlices; ++s) {
    if (!(target[s] > 0.0)) throw ConfigError("dissatisfaction: energy targets must be positive");
    const double r = (actual[s] - target[s]) / target[s];
    d += w[s] * r * r;
  }
  return d;
}

enum class SolarAction : std::uint8_t { kAllocateRenewable, kDelayAllocation, kImmediateAllocation };

inline constexpr std::string_view to_string(SolarAction a) {
  switch (a) {
    case SolarAction::kAllocateRenewable: return "AllocateRenewable";
    case SolarAction::kDelayAllocation: return "DelayAllocation";
    case SolarAction::kImmediateAllocation: return "ImmediateAllocation";
  }
  return "?";
}

inline SolarAction solar_action(Slice s, double forecast_irradiance, double theta) {
  if (s == Slice::kLss || s == Slice::kRts) return SolarAction::kImmediateAllocation;
  return forecast_irradiance > theta ? SolarAction::kAllocateRenewable : SolarAction::kDelayAllocation;
}

// ---------------------------------------------------------------------------
// Solar irradiance

struct SolarConfig {
  double peak_w_m2 = 1000.0;
  double sunrise_h = 6.0;
  double sunset_h = 18.0;
  double cloud_phi = 0.95;
  double cloud_sigma = 0.03;
  /// Hour of day at simulation time zero.
  double start_hour = 12.0;
  /// Irradiance-clock minutes that pass per simulated minute (1 = real time).
  double time_scale = 1.0;

  void validate() const {
    if (!(peak_w_m2 >= 0.0)) throw ConfigError("solar.peak_w_m2: must be nonnegative");
    if (!(sunrise_h >= 0.0 && sunset_h <= 24.0 && sunrise_h < sunset_h)) throw ConfigError("solar: need 0 <= sunrise_h < sunset_h <= 24");
    if (!(cloud_phi >= 0.0 && cloud_phi < 1.0)) throw ConfigError("solar.cloud_phi: must lie in [0, 1)");
    if (!(cloud_sigma >= 0.0)) throw ConfigError("solar.cloud_sigma: must be nonnegative");
    if (!(time_scale > 0.0)) throw ConfigError("solar.time_scale: must be positive");
  }
};

/// Cloudless irradiance at an hour of day (sine between sunrise and sunset).
inline double clear_sky(double hour_of_day, const SolarConfig& c) {
  const double h = std::fmod(std::fmod(hour_of_day, 24.0) + 24.0, 24.0);
  if (h <= c.sunrise_h || h >= c.sunset_h) return 0.0;
  return c.peak_w_m2 * std::sin(std::numbers::pi * (h - c.sunrise_h) / (c.sunset_h - c.sunrise_h));
}

/// Irradiance at 1-minute resolution on the irradiance clock. Index 0 is
/// `first_hour`; values are clear sky times (1 + AR(1) cloud index), clamped at 0.
class SolarTrace {
 public:
  SolarTrace() = default;

  static SolarTrace synthetic(const SolarConfig& c, double first_hour, std::size_t minutes, std::uint64_t seed) {
    c.validate();
    SolarTrace t;
    t.first_hour_ = first_hour;
    t.config_ = c;
    t.values_.resize(minutes);
    Rng rng = Rng::stream(seed, StreamKey::kSolar);
    const double stationary_sd = c.cloud_sigma / std::sqrt(1.0 - c.cloud_phi * c.cloud_phi);
    double cloud = stationary_sd * rng.normal();
    for (std::size_t k = 0; k < minutes; ++k) {
      const double clear = clear_sky(first_hour + static_cast<double>(k) / 60.0, c);
      t.values_[k] = std::max(0.0, clear * (1.0 + cloud));
      cloud = c.cloud_phi * cloud + c.cloud_sigma * rng.normal();
    }
    return t;
  }

  /// Reads "time_s,w_per_m2" rows (header optional) and resamples to minutes
  /// by linear interpolation. time_s = 0 is taken as `first_hour`.
  static SolarTrace from_csv(const std::string& path, const SolarConfig& c, double first_hour) {
    std::ifstream in(path);
    if (!in) throw ConfigError("solar trace: cannot open " + path);
    std::vector<std::pair<double, double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ss(line);
      double ts = 0.0, w = 0.0;
      if (!(ss >> ts >> w)) continue;  // header or junk
      rows.emplace_back(ts, std::max(0.0, w));
    }
    if (rows.size() < 2) throw ConfigError("solar trace: need at least two rows in " + path);
    std::sort(rows.begin(), rows.end());
    SolarTrace t;
    t.first_hour_ = first_hour;
    t.config_ = c;
    const auto minutes = static_cast<std::size_t>(std::floor(rows.back().first / 60.0)) + 1;
    t.values_.resize(minutes);
    std::size_t j = 0;
    for (std::size_t k = 0; k < minutes; ++k) {
      const double ts = static_cast<double>(k) * 60.0;
      while (j + 1 < rows.size() && rows[j + 1].first < ts) ++j;
      if (ts <= rows.front().first) {
        t.values_[k] = rows.front().second;
      } else if (j + 1 >= rows.size()) {
        t.values_[k] = rows.back().second;
      } else {
        const auto [t0, v0] = rows[j];
        const auto [t1, v1] = rows[j + 1];
        t.values_[k] = t1 > t0 ? v0 + (v1 - v0) * (ts - t0) / (t1 - t0) : v0;
      }
    }
    return t;
  }

  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double first_hour() const { return first_hour_; }
  const SolarConfig& config() const { return config_; }

  /// Irradiance at a (fractional) minute index, linear interpolation, clamped to the ends.
  double at_minute(double m) const {
    if (values_.empty()) return 0.0;
    if (m <= 0.0) return values_.front();
    const auto k = static_cast<std::size_t>(m);
    if (k + 1 >= values_.size()) return values_.back();
    const double f = m - static_cast<double>(k);
    return values_[k] * (1.0 - f) + values_[k + 1] * f;
  }

  /// Clear-sky values for minute indices [from, from + count).
  std::vector<double> clear_profile(std::size_t from, std::size_t count) const {
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k)
      out[k] = clear_sky(first_hour_ + static_cast<double>(from + k) / 60.0, config_);
    return out;
  }

 private:
  std::vector<double> values_;
  double first_hour_ = 0.0;
  SolarConfig config_{};
};

}  // namespace edgetwin
