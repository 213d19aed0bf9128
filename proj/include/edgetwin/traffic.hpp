#pragma once

// Per-device packet arrival processes for the three device classes.
//
// Time is in milliseconds throughout. A process is stepped over consecutive
// windows [t, t + dt) and emits packets with exact arrival instants inside the
// window, in nondecreasing time order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "edgetwin/rng.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

struct Packet {
  DeviceId src_device = 0;
  std::uint32_t size_bytes = 0;
  double created_at_ms = 0.0;
  Slice slice = Slice::kNrts;
};

enum class TrafficKind : std::uint8_t { kBetaBursty, kGaussianCbr, kPeriodicJitter };

/// What the Beta(2,5) variate drives for mMTC devices.
enum class BetaReading : std::uint8_t {
  kProbability,  ///< one packet this millisecond with probability u
  kSize,         ///< one packet every millisecond of round(u * packet_bytes) bytes
};

struct TrafficParams {
  double beta_alpha = 2.0;
  double beta_beta = 5.0;
  std::uint32_t mmtc_packet_bytes = 100;
  BetaReading beta_reading = BetaReading::kProbability;

  double cbr_rate_bps = 10e6;
  double cbr_sigma = 0.2;
  std::uint32_t mtu_bytes = 1500;

  double period_ms = 1.0;
  double jitter_ms = 0.1;
  std::uint32_t urllc_packet_bytes = 32;

  void validate() const {
    if (!(beta_alpha > 0.0 && beta_beta > 0.0)) throw ConfigError("traffic: Beta parameters must be positive");
    if (mmtc_packet_bytes == 0 || mtu_bytes == 0 || urllc_packet_bytes == 0) throw ConfigError("traffic: packet sizes must be positive");
    if (!(cbr_rate_bps > 0.0)) throw ConfigError("traffic: cbr_rate_bps must be positive");
    if (!(cbr_sigma >= 0.0)) throw ConfigError("traffic: cbr_sigma must be nonnegative");
    if (!(period_ms > 0.0)) throw ConfigError("traffic: period_ms must be positive");
    if (!(jitter_ms >= 0.0 && jitter_ms < period_ms / 2.0)) throw ConfigError("traffic: jitter_ms must lie in [0, period_ms / 2)");
  }
};

inline TrafficKind traffic_kind_for(DeviceClass c) {
  switch (c) {
    case DeviceClass::kMmtc: return TrafficKind::kBetaBursty;
    case DeviceClass::kEmbb: return TrafficKind::kGaussianCbr;
    case DeviceClass::kUrllc: return TrafficKind::kPeriodicJitter;
  }
  return TrafficKind::kBetaBursty;
}

/// Long-run mean offered rate of one device of the given class, in bits/s.
inline double nominal_rate_bps(DeviceClass c, const TrafficParams& p) {
  switch (c) {
    case DeviceClass::kMmtc: return p.beta_alpha / (p.beta_alpha + p.beta_beta) * p.mmtc_packet_bytes * 8.0 * 1000.0;
    case DeviceClass::kEmbb: return p.cbr_rate_bps;
    case DeviceClass::kUrllc: return p.urllc_packet_bytes * 8.0 * 1000.0 / p.period_ms;
  }
  return 0.0;
}

class TrafficProcess {
 public:
  /// The initial phase is drawn from rng; the caller keeps using the same rng
  /// for subsequent emit() calls.
  TrafficProcess(TrafficKind kind, const TrafficParams& params, DeviceId device, Slice slice, Rng& rng)
      : kind_(kind), params_(params), device_(device), slice_(slice) {
    params_.validate();
    switch (kind_) {
      case TrafficKind::kBetaBursty:
        next_tick_ms_ = 0.0;
        break;
      case TrafficKind::kGaussianCbr:
        credit_bytes_ = rng.uniform() * params_.mtu_bytes;
        next_tick_ms_ = 0.0;
        break;
      case TrafficKind::kPeriodicJitter:
        next_instant_ms_ = rng.uniform() * params_.period_ms;
        break;
    }
  }

  TrafficKind kind() const { return kind_; }
  const TrafficParams& params() const { return params_; }
  double cbr_credit_bytes() const { return credit_bytes_; }

  /// Scales the offered load (resource-exhaustion attackers use x20).
  void set_load_multiplier(double k) { load_multiplier_ = k; }
  double load_multiplier() const { return load_multiplier_; }

  /// Emits every packet with arrival in [t_ms, t_ms + dt_ms) through sink(const Packet&).
  template <class Sink>
  void emit(double t_ms, double dt_ms, Rng& rng, Sink&& sink) {
    const double end = t_ms + dt_ms;
    switch (kind_) {
      case TrafficKind::kBetaBursty: emit_beta(end, rng, sink); break;
      case TrafficKind::kGaussianCbr: emit_cbr(t_ms, end, rng, sink); break;
      case TrafficKind::kPeriodicJitter: emit_periodic(end, rng, sink); break;
    }
  }

  std::vector<Packet> arrivals(double t_ms, double dt_ms, Rng& rng) {
    std::vector<Packet> out;
    emit(t_ms, dt_ms, rng, [&](const Packet& p) { out.push_back(p); });
    return out;
  }

  /// One draw of the process's underlying random variate: the Beta emission
  /// probability, the CBR rate factor, or the periodic jitter.
  double draw_variate(Rng& rng) const {
    switch (kind_) {
      case TrafficKind::kBetaBursty: return rng.beta(params_.beta_alpha, params_.beta_beta);
      case TrafficKind::kGaussianCbr: return cbr_factor(rng);
      case TrafficKind::kPeriodicJitter: return jitter(rng);
    }
    return 0.0;
  }

 private:
  template <class Sink>
  void emit_beta(double end, Rng& rng, Sink& sink) {
    if (pending_ && *pending_ < end) {
      sink(make_packet(pending_size_, *pending_));
      pending_.reset();
    }
    while (next_tick_ms_ < end) {
      const double u = rng.beta(params_.beta_alpha, params_.beta_beta);
      const double offset = rng.uniform();
      std::uint32_t size = 0;
      if (params_.beta_reading == BetaReading::kProbability) {
        if (rng.uniform() < std::min(1.0, u * load_multiplier_)) size = params_.mmtc_packet_bytes;
      } else {
        size = static_cast<std::uint32_t>(std::lround(u * params_.mmtc_packet_bytes * load_multiplier_));
      }
      const double at = next_tick_ms_ + offset;
      next_tick_ms_ += 1.0;
      if (size == 0) continue;
      if (at < end) {
        sink(make_packet(size, at));
      } else {
        pending_ = at;
        pending_size_ = size;
      }
    }
  }

  template <class Sink>
  void emit_cbr(double start, double end, Rng& rng, Sink& sink) {
    double a = start;
    while (a < end) {
      if (a >= next_tick_ms_) {
        factor_ = cbr_factor(rng);
        next_tick_ms_ = std::floor(a) + 1.0;
      }
      const double b = std::min(end, next_tick_ms_);
      const double bytes_per_ms = params_.cbr_rate_bps * factor_ * load_multiplier_ / 8000.0;
      const double mtu = params_.mtu_bytes;
      if (bytes_per_ms > 0.0) {
        while (credit_bytes_ + bytes_per_ms * (b - a) >= mtu) {
          const double cross = a + (mtu - credit_bytes_) / bytes_per_ms;
          sink(make_packet(params_.mtu_bytes, cross));
          a = cross;
          credit_bytes_ = 0.0;
        }
        credit_bytes_ += bytes_per_ms * (b - a);
      }
      a = b;
    }
  }

  template <class Sink>
  void emit_periodic(double end, Rng& rng, Sink& sink) {
    while (next_instant_ms_ < end) {
      const auto copies = static_cast<std::uint32_t>(std::max(1.0, std::round(load_multiplier_)));
      sink(make_packet(params_.urllc_packet_bytes * copies, next_instant_ms_));
      next_instant_ms_ += params_.period_ms + jitter(rng);
    }
  }

  double cbr_factor(Rng& rng) const { return std::max(0.0, 1.0 + params_.cbr_sigma * rng.normal()); }
  double jitter(Rng& rng) const { return rng.uniform(-params_.jitter_ms, params_.jitter_ms); }

  Packet make_packet(std::uint32_t size, double at) const { return Packet{device_, size, at, slice_}; }

  TrafficKind kind_;
  TrafficParams params_;
  DeviceId device_;
  Slice slice_;
  double load_multiplier_ = 1.0;

  double next_tick_ms_ = 0.0;
  std::optional<double> pending_;
  std::uint32_t pending_size_ = 0;
  double credit_bytes_ = 0.0;
  double factor_ = 1.0;
  double next_instant_ms_ = 0.0;
};

/// Empirical (mean, variance) of the process's underlying variate.
inline std::pair<double, double> moment_check(const TrafficProcess& proc, std::size_t n_samples, Rng& rng) {
  if (n_samples == 0) throw ContractError("moment_check: n_samples must be >= 1");
  // Welford.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 1; i <= n_samples; ++i) {
    const double x = proc.draw_variate(rng);
    const double delta = x - mean;
    mean += delta / static_cast<double>(i);
    m2 += delta * (x - mean);
  }
  return {mean, m2 / static_cast<double>(n_samples)};
}

}  // namespace edgetwin
