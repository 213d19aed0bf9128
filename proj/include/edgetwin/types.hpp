#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace edgetwin {

/// Raised for scenario or parameter values that violate a documented invariant.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a caller breaks a function precondition (dimension mismatch etc).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by the engine when a simulation invariant fires. These are bugs.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class DeviceClass : std::uint8_t { kMmtc = 0, kEmbb = 1, kUrllc = 2 };

// Order matters: LSS first so that per-slice arrays read in priority order.
enum class Slice : std::uint8_t { kLss = 0, kRts = 1, kNrts = 2 };

inline constexpr std::size_t kNumSlices = 3;
inline constexpr std::array<Slice, kNumSlices> kAllSlices{Slice::kLss, Slice::kRts, Slice::kNrts};

inline constexpr std::size_t idx(Slice s) { return static_cast<std::size_t>(s); }
inline constexpr std::size_t idx(DeviceClass c) { return static_cast<std::size_t>(c); }

inline constexpr Slice slice_of(DeviceClass c) {
  switch (c) {
    case DeviceClass::kUrllc: return Slice::kLss;
    case DeviceClass::kEmbb: return Slice::kRts;
    case DeviceClass::kMmtc: return Slice::kNrts;
  }
  return Slice::kNrts;
}

inline constexpr std::string_view to_string(Slice s) {
  switch (s) {
    case Slice::kLss: return "LSS";
    case Slice::kRts: return "RTS";
    case Slice::kNrts: return "NRTS";
  }
  return "?";
}

inline constexpr std::string_view to_string(DeviceClass c) {
  switch (c) {
    case DeviceClass::kMmtc: return "mMTC";
    case DeviceClass::kEmbb: return "eMBB";
    case DeviceClass::kUrllc: return "URLLC";
  }
  return "?";
}

/// CPU cores, RAM in GB, bandwidth in MHz.
struct Resources {
  double cpu = 0.0;
  double ram = 0.0;
  double bw = 0.0;

  constexpr Resources& operator+=(const Resources& o) {
    cpu += o.cpu;
    ram += o.ram;
    bw += o.bw;
    return *this;
  }
  constexpr Resources& operator-=(const Resources& o) {
    cpu -= o.cpu;
    ram -= o.ram;
    bw -= o.bw;
    return *this;
  }
  constexpr Resources& operator*=(double k) {
    cpu *= k;
    ram *= k;
    bw *= k;
    return *this;
  }
  friend constexpr Resources operator+(Resources a, const Resources& b) { return a += b; }
  friend constexpr Resources operator-(Resources a, const Resources& b) { return a -= b; }
  friend constexpr Resources operator*(Resources a, double k) { return a *= k; }
  friend constexpr Resources operator*(double k, Resources a) { return a *= k; }
  friend constexpr bool operator==(const Resources&, const Resources&) = default;

  constexpr double& operator[](std::size_t d) { return d == 0 ? cpu : (d == 1 ? ram : bw); }
  constexpr double operator[](std::size_t d) const { return d == 0 ? cpu : (d == 1 ? ram : bw); }

  /// True when every dimension is <= the other's (with absolute slack).
  constexpr bool fits_within(const Resources& cap, double slack = 1e-9) const {
    return cpu <= cap.cpu + slack && ram <= cap.ram + slack && bw <= cap.bw + slack;
  }
  constexpr bool nonnegative() const { return cpu >= 0.0 && ram >= 0.0 && bw >= 0.0; }
};

inline constexpr std::size_t kNumResources = 3;

inline constexpr Resources min(const Resources& a, const Resources& b) {
  return {a.cpu < b.cpu ? a.cpu : b.cpu, a.ram < b.ram ? a.ram : b.ram, a.bw < b.bw ? a.bw : b.bw};
}

using DeviceId = std::uint32_t;
using GnbId = std::uint32_t;

}  // namespace edgetwin
