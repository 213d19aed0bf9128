#pragma once

// Percentiles, SLA compliance, bounded latency reservoirs and replication
// statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "edgetwin/rng.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample.
inline std::optional<double> percentile(std::span<const double> samples, double p) {
  if (samples.empty()) return std::nullopt;
  if (!(p > 0.0 && p <= 100.0)) throw ContractError("percentile: p must lie in (0, 100]");
  std::vector<double> v(samples.begin(), samples.end());
  const auto n = v.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
  return v[rank - 1];
}

/// Fraction of samples <= bound.
inline std::optional<double> sla_compliance(std::span<const double> samples, double bound) {
  if (samples.empty()) return std::nullopt;
  const auto ok = std::count_if(samples.begin(), samples.end(), [&](double s) { return s <= bound; });
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

/// Algorithm R reservoir with its own RNG stream; exact counts and maxima are
/// tracked alongside the sample.
class Reservoir {
 public:
  explicit Reservoir(std::size_t capacity = 1'000'000, std::uint64_t seed = 0, std::uint64_t index = 0)
      : cap_(capacity), rng_(Rng::stream(seed, StreamKey::kReservoir, index)) {}

  void add(double v) {
    ++seen_;
    max_ = std::max(max_, v);
    if (v <= bound_) ++within_;
    if (samples_.size() < cap_) {
      samples_.push_back(v);
      return;
    }
    const auto j = rng_.below(seen_);
    if (j < cap_) samples_[j] = v;
  }

  /// Bound used for the exact compliance counter.
  void set_bound(double b) { bound_ = b; }

  std::span<const double> samples() const { return samples_; }
  std::uint64_t seen() const { return seen_; }
  double max() const { return max_; }
  std::optional<double> exact_compliance() const {
    if (seen_ == 0) return std::nullopt;
    return static_cast<double>(within_) / static_cast<double>(seen_);
  }

 private:
  std::size_t cap_;
  Rng rng_;
  std::vector<double> samples_;
  std::uint64_t seen_ = 0;
  std::uint64_t within_ = 0;
  double max_ = 0.0;
  double bound_ = 0.0;
};

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  /// 1.96 * sd / sqrt(n)
  double ci95 = 0.0;
};

inline Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  // shifted by the first value so identical inputs give exactly zero spread
  const double x0 = values.front();
  double sum = 0.0;
  for (double v : values) sum += v - x0;
  const double shift = sum / static_cast<double>(s.n);
  s.mean = x0 + shift;
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - x0 - shift) * (v - x0 - shift);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.ci95 = 1.96 * s.sd / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

}  // namespace edgetwin
