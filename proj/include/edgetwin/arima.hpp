#pragma once

// ARIMA(2,1,2) fitted by conditional least squares (Hannan-Rissanen style:
// long-AR residual proxy, then iterated regression on lagged differences and
// lagged residuals).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "edgetwin/types.hpp"

namespace edgetwin {

struct ArimaFit {
  double phi1 = 0.0, phi2 = 0.0;
  double theta1 = 0.0, theta2 = 0.0;
  /// Per-step drift; only set by the constant-difference shortcut.
  double drift = 0.0;
  bool degenerate = false;
  std::size_t iterations = 0;
};

namespace detail {

// Shrinks (a1, a2) until x_t = a1 x_{t-1} + a2 x_{t-2} is stationary.
inline void make_stationary(double& a1, double& a2) {
  for (int k = 0; k < 200; ++k) {
    if (std::abs(a2) < 0.999 && a1 + a2 < 0.999 && a2 - a1 < 0.999) return;
    a1 *= 0.95;
    a2 *= 0.95;
  }
  a1 = 0.0;
  a2 = 0.0;
}

inline std::vector<double> ls_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd s = a.colPivHouseholderQr().solve(b);
  return {s.data(), s.data() + s.size()};
}

// Residuals of the ARMA(2,2) recursion on d with zero initial residuals.
inline std::vector<double> arma_residuals(std::span<const double> d, const ArimaFit& f) {
  std::vector<double> e(d.size(), 0.0);
  for (std::size_t t = 2; t < d.size(); ++t) {
    e[t] = d[t] - f.phi1 * d[t - 1] - f.phi2 * d[t - 2] - f.theta1 * e[t - 1] - f.theta2 * e[t - 2];
  }
  return e;
}

}  // namespace detail

inline constexpr std::size_t kMinArimaHistory = 50;

inline ArimaFit fit_arima212(std::span<const double> history, std::size_t max_iterations = 10) {
  if (history.size() < kMinArimaHistory) throw ContractError("fit_arima212: need at least 50 observations");
  std::vector<double> d(history.size() - 1);
  for (std::size_t t = 1; t < history.size(); ++t) d[t - 1] = history[t] - history[t - 1];

  ArimaFit fit;
  const double mean = [&] {
    double s = 0.0;
    for (double v : d) s += v;
    return s / static_cast<double>(d.size());
  }();
  double spread = 0.0;
  for (double v : d) spread = std::max(spread, std::abs(v - mean));
  const double scale = std::max(1.0, std::abs(mean));
  if (spread <= 1e-9 * scale) {
    fit.degenerate = true;
    fit.drift = mean;
    return fit;
  }

  const auto n = static_cast<Eigen::Index>(d.size());
  // Long autoregression for a first residual estimate.
  const Eigen::Index p_long = std::min<Eigen::Index>(10, n / 5);
  std::vector<double> e(d.size(), 0.0);
  {
    Eigen::MatrixXd a(n - p_long, p_long);
    Eigen::VectorXd b(n - p_long);
    for (Eigen::Index t = p_long; t < n; ++t) {
      b(t - p_long) = d[static_cast<std::size_t>(t)];
      for (Eigen::Index k = 0; k < p_long; ++k) a(t - p_long, k) = d[static_cast<std::size_t>(t - 1 - k)];
    }
    const auto c = detail::ls_solve(a, b);
    for (Eigen::Index t = p_long; t < n; ++t) {
      double pred = 0.0;
      for (Eigen::Index k = 0; k < p_long; ++k) pred += c[static_cast<std::size_t>(k)] * d[static_cast<std::size_t>(t - 1 - k)];
      e[static_cast<std::size_t>(t)] = d[static_cast<std::size_t>(t)] - pred;
    }
  }

  const Eigen::Index start = std::max<Eigen::Index>(2, p_long);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    Eigen::MatrixXd a(n - start, 4);
    Eigen::VectorXd b(n - start);
    for (Eigen::Index t = start; t < n; ++t) {
      const auto ut = static_cast<std::size_t>(t);
      b(t - start) = d[ut];
      a(t - start, 0) = d[ut - 1];
      a(t - start, 1) = d[ut - 2];
      a(t - start, 2) = e[ut - 1];
      a(t - start, 3) = e[ut - 2];
    }
    const auto c = detail::ls_solve(a, b);
    ArimaFit next = fit;
    next.phi1 = c[0];
    next.phi2 = c[1];
    next.theta1 = c[2];
    next.theta2 = c[3];
    detail::make_stationary(next.phi1, next.phi2);
    // Invertibility of 1 + theta1 z + theta2 z^2, same shrinkage on (-theta1, -theta2).
    double m1 = -next.theta1, m2 = -next.theta2;
    detail::make_stationary(m1, m2);
    next.theta1 = -m1;
    next.theta2 = -m2;
    const double change = std::abs(next.phi1 - fit.phi1) + std::abs(next.phi2 - fit.phi2) +
                          std::abs(next.theta1 - fit.theta1) + std::abs(next.theta2 - fit.theta2);
    fit = next;
    fit.iterations = it + 1;
    e = detail::arma_residuals(d, fit);
    if (change < 1e-9) break;
  }
  return fit;
}

/// Mean forecast of the next `horizon` levels. Not clamped.
inline std::vector<double> arima_forecast(std::span<const double> history, const ArimaFit& fit, std::size_t horizon) {
  std::vector<double> out(horizon);
  if (history.empty()) return out;
  double level = history.back();
  if (fit.degenerate) {
    for (std::size_t h = 0; h < horizon; ++h) out[h] = level += fit.drift;
    return out;
  }
  std::vector<double> d(history.size() - 1);
  for (std::size_t t = 1; t < history.size(); ++t) d[t - 1] = history[t] - history[t - 1];
  const auto e = detail::arma_residuals(d, fit);
  double d1 = d.size() >= 1 ? d[d.size() - 1] : 0.0;
  double d2 = d.size() >= 2 ? d[d.size() - 2] : 0.0;
  double e1 = e.size() >= 1 ? e[e.size() - 1] : 0.0;
  double e2 = e.size() >= 2 ? e[e.size() - 2] : 0.0;
  for (std::size_t h = 0; h < horizon; ++h) {
    const double dn = fit.phi1 * d1 + fit.phi2 * d2 + fit.theta1 * e1 + fit.theta2 * e2;
    level += dn;
    out[h] = level;
    d2 = d1;
    d1 = dn;
    e2 = e1;
    e1 = 0.0;
  }
  return out;
}

/// ARIMA(2,1,2) mean forecast of an irradiance series, clamped at zero.
inline std::vector<double> forecast_solar(std::span<const double> history, std::size_t horizon) {
  const auto fit = fit_arima212(history);
  auto f = arima_forecast(history, fit, horizon);
  for (auto& v : f) v = std::max(0.0, v);
  return f;
}

/// Forecast on the clear-sky index: the ARIMA model runs on
/// k_t = I_t / clear_t (carried forward where clear_t is near zero), and the
/// forecast is clear(t+h) * k_hat. `clear` must cover history.size() + horizon
/// steps aligned with the history.
inline std::vector<double> forecast_solar(std::span<const double> history, std::size_t horizon,
                                          std::span<const double> clear) {
  if (clear.size() < history.size() + horizon) throw ContractError("forecast_solar: clear-sky profile too short");
  double peak = 0.0;
  for (double c : clear) peak = std::max(peak, c);
  const double floor = 0.05 * peak;
  std::vector<double> k(history.size());
  double last = 1.0;
  for (std::size_t t = 0; t < history.size(); ++t) {
    if (clear[t] > floor) last = history[t] / clear[t];
    k[t] = last;
  }
  const auto fit = fit_arima212(k);
  const auto kf = arima_forecast(k, fit, horizon);
  std::vector<double> out(horizon);
  for (std::size_t h = 0; h < horizon; ++h) out[h] = std::max(0.0, clear[history.size() + h] * kf[h]);
  return out;
}

}  // namespace edgetwin
