#pragma once

// CyberTwin synchronisation: compressive-sensing encode/decode of device and
// gNodeB state vectors, plus priority-based downsampling before transmission.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "edgetwin/rng.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

enum class SyncPriority : std::uint8_t { kLow, kNormal, kHigh };

inline constexpr double kMeasurementRatio = 0.3;

/// Number of measurements for an n-vector: ceil(0.3 n).
inline std::size_t measurement_count(std::size_t n, double ratio = kMeasurementRatio) {
  return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
}

/// Gaussian(0, 1/m) measurement matrix, regenerated identically on both sides
/// from the shared seed. With mask_fraction > 0 that share of entries is
/// forced to zero.
class SensingMatrix {
 public:
  SensingMatrix() = default;

  SensingMatrix(std::size_t n, std::uint64_t seed, double mask_fraction = 0.0, double ratio = kMeasurementRatio)
      : seed_(seed), mask_fraction_(mask_fraction) {
    if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) throw ConfigError("sensing matrix: mask_fraction must lie in [0, 1)");
    const std::size_t m = measurement_count(n, ratio);
    phi_.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    Rng rng = Rng::stream(seed, StreamKey::kSensing);
    const double sd = m > 0 ? 1.0 / std::sqrt(static_cast<double>(m)) : 0.0;
    // Column-major fill so the draw order is independent of Eigen's storage.
    for (Eigen::Index j = 0; j < phi_.cols(); ++j) {
      for (Eigen::Index i = 0; i < phi_.rows(); ++i) {
        const double v = rng.normal() * sd;
        const bool zeroed = mask_fraction_ > 0.0 && rng.uniform() < mask_fraction_;
        phi_(i, j) = zeroed ? 0.0 : v;
      }
    }
    col_norms_ = phi_.colwise().norm().transpose();
  }

  std::size_t rows() const { return static_cast<std::size_t>(phi_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(phi_.cols()); }
  std::uint64_t seed() const { return seed_; }
  double mask_fraction() const { return mask_fraction_; }
  const Eigen::MatrixXd& matrix() const { return phi_; }
  const Eigen::VectorXd& column_norms() const { return col_norms_; }
  double operator()(std::size_t i, std::size_t j) const {
    return phi_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Eigen::MatrixXd phi_;
  Eigen::VectorXd col_norms_;
  std::uint64_t seed_ = 0;
  double mask_fraction_ = 0.0;
};

inline std::vector<double> compress(std::span<const double> x, const SensingMatrix& phi) {
  if (x.size() != phi.cols()) throw ContractError("compress: vector length does not match matrix columns");
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  std::vector<double> y(phi.rows());
  Eigen::Map<Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  yv.noalias() = phi.matrix() * xv;
  return y;
}

struct Reconstruction {
  std::vector<double> x;
  std::vector<std::size_t> support;
  std::size_t iterations = 0;
  double residual_norm = 0.0;
  /// False when the residual target was not met within the sparsity budget.
  bool converged = true;
};

/// Orthogonal matching pursuit. Stops when ||r|| <= rel_tol * ||y|| or after
/// k_max atoms. Never throws on non-convergence: the best iterate comes back
/// with converged = false.
inline Reconstruction reconstruct(std::span<const double> y, const SensingMatrix& phi, std::size_t k_max,
                                  double rel_tol = 1e-10) {
  if (y.size() != phi.rows()) throw ContractError("reconstruct: measurement length does not match matrix rows");
  const auto n = static_cast<Eigen::Index>(phi.cols());
  const Eigen::MatrixXd& a = phi.matrix();
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));

  Reconstruction out;
  out.x.assign(phi.cols(), 0.0);
  const double y_norm = yv.norm();
  if (y_norm == 0.0) return out;
  const double target = rel_tol * y_norm;

  Eigen::VectorXd residual = yv;
  Eigen::VectorXd coef;
  std::vector<char> chosen(phi.cols(), 0);
  const std::size_t budget = std::min<std::size_t>(k_max, std::min(phi.rows(), phi.cols()));
  Eigen::MatrixXd sub(a.rows(), 0);

  while (out.support.size() < budget && residual.norm() > target) {
    const Eigen::VectorXd corr = a.transpose() * residual;
    Eigen::Index best = -1;
    double best_score = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (chosen[static_cast<std::size_t>(j)]) continue;
      const double norm = phi.column_norms()(j);
      if (norm == 0.0) continue;
      const double score = std::abs(corr(j)) / norm;
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0) break;
    chosen[static_cast<std::size_t>(best)] = 1;
    out.support.push_back(static_cast<std::size_t>(best));
    sub.conservativeResize(Eigen::NoChange, sub.cols() + 1);
    sub.col(sub.cols() - 1) = a.col(best);
    coef = sub.colPivHouseholderQr().solve(yv);
    residual = yv - sub * coef;
    ++out.iterations;
  }
  for (std::size_t k = 0; k < out.support.size(); ++k) out.x[out.support[k]] = coef(static_cast<Eigen::Index>(k));
  out.residual_norm = residual.norm();
  out.converged = out.residual_norm <= target;
  return out;
}

/// LOW keeps every 4th element starting at index 0; NORMAL and HIGH pass x through.
inline std::vector<double> priority_downsample(std::span<const double> x, SyncPriority priority) {
  if (priority != SyncPriority::kLow) return {x.begin(), x.end()};
  std::vector<double> out;
  out.reserve((x.size() + 3) / 4);
  for (std::size_t i = 0; i < x.size(); i += 4) out.push_back(x[i]);
  return out;
}

inline std::size_t downsampled_length(std::size_t n, SyncPriority priority) {
  return priority == SyncPriority::kLow ? (n + 3) / 4 : n;
}

/// Bytes on the wire for one twin sync of an n-element state (8 bytes per element).
inline std::uint64_t sync_cost(std::size_t n, SyncPriority priority, bool compressed) {
  std::size_t len = downsampled_length(n, priority);
  if (compressed) len = measurement_count(len);
  return static_cast<std::uint64_t>(len) * 8u;
}

}  // namespace edgetwin
