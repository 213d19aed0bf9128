#pragma once

// One-hidden-layer feed-forward network used by the centralized policy
// (128 hidden units, softmax-per-resource head) and by the local federated
// demand predictors (64 hidden units, linear head).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "edgetwin/rng.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

struct Sample {
  std::vector<double> x;
  std::vector<double> y;
};

using Dataset = std::vector<Sample>;

enum class OutputHead : std::uint8_t {
  kLinear,
  /// Outputs split into consecutive groups of `group_size`, softmax within each.
  kSoftmaxGroups,
};

class Mlp {
 public:
  Mlp() = default;

  Mlp(std::size_t inputs, std::size_t hidden, std::size_t outputs, OutputHead head = OutputHead::kLinear,
      std::size_t group_size = 1)
      : in_(inputs), hid_(hidden), out_(outputs), head_(head), group_(group_size) {
    if (head_ == OutputHead::kSoftmaxGroups && (group_ == 0 || out_ % group_ != 0))
      throw ConfigError("mlp: output count must be a multiple of the softmax group size");
    params_.assign(param_count(), 0.0);
  }

  std::size_t inputs() const { return in_; }
  std::size_t hidden() const { return hid_; }
  std::size_t outputs() const { return out_; }
  std::size_t param_count() const { return hid_ * in_ + hid_ + out_ * hid_ + out_; }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  void set_params(std::span<const double> p) {
    if (p.size() != params_.size()) throw ContractError("mlp: parameter vector has the wrong length");
    std::copy(p.begin(), p.end(), params_.begin());
  }

  /// Glorot-uniform weights, zero biases.
  void init(Rng& rng) {
    const double l1 = std::sqrt(6.0 / static_cast<double>(in_ + hid_));
    const double l2 = std::sqrt(6.0 / static_cast<double>(hid_ + out_));
    std::fill(params_.begin(), params_.end(), 0.0);
    for (std::size_t k = 0; k < hid_ * in_; ++k) params_[k] = rng.uniform(-l1, l1);
    const std::size_t w2 = hid_ * in_ + hid_;
    for (std::size_t k = 0; k < out_ * hid_; ++k) params_[w2 + k] = rng.uniform(-l2, l2);
  }

  std::vector<double> forward(std::span<const double> x) const {
    std::vector<double> h(hid_), z(out_);
    forward_into(params_, x, h, z);
    return z;
  }

  /// Mean over samples of 0.5 * ||f(x) - y||^2.
  double loss(const Dataset& data) const { return loss_at(params_, data); }

  double loss_at(std::span<const double> p, const Dataset& data) const {
    if (data.empty()) return 0.0;
    std::vector<double> h(hid_), z(out_);
    double total = 0.0;
    for (const auto& s : data) {
      forward_into(p, s.x, h, z);
      for (std::size_t k = 0; k < out_; ++k) {
        const double e = z[k] - s.y[k];
        total += 0.5 * e * e;
      }
    }
    return total / static_cast<double>(data.size());
  }

  /// Analytic gradient of loss() with respect to the flattened parameters.
  std::vector<double> gradient(const Dataset& data) const {
    std::vector<double> g(params_.size(), 0.0);
    if (data.empty()) return g;
    std::vector<double> h(hid_), z(out_), dz(out_), dh(hid_);
    const std::size_t b1 = hid_ * in_;
    const std::size_t w2 = b1 + hid_;
    const std::size_t b2 = w2 + out_ * hid_;
    for (const auto& s : data) {
      check_sample(s);
      forward_into(params_, s.x, h, z);
      for (std::size_t k = 0; k < out_; ++k) dz[k] = z[k] - s.y[k];
      if (head_ == OutputHead::kSoftmaxGroups) {
        // dL/dlogit_k = p_k * (dL/dp_k - sum_j dL/dp_j p_j) within each group.
        for (std::size_t g0 = 0; g0 < out_; g0 += group_) {
          double dot = 0.0;
          for (std::size_t k = g0; k < g0 + group_; ++k) dot += dz[k] * z[k];
          for (std::size_t k = g0; k < g0 + group_; ++k) dz[k] = z[k] * (dz[k] - dot);
        }
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t k = 0; k < out_; ++k) {
        g[b2 + k] += dz[k];
        for (std::size_t j = 0; j < hid_; ++j) {
          g[w2 + k * hid_ + j] += dz[k] * h[j];
          dh[j] += dz[k] * params_[w2 + k * hid_ + j];
        }
      }
      for (std::size_t j = 0; j < hid_; ++j) {
        const double da = dh[j] * (1.0 - h[j] * h[j]);
        g[b1 + j] += da;
        for (std::size_t i = 0; i < in_; ++i) g[j * in_ + i] += da * s.x[i];
      }
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    for (auto& v : g) v *= inv;
    return g;
  }

  /// Mini-batch Adam, used for the supervised policy network. Returns the
  /// full-data loss after each epoch.
  std::vector<double> fit_adam(const Dataset& data, std::size_t epochs, double step, std::size_t batch, Rng& rng) {
    std::vector<double> history;
    if (data.empty()) return history;
    batch = std::max<std::size_t>(1, std::min(batch, data.size()));
    std::vector<double> m(params_.size(), 0.0), v(params_.size(), 0.0);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::size_t t = 0;
    Dataset mb;
    for (std::size_t e = 0; e < epochs; ++e) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t s = 0; s < order.size(); s += batch) {
        mb.clear();
        for (std::size_t k = s; k < std::min(order.size(), s + batch); ++k) mb.push_back(data[order[k]]);
        const auto g = gradient(mb);
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t k = 0; k < params_.size(); ++k) {
          m[k] = b1 * m[k] + (1.0 - b1) * g[k];
          v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
          params_[k] -= step * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
        }
      }
      history.push_back(loss(data));
    }
    return history;
  }

  /// Full-batch gradient descent. A step that would raise the loss is retried
  /// at half the step size (up to 20 times), so the training loss never
  /// increases. Returns the loss after each epoch.
  std::vector<double> fit(const Dataset& data, std::size_t epochs, double step) {
    std::vector<double> history;
    history.reserve(epochs);
    if (data.empty()) return history;
    double current = loss(data);
    std::vector<double> trial(params_.size());
    for (std::size_t e = 0; e < epochs; ++e) {
      const auto g = gradient(data);
      double lr = step;
      bool accepted = false;
      for (int attempt = 0; attempt < 20 && !accepted; ++attempt, lr *= 0.5) {
        for (std::size_t k = 0; k < params_.size(); ++k) trial[k] = params_[k] - lr * g[k];
        const double l = loss_at(trial, data);
        if (l <= current) {
          params_.swap(trial);
          current = l;
          accepted = true;
        }
      }
      history.push_back(current);
    }
    return history;
  }

 private:
  void check_sample(const Sample& s) const {
    if (s.x.size() != in_ || s.y.size() != out_) throw ContractError("mlp: sample has the wrong dimensions");
  }

  void forward_into(std::span<const double> p, std::span<const double> x, std::vector<double>& h,
                    std::vector<double>& z) const {
    if (x.size() != in_) throw ContractError("mlp: input has the wrong dimension");
    const std::size_t b1 = hid_ * in_;
    const std::size_t w2 = b1 + hid_;
    const std::size_t b2 = w2 + out_ * hid_;
    for (std::size_t j = 0; j < hid_; ++j) {
      double a = p[b1 + j];
      for (std::size_t i = 0; i < in_; ++i) a += p[j * in_ + i] * x[i];
      h[j] = std::tanh(a);
    }
    for (std::size_t k = 0; k < out_; ++k) {
      double a = p[b2 + k];
      for (std::size_t j = 0; j < hid_; ++j) a += p[w2 + k * hid_ + j] * h[j];
      z[k] = a;
    }
    if (head_ == OutputHead::kSoftmaxGroups) {
      for (std::size_t g0 = 0; g0 < out_; g0 += group_) {
        double mx = z[g0];
        for (std::size_t k = g0 + 1; k < g0 + group_; ++k) mx = std::max(mx, z[k]);
        double sum = 0.0;
        for (std::size_t k = g0; k < g0 + group_; ++k) {
          z[k] = std::exp(z[k] - mx);
          sum += z[k];
        }
        for (std::size_t k = g0; k < g0 + group_; ++k) z[k] /= sum;
      }
    }
  }

  std::size_t in_ = 0;
  std::size_t hid_ = 0;
  std::size_t out_ = 0;
  OutputHead head_ = OutputHead::kLinear;
  std::size_t group_ = 1;
  std::vector<double> params_;
};

}  // namespace edgetwin
