#pragma once

// Federated NRTS demand prediction: local training on per-gNodeB windows,
// Krum and FedAvg aggregation, selective participation and compressed
// transport of updates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "edgetwin/cybertwin.hpp"
#include "edgetwin/mlp.hpp"
#include "edgetwin/rng.hpp"
#include "edgetwin/types.hpp"

namespace edgetwin {

class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kLocalHidden = 64;
/// Input window: the last kDemandLags normalized NRTS rates plus the hour of day (sin, cos).
inline constexpr std::size_t kDemandLags = 4;
inline constexpr std::size_t kDemandFeatures = kDemandLags + 2;

inline Mlp make_local_model() { return Mlp(kDemandFeatures, kLocalHidden, 1); }

struct ModelUpdate {
  std::uint32_t client = 0;
  std::vector<double> params;
  std::size_t sample_count = 1;
  std::uint64_t bytes_on_wire = 0;
};

inline bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct TrainOptions {
  std::size_t epochs = 40;
  double step = 0.1;
};

/// Trains a copy of the global model on local data and returns the weight
/// delta. Empty data yields no update.
inline std::optional<ModelUpdate> train_local(const Mlp& global, const Dataset& data, std::uint32_t client,
                                              const TrainOptions& opt, std::vector<double>* loss_history = nullptr) {
  if (data.empty()) return std::nullopt;
  Mlp local = global;
  auto hist = local.fit(data, opt.epochs, opt.step);
  if (loss_history != nullptr) *loss_history = std::move(hist);
  ModelUpdate u;
  u.client = client;
  u.sample_count = data.size();
  u.params.resize(global.param_count());
  const auto g = global.params();
  const auto l = local.params();
  for (std::size_t k = 0; k < u.params.size(); ++k) u.params[k] = l[k] - g[k];
  u.bytes_on_wire = static_cast<std::uint64_t>(u.params.size()) * 8u;
  return u;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Krum scores: sum of the n - f - 2 smallest squared distances to the others.
inline std::vector<double> krum_scores(std::span<const ModelUpdate> updates, std::size_t f) {
  const std::size_t n = updates.size();
  if (n < 2 * f + 3) throw AggregationError("krum: need at least 2f+3 updates");
  const std::size_t dim = updates.front().params.size();
  for (const auto& u : updates)
    if (u.params.size() != dim) throw AggregationError("krum: updates have different lengths");
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = squared_distance(updates[i].params, updates[j].params);
  const std::size_t keep = n - f - 2;
  std::vector<double> scores(n, 0.0), row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row.push_back(dist[i][j]);
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(keep), row.end());
    for (std::size_t k = 0; k < keep; ++k) scores[i] += row[k];
  }
  return scores;
}

/// Index of the Krum-selected update; ties go to the lowest client id.
inline std::size_t krum_select(std::span<const ModelUpdate> updates, std::size_t f) {
  const auto scores = krum_scores(updates, f);
  std::size_t best = 0;
  for (std::size_t i = 1; i < updates.size(); ++i) {
    if (scores[i] < scores[best] || (scores[i] == scores[best] && updates[i].client < updates[best].client)) best = i;
  }
  return best;
}

inline ModelUpdate krum_aggregate(std::span<const ModelUpdate> updates, std::size_t f) {
  return updates[krum_select(updates, f)];
}

inline ModelUpdate fedavg_aggregate(std::span<const ModelUpdate> updates) {
  if (updates.empty()) throw AggregationError("fedavg: no updates");
  const std::size_t dim = updates.front().params.size();
  ModelUpdate out;
  out.client = std::numeric_limits<std::uint32_t>::max();
  out.params.assign(dim, 0.0);
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.params.size() != dim) throw AggregationError("fedavg: updates have different lengths");
    total += static_cast<double>(u.sample_count);
  }
  for (const auto& u : updates) {
    const double w = static_cast<double>(u.sample_count) / total;
    for (std::size_t k = 0; k < dim; ++k) out.params[k] += w * u.params[k];
  }
  out.sample_count = static_cast<std::size_t>(total);
  return out;
}

inline std::size_t default_byzantine_count(std::size_t participants) {
  return static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(participants)));
}

// ---------------------------------------------------------------------------
// Compressed transport

/// Keeps the k largest-magnitude entries (ties to the lower index).
inline std::vector<double> top_k(std::span<const double> v, std::size_t k) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  k = std::min(k, v.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), [&](std::size_t a, std::size_t b) {
    const double fa = std::abs(v[a]), fb = std::abs(v[b]);
    return fa != fb ? fa > fb : a < b;
  });
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) out[order[i]] = v[order[i]];
  return out;
}

/// Sparsity the pursuit can reliably recover at m = 0.3 n measurements.
inline std::size_t recoverable_sparsity(std::size_t n) {
  if (n < 2) return n;
  const double m = static_cast<double>(measurement_count(n));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(m / (2.0 * std::log(static_cast<double>(n))))));
}

/// Client-side encoder with error feedback: the part of each update that the
/// sparsifier drops is carried into the next round.
struct CompressedChannel {
  const SensingMatrix* phi = nullptr;
  std::vector<std::vector<double>> residual;  // per client

  std::vector<double> send(std::uint32_t client, std::span<const double> update, std::uint64_t& bytes) {
    if (phi == nullptr || phi->cols() != update.size()) throw ContractError("compressed channel: matrix/update mismatch");
    if (residual.size() <= client) residual.resize(client + 1);
    auto& r = residual[client];
    if (r.size() != update.size()) r.assign(update.size(), 0.0);
    std::vector<double> full(update.begin(), update.end());
    for (std::size_t k = 0; k < full.size(); ++k) full[k] += r[k];
    const auto sparse = top_k(full, recoverable_sparsity(full.size()));
    const auto y = compress(sparse, *phi);
    bytes = static_cast<std::uint64_t>(y.size()) * 8u;
    const auto rec = reconstruct(y, *phi, recoverable_sparsity(full.size()));
    for (std::size_t k = 0; k < full.size(); ++k) r[k] = full[k] - rec.x[k];
    return rec.x;
  }
};

// ---------------------------------------------------------------------------
// Rounds

enum class Aggregator : std::uint8_t { kKrum, kFedAvg };

enum class Participation : std::uint8_t { kAll, kFreshest };

struct FlClient {
  std::uint32_t id = 0;
  Dataset data;
  double last_data_s = 0.0;
  bool byzantine = false;
};

struct RoundOptions {
  Aggregator aggregator = Aggregator::kKrum;
  Participation participation = Participation::kFreshest;
  std::size_t max_participants = 10;
  bool compress = false;
  /// Assumed Byzantine count; empty = floor(0.3 * participants).
  std::optional<std::size_t> f;
  double byzantine_scale = 10.0;
  /// A participant is flagged when its Krum score exceeds this multiple of the median score.
  double flag_ratio = 10.0;
  TrainOptions train{};
};

struct AggregationRound {
  std::size_t index = 0;
  std::vector<std::uint32_t> participants;
  std::size_t f = 0;
  bool aborted = false;
  std::optional<std::uint32_t> selected;
  /// Participants whose Krum score is an outlier (see RoundOptions::flag_ratio).
  std::vector<std::uint32_t> flagged;
  double accuracy = 0.0;
  std::uint64_t bytes_on_wire = 0;
  std::vector<double> aggregate;
};

/// 1 - mean|prediction - target| / mean|target| over the evaluation set.
inline double demand_accuracy(const Mlp& model, const Dataset& eval) {
  double err = 0.0, mag = 0.0;
  for (const auto& s : eval) {
    const auto p = model.forward(s.x);
    for (std::size_t k = 0; k < p.size(); ++k) {
      err += std::abs(p[k] - s.y[k]);
      mag += std::abs(s.y[k]);
    }
  }
  if (mag <= 0.0) return err <= 0.0 ? 1.0 : 0.0;
  return 1.0 - err / mag;
}

inline std::vector<std::size_t> select_participants(std::span<const FlClient> clients, const RoundOptions& opt) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < clients.size(); ++i)
    if (!clients[i].data.empty()) idx.push_back(i);
  if (opt.participation == Participation::kFreshest) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (clients[a].last_data_s != clients[b].last_data_s) return clients[a].last_data_s > clients[b].last_data_s;
      return clients[a].id < clients[b].id;
    });
    if (idx.size() > opt.max_participants) idx.resize(opt.max_participants);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

/// One round: local training, optional Byzantine corruption and compression,
/// aggregation, global update and evaluation. Aborted rounds leave the
/// global model untouched.
inline AggregationRound run_round(Mlp& global, std::span<const FlClient> clients, const Dataset& eval,
                                  const RoundOptions& opt, std::size_t round_index,
                                  CompressedChannel* channel = nullptr) {
  AggregationRound round;
  round.index = round_index;
  const auto chosen = select_participants(clients, opt);
  if (chosen.empty()) throw AggregationError("run_round: no eligible client");

  std::vector<ModelUpdate> updates;
  updates.reserve(chosen.size());
  for (std::size_t i : chosen) {
    const auto& c = clients[i];
    auto u = train_local(global, c.data, c.id, opt.train);
    if (!u) continue;
    if (c.byzantine) {
      const auto g = global.params();
      for (std::size_t k = 0; k < g.size(); ++k) u->params[k] = g[k] - opt.byzantine_scale * (u->params[k] - g[k]);
    }
    if (opt.compress) {
      if (channel == nullptr) throw ContractError("run_round: compression requested without a channel");
      u->params = channel->send(c.id, u->params, u->bytes_on_wire);
    }
    if (!finite(u->params)) throw InvariantViolation("run_round: non-finite model update");
    round.bytes_on_wire += u->bytes_on_wire;
    round.participants.push_back(c.id);
    updates.push_back(std::move(*u));
  }
  round.f = opt.f.value_or(default_byzantine_count(updates.size()));

  try {
    ModelUpdate agg;
    if (opt.aggregator == Aggregator::kKrum) {
      const auto scores = krum_scores(updates, round.f);
      const std::size_t best = krum_select(updates, round.f);
      agg = updates[best];
      round.selected = updates[best].client;
      std::vector<double> sorted = scores;
      std::sort(sorted.begin(), sorted.end());
      const double median = sorted[sorted.size() / 2];
      for (std::size_t i = 0; i < updates.size(); ++i)
        if (scores[i] > opt.flag_ratio * median) round.flagged.push_back(updates[i].client);
      std::sort(round.flagged.begin(), round.flagged.end());
    } else {
      agg = fedavg_aggregate(updates);
    }
    auto p = global.params();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] += agg.params[k];
    round.aggregate = std::move(agg.params);
  } catch (const AggregationError&) {
    round.aborted = true;
  }
  round.accuracy = demand_accuracy(global, eval);
  return round;
}

/// 1-based index of the first round with accuracy >= threshold.
inline std::optional<std::size_t> rounds_to_accuracy(std::span<const double> history, double threshold = 0.95) {
  for (std::size_t i = 0; i < history.size(); ++i)
    if (history[i] >= threshold) return i + 1;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Demand windows

/// One training sample from a window series: lags [t-L, t) predict t.
/// Rates are normalized by `scale`; hour_of_day encodes the diurnal phase.
inline Sample demand_sample(std::span<const double> series, std::size_t t, double scale, double hour_of_day) {
  Sample s;
  s.x.resize(kDemandFeatures);
  for (std::size_t k = 0; k < kDemandLags; ++k) s.x[k] = series[t - kDemandLags + k] / scale;
  const double ang = 2.0 * std::numbers::pi * hour_of_day / 24.0;
  s.x[kDemandLags] = std::sin(ang);
  s.x[kDemandLags + 1] = std::cos(ang);
  s.y = {series[t] / scale};
  return s;
}

/// Synthetic per-client demand: level * (1 + a sin(phase)) with AR(1) noise.
/// Clients differ in level and amplitude; the evaluation set uses held-out draws.
struct SyntheticDemand {
  std::size_t windows = 120;
  double amplitude = 0.3;
  double noise = 0.02;

  std::pair<Dataset, std::vector<double>> client_series(std::uint32_t client, std::uint64_t seed) const {
    Rng rng = Rng::stream(seed, StreamKey::kFederated, client + 1);
    const double level = 0.8 + 0.4 * rng.uniform();
    const double amp = amplitude * (0.5 + rng.uniform());
    const double phase0 = rng.uniform() * 24.0;
    std::vector<double> series(windows), hours(windows);
    double e = 0.0;
    for (std::size_t t = 0; t < windows; ++t) {
      hours[t] = std::fmod(phase0 + 0.2 * static_cast<double>(t), 24.0);
      e = 0.7 * e + noise * rng.normal();
      series[t] = level * (1.0 + amp * std::sin(2.0 * std::numbers::pi * hours[t] / 24.0)) + e;
    }
    Dataset d;
    for (std::size_t t = kDemandLags; t < windows; ++t) d.push_back(demand_sample(series, t, 1.0, hours[t]));
    return {d, series};
  }

  std::vector<FlClient> clients(std::size_t n, std::uint64_t seed) const {
    std::vector<FlClient> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i].id = static_cast<std::uint32_t>(i);
      out[i].data = client_series(static_cast<std::uint32_t>(i), seed).first;
      out[i].last_data_s = static_cast<double>(windows);
    }
    return out;
  }

  Dataset evaluation(std::size_t n_series, std::uint64_t seed) const {
    Dataset eval;
    for (std::size_t i = 0; i < n_series; ++i) {
      auto d = client_series(static_cast<std::uint32_t>(100000 + i), seed).first;
      eval.insert(eval.end(), d.begin(), d.end());
    }
    return eval;
  }
};

}  // namespace edgetwin
