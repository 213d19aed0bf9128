#include <gtest/gtest.h>

#include <cmath>

#include "edgetwin/federated.hpp"

using namespace edgetwin;

namespace {

ModelUpdate upd(std::uint32_t id, std::vector<double> p, std::size_t count = 1) {
  ModelUpdate u;
  u.client = id;
  u.params = std::move(p);
  u.sample_count = count;
  return u;
}

Dataset linear_data(std::size_t n, Rng& rng) {
  const double c[kDemandFeatures] = {0.3, 0.1, -0.2, 0.25, 0.05, 0.1};
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.x.resize(kDemandFeatures);
    double y = 0.2;
    for (std::size_t k = 0; k < kDemandFeatures; ++k) {
      s.x[k] = rng.uniform();
      y += c[k] * s.x[k];
    }
    s.y = {y};
    d.push_back(s);
  }
  return d;
}

// Brute-force Krum score: sum of the n-f-2 smallest squared distances.
std::vector<double> oracle_scores(const std::vector<ModelUpdate>& u, std::size_t f) {
  std::vector<double> out;
  for (std::size_t i = 0; i < u.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < u[i].params.size(); ++k) s += (u[i].params[k] - u[j].params[k]) * (u[i].params[k] - u[j].params[k]);
      d.push_back(s);
    }
    std::sort(d.begin(), d.end());
    double t = 0.0;
    for (std::size_t k = 0; k < u.size() - f - 2; ++k) t += d[k];
    out.push_back(t);
  }
  return out;
}

std::vector<double> trajectory(const SyntheticDemand& gen, std::size_t n_byz, Aggregator agg, std::size_t rounds) {
  auto clients = gen.clients(10, 5);
  for (std::size_t i = 0; i < n_byz; ++i) clients[i * 3].byzantine = true;
  const auto eval = gen.evaluation(4, 5);
  Rng rng = Rng::stream(5, StreamKey::kFederated);
  Mlp global = make_local_model();
  global.init(rng);
  RoundOptions opt;
  opt.aggregator = agg;
  opt.participation = Participation::kAll;
  opt.f = 3;
  std::vector<double> acc;
  for (std::size_t r = 0; r < rounds; ++r) acc.push_back(run_round(global, clients, eval, opt, r).accuracy);
  return acc;
}

}  // namespace

TEST(TrainLocal, EmptyDataSkipsRound) {
  EXPECT_FALSE(train_local(make_local_model(), Dataset{}, 0, TrainOptions{}).has_value());
}

TEST(TrainLocal, ConstantTargetConverges) {
  Rng rng(1);
  Mlp m = make_local_model();
  m.init(rng);
  Dataset d;
  for (int i = 0; i < 50; ++i) {
    Sample s;
    for (std::size_t k = 0; k < kDemandFeatures; ++k) s.x.push_back(rng.uniform());
    s.y = {0.6};
    d.push_back(s);
  }
  std::vector<double> hist;
  const auto u = train_local(m, d, 3, TrainOptions{200, 0.1}, &hist);
  ASSERT_TRUE(u.has_value());
  EXPECT_LT(hist.back(), 1e-3);
  EXPECT_EQ(u->client, 3u);
  EXPECT_EQ(u->sample_count, 50u);
  EXPECT_EQ(u->bytes_on_wire, m.param_count() * 8u);
  for (std::size_t i = 1; i < hist.size(); ++i) EXPECT_LE(hist[i], hist[i - 1]);
}

TEST(TrainLocal, LinearDemandHeldOutError) {
  Rng rng(2);
  const auto train = linear_data(200, rng);
  const auto hold = linear_data(100, rng);
  Mlp m = make_local_model();
  m.init(rng);
  const auto u = train_local(m, train, 0, TrainOptions{50, 0.5});
  ASSERT_TRUE(u.has_value());
  Mlp trained = m;
  auto p = trained.params();
  for (std::size_t k = 0; k < p.size(); ++k) p[k] += u->params[k];
  EXPECT_GT(demand_accuracy(trained, hold), 0.9);
}

TEST(TrainLocal, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  Mlp m = make_local_model();
  m.init(rng);
  const auto data = SyntheticDemand{}.client_series(0, 3).first;
  const auto g = m.gradient(data);
  std::vector<double> p(m.params().begin(), m.params().end());
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto k = rng.below(p.size());
    const double h = 1e-5;
    auto q = p;
    q[k] = p[k] + h;
    const double up = m.loss_at(q, data);
    q[k] = p[k] - h;
    const double dn = m.loss_at(q, data);
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g[k]) / std::max({std::abs(fd), std::abs(g[k]), 1e-6}));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Krum, IdenticalUpdatesReturnThatUpdate) {
  std::vector<ModelUpdate> u;
  for (std::uint32_t i = 0; i < 5; ++i) u.push_back(upd(4 - i, {1.5, -2.0, 0.25}));
  const auto a = krum_aggregate(u, 1);
  EXPECT_EQ(a.params, (std::vector<double>{1.5, -2.0, 0.25}));
  EXPECT_EQ(u[krum_select(u, 1)].client, 0u);
}

TEST(Krum, TiesGoToLowestClientId) {
  std::vector<ModelUpdate> u;
  for (std::uint32_t i = 0; i < 5; ++i) u.push_back(upd(9 - i, {1.0}));
  EXPECT_EQ(krum_aggregate(u, 1).client, 5u);
}

TEST(Krum, OutlierNeverSelected) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ModelUpdate> u;
    for (std::uint32_t i = 0; i < 4; ++i) {
      std::vector<double> v(3);
      for (auto& x : v) x = rng.uniform(-0.05, 0.05);
      u.push_back(upd(i, v));
    }
    u.push_back(upd(4, {100.0, 0.0, 0.0}));
    const auto scores = krum_scores(u, 1);
    const auto oracle = oracle_scores(u, 1);
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(scores[i], oracle[i], 1e-9);
    const auto best = static_cast<std::size_t>(std::min_element(oracle.begin(), oracle.end()) - oracle.begin());
    EXPECT_EQ(krum_select(u, 1), best);
    EXPECT_NE(krum_aggregate(u, 1).client, 4u);
  }
}

TEST(Krum, TooFewUpdates) {
  std::vector<ModelUpdate> u(4, upd(0, {1.0}));
  EXPECT_THROW(krum_aggregate(u, 1), AggregationError);
}

TEST(Krum, PermutationInvariantAndReturnsAnInput) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ModelUpdate> u;
    for (std::uint32_t i = 0; i < 9; ++i) u.push_back(upd(i, {rng.normal(), rng.normal(), rng.normal()}));
    const auto a = krum_aggregate(u, 2);
    std::vector<ModelUpdate> v(u.rbegin(), u.rend());
    EXPECT_EQ(krum_aggregate(v, 2).client, a.client);
    bool found = false;
    for (const auto& x : u) found = found || x.params == a.params;
    EXPECT_TRUE(found);
  }
}

TEST(FedAvg, Examples) {
  std::vector<ModelUpdate> two{upd(0, {1.0}), upd(1, {3.0})};
  EXPECT_DOUBLE_EQ(fedavg_aggregate(two).params[0], 2.0);
  std::vector<ModelUpdate> one{upd(0, {4.0, -1.0})};
  EXPECT_EQ(fedavg_aggregate(one).params, (std::vector<double>{4.0, -1.0}));
  std::vector<ModelUpdate> weighted{upd(0, {0.0}, 1), upd(1, {4.0}, 3)};
  EXPECT_DOUBLE_EQ(fedavg_aggregate(weighted).params[0], 3.0);
  EXPECT_THROW(fedavg_aggregate(std::vector<ModelUpdate>{}), AggregationError);
}

TEST(FedAvg, AffineEquivariance) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ModelUpdate> u, v;
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
    for (std::uint32_t i = 0; i < 6; ++i) {
      const double x = rng.normal();
      const auto n = 1 + rng.below(5);
      u.push_back(upd(i, {x}, n));
      v.push_back(upd(i, {a * x + b}, n));
    }
    EXPECT_NEAR(fedavg_aggregate(v).params[0], a * fedavg_aggregate(u).params[0] + b, 1e-9);
  }
}

TEST(Compression, ThirtyPercentOfRawBytes) {
  SensingMatrix phi(1000, 11);
  CompressedChannel ch{&phi, {}};
  Rng rng(8);
  std::vector<double> u(1000);
  for (auto& v : u) v = rng.normal();
  std::uint64_t bytes = 0;
  const auto rec = ch.send(0, u, bytes);
  EXPECT_EQ(bytes, 2400u);
  EXPECT_EQ(bytes * 10, 3u * 1000u * 8u);
  EXPECT_EQ(rec.size(), 1000u);
}

TEST(Compression, SparseUpdatesPassThrough) {
  SensingMatrix phi(1000, 12);
  CompressedChannel ch{&phi, {}};
  std::vector<double> u(1000, 0.0);
  u[3] = 1.0;
  u[700] = -2.0;
  std::uint64_t bytes = 0;
  const auto rec = ch.send(1, u, bytes);
  for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(rec[k], u[k], 1e-9);
}

TEST(Compression, RoundBytesScaleWithParticipants) {
  const SyntheticDemand gen;
  const auto clients = gen.clients(5, 1);
  Mlp global = make_local_model();
  Rng rng(9);
  global.init(rng);
  SensingMatrix phi(global.param_count(), 4);
  CompressedChannel ch{&phi, {}};
  RoundOptions opt;
  opt.aggregator = Aggregator::kFedAvg;
  opt.compress = true;
  const auto r = run_round(global, clients, gen.evaluation(1, 1), opt, 0, &ch);
  EXPECT_EQ(r.bytes_on_wire, 5u * measurement_count(global.param_count()) * 8u);
}

TEST(Rounds, KrumTracksAttackFreeRun) {
  const SyntheticDemand gen;
  const auto clean = trajectory(gen, 0, Aggregator::kKrum, 15);
  const auto attacked = trajectory(gen, 3, Aggregator::kKrum, 15);
  for (std::size_t r = 0; r < clean.size(); ++r) EXPECT_NEAR(attacked[r], clean[r], 0.02) << "round " << r;
}

TEST(Rounds, FedAvgDegradesUnderAttack) {
  const SyntheticDemand gen;
  const auto clean = trajectory(gen, 0, Aggregator::kFedAvg, 15);
  const auto attacked = trajectory(gen, 3, Aggregator::kFedAvg, 15);
  EXPECT_LT(attacked.back(), clean.back() - 0.1);
}

TEST(Rounds, KrumFlagsByzantineClients) {
  const SyntheticDemand gen;
  auto clients = gen.clients(10, 5);
  for (std::size_t i : {0u, 3u, 6u}) clients[i].byzantine = true;
  Mlp global = make_local_model();
  Rng rng(5);
  global.init(rng);
  RoundOptions opt;
  opt.participation = Participation::kAll;
  const auto r = run_round(global, clients, gen.evaluation(1, 5), opt, 0);
  ASSERT_TRUE(r.selected.has_value());
  EXPECT_NE(*r.selected % 3, 0u);
  EXPECT_EQ(r.flagged, (std::vector<std::uint32_t>{0, 3, 6}));
}

TEST(Rounds, TooFewParticipantsAbortsAndKeepsModel) {
  const SyntheticDemand gen;
  const auto clients = gen.clients(4, 2);
  Mlp global = make_local_model();
  Rng rng(5);
  global.init(rng);
  const std::vector<double> before(global.params().begin(), global.params().end());
  RoundOptions opt;
  opt.f = 1;
  const auto r = run_round(global, clients, gen.evaluation(1, 2), opt, 0);
  EXPECT_TRUE(r.aborted);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), global.params().begin()));
}

TEST(Rounds, FreshestParticipantsSelected) {
  SyntheticDemand gen;
  auto clients = gen.clients(12, 3);
  for (std::size_t i = 0; i < clients.size(); ++i) clients[i].last_data_s = static_cast<double>(i % 4);
  RoundOptions opt;
  opt.max_participants = 3;
  const auto idx = select_participants(clients, opt);
  EXPECT_EQ(idx, (std::vector<std::size_t>{3, 7, 11}));
}

TEST(RoundsToAccuracy, Examples) {
  const std::vector<double> h{0.9, 0.94, 0.96};
  EXPECT_EQ(rounds_to_accuracy(h), 3u);
  const std::vector<double> low{0.5, 0.9};
  EXPECT_FALSE(rounds_to_accuracy(low).has_value());
  EXPECT_EQ(rounds_to_accuracy(low, 0.0), 1u);
}
