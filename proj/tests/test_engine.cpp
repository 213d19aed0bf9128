#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "edgetwin/engine.hpp"

using namespace edgetwin;

namespace {

Scenario tiny(std::uint64_t n_devices = 30, double duration_s = 2.0) {
  Scenario sc;
  sc.network.n_devices = n_devices;
  sc.network.n_gnbs = 2;
  sc.network.area_km2 = 0.01;
  sc.duration_s = duration_s;
  sc.replications = 1;
  return sc;
}

bool same_rows(const MetricsReport& a, const MetricsReport& b) {
  const auto ra = a.rows(), rb = b.rows();
  if (ra.size() != rb.size()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (ra[i].metric != rb[i].metric || ra[i].slice != rb[i].slice || ra[i].value != rb[i].value) return false;
  return true;
}

}  // namespace

TEST(Percentile, Examples) {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i + 1;
  EXPECT_DOUBLE_EQ(*percentile(v, 99), 99.0);
  EXPECT_DOUBLE_EQ(*percentile(v, 100), 100.0);
  const std::vector<double> one{4.5};
  for (double p : {1.0, 50.0, 99.0}) EXPECT_DOUBLE_EQ(*percentile(one, p), 4.5);
  EXPECT_FALSE(percentile(std::vector<double>{}, 50).has_value());
  EXPECT_THROW(percentile(v, 0.0), ContractError);
}

TEST(Percentile, MatchesSortOracle) {
  Rng rng(1);
  std::vector<double> v(10000);
  for (auto& x : v) x = rng.normal();
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int tenths : {10, 250, 500, 900, 990, 999}) {
    const std::size_t rank = (static_cast<std::size_t>(tenths) * 10000 + 999) / 1000;
    EXPECT_EQ(*percentile(v, tenths / 10.0), sorted[rank - 1]) << tenths;
  }
}

TEST(SlaCompliance, Examples) {
  EXPECT_DOUBLE_EQ(*sla_compliance(std::vector<double>{0.1, 0.2}, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(*sla_compliance(std::vector<double>{0.1, 2.0, 0.3, 5.0}, 1.0), 0.5);
  const std::vector<double> v{2.0, 2.0, 3.0, 7.0};
  EXPECT_DOUBLE_EQ(*sla_compliance(v, 2.0), 0.5);
  EXPECT_FALSE(sla_compliance(std::vector<double>{}, 1.0).has_value());
}

TEST(ReservoirTest, ExactCountersBeyondCapacity) {
  Reservoir r(100, 3);
  r.set_bound(0.5);
  Rng rng(3);
  std::size_t within = 0;
  double mx = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform();
    within += x <= 0.5;
    mx = std::max(mx, x);
    r.add(x);
  }
  EXPECT_EQ(r.seen(), 10000u);
  EXPECT_EQ(r.samples().size(), 100u);
  EXPECT_DOUBLE_EQ(*r.exact_compliance(), static_cast<double>(within) / 10000.0);
  EXPECT_EQ(r.max(), mx);
}

TEST(Run, ZeroDevicesAllZero) {
  const auto r = run(tiny(0, 1.0), 1);
  for (Slice s : kAllSlices) {
    EXPECT_EQ(r.offered_bytes[idx(s)], 0.0);
    EXPECT_EQ(r.served_bytes[idx(s)], 0.0);
    EXPECT_EQ(r.latency[idx(s)].count, 0u);
  }
  EXPECT_EQ(r.grid_j, 0.0);
  EXPECT_EQ(r.renewable_j, 0.0);
  for (const auto& row : r.rows()) EXPECT_TRUE(std::isfinite(row.value)) << row.metric;
}

TEST(Run, SingleUrllcDeviceIsFast) {
  Scenario sc = tiny(1, 2.0);
  sc.network.n_gnbs = 1;
  sc.network.class_mix = {0.0, 0.0, 1.0};
  const auto r = run(sc, 1);
  const auto& lat = r.latency[idx(Slice::kLss)];
  EXPECT_GT(lat.count, 1900u);
  ASSERT_TRUE(lat.p99.has_value());
  EXPECT_LT(*lat.p99, 1e-3);
}

TEST(Run, DeterministicPerSeed) {
  const auto sc = tiny();
  const auto a = run(sc, 1), b = run(sc, 1), c = run(sc, 2);
  EXPECT_TRUE(same_rows(a, b));
  EXPECT_FALSE(same_rows(a, c));
}

TEST(Run, ConservationAndBounds) {
  for (auto policy : {PolicyKind::kHybrid, PolicyKind::kStatic, PolicyKind::kHrass, PolicyKind::kFedAvgHybrid}) {
    Scenario sc = tiny(60, 3.0);
    sc.policy = policy;
    const auto r = run(sc, 4);
    double slice_grid = 0.0, slice_ren = 0.0;
    for (Slice s : kAllSlices) {
      const auto i = idx(s);
      EXPECT_LE(r.served_bytes[i], r.offered_bytes[i] + 1e-6);
      EXPECT_NEAR(r.served_bytes[i] + r.dropped_bytes[i] + r.backlog_bytes[i], r.offered_bytes[i],
                  1e-9 * std::max(1.0, r.offered_bytes[i]));
      for (double x : r.latency_samples[i]) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, sc.duration_s);
      }
      slice_grid += r.slice_grid_j[i];
      slice_ren += r.slice_renewable_j[i];
      for (double f : r.allocated_fraction[i]) EXPECT_LE(f, 1.0 + 1e-9);
    }
    EXPECT_NEAR(slice_grid, r.grid_j, 1e-9 * std::max(1.0, r.grid_j));
    EXPECT_NEAR(slice_ren, r.renewable_j, 1e-9 * std::max(1.0, r.renewable_j));
  }
}

TEST(Run, StaticUtilizationMatchesPartition) {
  Scenario sc = tiny();
  sc.policy = PolicyKind::kStatic;
  const auto r = run(sc, 1);
  const double split[3] = {0.40, 0.35, 0.25};
  for (std::size_t s = 0; s < kNumSlices; ++s)
    for (double f : r.allocated_fraction[s]) EXPECT_NEAR(f, split[s], 1e-12);
}

TEST(Run, TwinSyncIsCompressed) {
  const auto r = run(tiny(30, 3.0), 1);
  EXPECT_GT(r.twin_raw_bytes, 0u);
  EXPECT_DOUBLE_EQ(r.compression_ratio(), 0.3);
  EXPECT_LT(r.twin_recovery_error, 1e-6);
  Scenario off = tiny(30, 3.0);
  off.flags.compression = false;
  EXPECT_DOUBLE_EQ(run(off, 1).compression_ratio(), 1.0);
}

TEST(Run, ImpersonatorsAreQuarantinedAndDropped) {
  Scenario sc = tiny(100, 5.0);
  sc.attacks.adversary_fraction = 0.3;
  sc.attacks.impersonation = true;
  sc.reauth_interval_s = 1.0;
  const auto attacked = run(sc, 3);
  EXPECT_GE(attacked.quarantines, 25u);
  ASSERT_TRUE(attacked.security.per_attack_rate.at(AttackType::kImpersonation).has_value());
  EXPECT_DOUBLE_EQ(*attacked.security.per_attack_rate.at(AttackType::kImpersonation), 1.0);
  EXPECT_EQ(attacked.security.false_positive, 0u);
  double dropped = 0.0;
  for (double d : attacked.dropped_bytes) dropped += d;
  EXPECT_GT(dropped, 0.0);

  Scenario clean = sc;
  clean.attacks.adversary_fraction = 0.0;
  const auto honest = run(clean, 3);
  EXPECT_EQ(honest.quarantines, 0u);
  for (double d : honest.dropped_bytes) EXPECT_EQ(d, 0.0);
}

TEST(Run, BaselinesSkipVerification) {
  Scenario sc = tiny(100, 3.0);
  sc.attacks.adversary_fraction = 0.3;
  sc.attacks.impersonation = true;
  sc.reauth_interval_s = 1.0;
  sc.policy = PolicyKind::kStatic;
  EXPECT_EQ(run(sc, 3).quarantines, 0u);
}

TEST(Run, FederatedRoundsHappen) {
  Scenario sc = tiny(60, 25.0);
  const auto r = run(sc, 2);
  EXPECT_EQ(r.fl_rounds.size(), 2u);
  EXPECT_GT(r.fl_bytes, 0u);
}

TEST(Replicate, SingleReplicationHasZeroSpread) {
  const auto rep = replicate(tiny());
  ASSERT_EQ(rep.runs.size(), 1u);
  for (const auto& m : rep.metrics) {
    EXPECT_EQ(m.summary.sd, 0.0);
    EXPECT_EQ(m.summary.ci95, 0.0);
  }
}

TEST(Replicate, IdenticalSeedsHaveZeroSpread) {
  const auto sc = tiny();
  const auto agg = aggregate({run(sc, 5), run(sc, 5), run(sc, 5)});
  for (const auto& m : agg) EXPECT_EQ(m.summary.sd, 0.0) << m.metric;
}

TEST(Replicate, ConfidenceIntervalMatchesTextbookFormula) {
  Scenario sc = tiny(30, 1.0);
  sc.replications = 10;
  const auto rep = replicate(sc);
  ASSERT_EQ(rep.runs.size(), 10u);
  for (const char* metric : {"latency_p99_ms", "served_bytes", "grid_energy_j"}) {
    const auto* m = rep.find(metric, "LSS");
    ASSERT_NE(m, nullptr);
    long double sum = 0.0L, sq = 0.0L;
    std::vector<double> xs;
    for (const auto& r : rep.runs)
      for (const auto& row : r.rows())
        if (row.metric == metric && row.slice == "LSS") xs.push_back(row.value);
    ASSERT_EQ(xs.size(), 10u);
    for (double x : xs) sum += x;
    const long double mean = sum / 10.0L;
    for (double x : xs) sq += (x - mean) * (x - mean);
    const double sd = static_cast<double>(std::sqrt(sq / 9.0L));
    EXPECT_NEAR(m->summary.mean, static_cast<double>(mean), 1e-12 * std::max(1.0, std::abs(m->summary.mean)));
    EXPECT_NEAR(m->summary.ci95, 1.96 * sd / std::sqrt(10.0), 1e-9 * std::max(1.0, sd));
  }
}

TEST(Sweep, SingleDensityMatchesRun) {
  Scenario sc = tiny(30, 2.0);
  const std::vector<double> d{3000.0};
  const auto rows = density_sweep(sc, d);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].n_devices, 30u);
  const auto r = run(sc, sc.master_seed);
  EXPECT_DOUBLE_EQ(rows[0].p99_lss_ms.mean, r.latency[idx(Slice::kLss)].p99.value_or(0.0) * 1e3);
}

TEST(Sweep, UnsortedDensitiesRejected) {
  const std::vector<double> d{2.0, 1.0};
  EXPECT_THROW(density_sweep(tiny(), d), ConfigError);
}

TEST(ScenarioValidation, RejectsBadValues) {
  Scenario sc = tiny();
  sc.duration_s = -1.0;
  EXPECT_THROW(sc.validate(), ConfigError);
  Scenario mix = tiny();
  mix.network.class_mix = {0.5, 0.5, 0.5};
  EXPECT_THROW(run(mix, 1), ConfigError);
}
