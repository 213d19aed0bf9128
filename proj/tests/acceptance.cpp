// Acceptance checks AC1..AC10. One PASS/FAIL line each; exit status is the
// number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "edgetwin/engine.hpp"
#include "edgetwin/io.hpp"

namespace fs = std::filesystem;
using namespace edgetwin;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool g_invariant_fired = false;
std::string g_invariant_msg;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Scenario scenario(const std::string& name) { return load_scenario(std::string(EDGETWIN_SCENARIO_DIR) + "/" + name); }

double lss_p99_ms(const MetricsReport& r) { return r.latency[idx(Slice::kLss)].p99.value_or(0.0) * 1e3; }

std::vector<MetricsReport> runs_for(Scenario sc, PolicyKind p) {
  sc.policy = p;
  return replicate(sc).runs;
}

// ---------------------------------------------------------------------------

Outcome ac1() {
  bool ok = true;
  std::string d;
  for (auto pr : {SyncPriority::kLow, SyncPriority::kNormal, SyncPriority::kHigh}) {
    const double ratio = static_cast<double>(sync_cost(1000, pr, true)) / static_cast<double>(sync_cost(1000, pr, false));
    ok = ok && ratio == 0.3;
  }
  Scenario sc = scenario("desk.json");
  sc.duration_s = 5.0;
  const auto r = run(sc, 1);
  ok = ok && r.compression_ratio() == 0.3 && r.twin_raw_bytes > 0;
  d = fmt("n=1000: %llu B compressed vs %llu B raw; engine ratio %.6f over %llu raw bytes",
          static_cast<unsigned long long>(sync_cost(1000, SyncPriority::kNormal, true)),
          static_cast<unsigned long long>(sync_cost(1000, SyncPriority::kNormal, false)), r.compression_ratio(),
          static_cast<unsigned long long>(r.twin_raw_bytes));
  return {ok, d};
}

Outcome ac2() {
  SensingMatrix phi(1000, 2024);
  Rng rng = Rng::stream(2024, StreamKey::kSensing, 1);
  int ok = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(1000, 0.0);
    for (int placed = 0; placed < 10;) {
      const auto i = rng.below(1000);
      if (x[i] != 0.0) continue;
      x[i] = rng.normal() + (rng.uniform() < 0.5 ? -1.0 : 1.0);
      ++placed;
    }
    const auto rec = reconstruct(compress(x, phi), phi, 10);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      num += (rec.x[k] - x[k]) * (rec.x[k] - x[k]);
      den += x[k] * x[k];
    }
    const double err = std::sqrt(num / den);
    worst = std::max(worst, err);
    ok += err < 1e-6;
  }
  return {ok >= 99, fmt("%d/100 trials below 1e-6 (worst %.2e)", ok, worst)};
}

Outcome ac3() {
  const SyntheticDemand gen;
  int krum_ok = 0, fedavg_ok = 0;
  double min_ratio = 1e300;
  for (std::uint64_t round = 0; round < 100; ++round) {
    const std::uint64_t seed = 1000 + round;
    const auto clients = gen.clients(10, seed);
    Rng rng = Rng::stream(seed, StreamKey::kAttack);
    Mlp global = make_local_model();
    global.init(rng);
    std::vector<bool> bad(10, false);
    for (int k = 0; k < 3;) {
      const auto i = rng.below(10);
      if (bad[i]) continue;
      bad[i] = true;
      ++k;
    }
    std::vector<ModelUpdate> updates;
    for (const auto& c : clients) {
      auto u = train_local(global, c.data, c.id, TrainOptions{});
      if (bad[c.id]) byzantine_corrupt(u->params, global.params(), 10.0);
      updates.push_back(std::move(*u));
    }
    const auto chosen = krum_aggregate(updates, 3);
    krum_ok += !bad[chosen.client];

    const std::size_t dim = updates.front().params.size();
    std::vector<double> honest(dim, 0.0);
    for (const auto& u : updates)
      if (!bad[u.client])
        for (std::size_t k = 0; k < dim; ++k) honest[k] += u.params[k] / 7.0;
    double spread = 0.0;
    for (const auto& u : updates)
      if (!bad[u.client]) spread = std::max(spread, std::sqrt(squared_distance(u.params, honest)));
    const auto avg = fedavg_aggregate(updates);
    const double dev = std::sqrt(squared_distance(avg.params, honest));
    const double ratio = spread > 0.0 ? dev / spread : 1e300;
    min_ratio = std::min(min_ratio, ratio);
    fedavg_ok += ratio > 10.0;
  }
  return {krum_ok == 100 && fedavg_ok == 100,
          fmt("Krum picked an honest update in %d/100 rounds; FedAvg deviation > 10x honest spread in %d/100 "
              "(min ratio %.1f)",
              krum_ok, fedavg_ok, min_ratio)};
}

Outcome ac4() {
  const Scenario desk = scenario("desk.json");
  const auto hybrid = runs_for(desk, PolicyKind::kHybrid);
  double worst = 0.0;
  for (const auto& r : hybrid) worst = std::max(worst, lss_p99_ms(r));

  const Scenario over = scenario("overload.json");
  const auto h = runs_for(over, PolicyKind::kHybrid);
  const auto s = runs_for(over, PolicyKind::kStatic);
  bool ordered = h.size() == s.size() && !h.empty();
  double hm = 0.0, sm = 0.0;
  for (std::size_t i = 0; i < h.size() && i < s.size(); ++i) {
    ordered = ordered && lss_p99_ms(s[i]) > lss_p99_ms(h[i]);
    hm += lss_p99_ms(h[i]) / static_cast<double>(h.size());
    sm += lss_p99_ms(s[i]) / static_cast<double>(s.size());
  }
  return {worst < 1.0 && ordered,
          fmt("desk hybrid LSS p99 max over %zu reps %.4f ms (< 1 ms); overload LSS p99 mean static %.3f ms vs "
              "hybrid %.3f ms, static worse on every seed: %s",
              hybrid.size(), worst, sm, hm, ordered ? "yes" : "no")};
}

Outcome ac5() {
  const Scenario day = scenario("solar_day.json");
  auto nrts_grid = [](const std::vector<MetricsReport>& runs) {
    double j = 0.0;
    for (const auto& r : runs) j += r.slice_grid_j[idx(Slice::kNrts)];
    return j;
  };
  const double h = nrts_grid(runs_for(day, PolicyKind::kHybrid));
  const double s = nrts_grid(runs_for(day, PolicyKind::kStatic));
  const double hr = nrts_grid(runs_for(day, PolicyKind::kHrass));
  const double ratio = s > 0.0 ? h / s : (h == 0.0 ? 0.0 : 1e300);
  return {s > 0.0 && ratio <= 0.7,
          fmt("NRTS grid energy over 5 seeds: hybrid %.2f J, static %.2f J (ratio %.3f <= 0.70); hrass %.2f J for "
              "reference",
              h, s, ratio, hr)};
}

Outcome ac6() {
  const double theta = 700.0;
  std::size_t cases = 0, bad = 0;
  auto oracle = [&](Slice s, double irr) {
    if (s == Slice::kLss || s == Slice::kRts) return SolarAction::kImmediateAllocation;
    return irr > theta ? SolarAction::kAllocateRenewable : SolarAction::kDelayAllocation;
  };
  std::vector<double> grid{0.0, 1.0, 350.0, std::nextafter(theta, 0.0), theta, std::nextafter(theta, 2e3), 701.0, 1200.0};
  Rng rng(6);
  for (int i = 0; i < 100000; ++i) grid.push_back(rng.uniform(0, 1400));
  for (Slice s : kAllSlices)
    for (double irr : grid) {
      ++cases;
      bad += solar_action(s, irr, theta) != oracle(s, irr);
    }
  const bool boundary = solar_action(Slice::kNrts, theta, theta) == SolarAction::kDelayAllocation;
  return {bad == 0 && boundary,
          fmt("%zu cases, %zu mismatches; NRTS at I = theta -> %s", cases, bad,
              std::string(to_string(solar_action(Slice::kNrts, theta, theta))).c_str())};
}

Outcome ac7() {
  const std::size_t n = 100000;
  Rng rng = Rng::stream(7, StreamKey::kPufNoise);
  std::size_t false_reject = 0, detected = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto victim = PufIdentity::from_seed(7'000'000 + i, 0.05);
    const auto attacker = PufIdentity::from_seed(9'000'000 + i, 0.05);
    const auto c = make_challenge(rng);
    false_reject += !authenticate(victim, victim, c, rng);
    detected += !authenticate(attacker, victim, c, rng);
  }
  const double det = static_cast<double>(detected) / static_cast<double>(n);
  const double frr = static_cast<double>(false_reject) / static_cast<double>(n);
  return {det >= 0.99 && frr < 0.01,
          fmt("impersonation detection %.5f (>= 0.99), honest false-reject %.5f (< 0.01) over %zu each", det, frr, n)};
}

Outcome ac8() {
  Scenario base = scenario("sweep.json");
  base.replications = 2;
  const double design = static_cast<double>(base.network.n_devices) / base.network.area_km2;
  const std::vector<double> densities{12500, 25000, 50000, 75000, 100000, 150000};
  const auto rows = density_sweep(base, densities);
  bool monotone = true, below = true, crosses = false;
  std::string curve;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double p = rows[i].p99_lss_ms.mean;
    if (i > 0) monotone = monotone && p >= rows[i - 1].p99_lss_ms.mean;
    if (rows[i].density <= design) below = below && p < 1.0;
    else crosses = crosses || p >= 1.0;
    curve += fmt("%s%.0f:%.3f", i ? " " : "", rows[i].density, p);
  }
  return {monotone && below && crosses,
          fmt("p99 ms by density [%s]; design %.0f/km^2; monotone %s, below bound up to design %s, crosses beyond %s",
              curve.c_str(), design, monotone ? "yes" : "no", below ? "yes" : "no", crosses ? "yes" : "no")};
}

Outcome ac9() {
  Scenario sc = scenario("desk.json");
  sc.duration_s = 20.0;
  const auto dir = fs::temp_directory_path() / "edgetwin_acceptance";
  fs::create_directories(dir);
  std::string bytes[2];
  for (int k = 0; k < 2; ++k) {
    const auto path = dir / ("metrics_" + std::to_string(k) + ".csv");
    write_metrics_csv(path, {run(sc, 11)});
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes[k] = ss.str();
  }
  fs::remove_all(dir);
  return {!bytes[0].empty() && bytes[0] == bytes[1],
          fmt("two runs of (desk, seed 11): %zu vs %zu bytes, identical: %s", bytes[0].size(), bytes[1].size(),
              bytes[0] == bytes[1] ? "yes" : "no")};
}

Outcome ac10() {
  Rng rng(10);
  Mlp m = make_local_model();
  m.init(rng);
  const auto data = SyntheticDemand{}.client_series(0, 10).first;
  const auto g = m.gradient(data);
  std::vector<double> p(m.params().begin(), m.params().end());
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
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
  return {!g_invariant_fired && worst < 1e-4,
          fmt("invariant assertions fired: %s%s; gradient check max relative error %.2e",
              g_invariant_fired ? "yes: " : "no", g_invariant_msg.c_str(), worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"AC1 compression ratio", ac1},      {"AC2 sparse recovery", ac2},  {"AC3 Krum robustness", ac3},
      {"AC4 latency ordering", ac4},       {"AC5 energy ordering", ac5},  {"AC6 solar policy", ac6},
      {"AC7 PUF detection", ac7},          {"AC8 density sweep", ac8},    {"AC9 determinism", ac9},
      {"AC10 invariant suite", ac10}};
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const InvariantViolation& e) {
      g_invariant_fired = true;
      g_invariant_msg = e.what();
      o = {false, std::string("invariant violation: ") + e.what()};
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " - " << o.detail << " [" << fmt("%.1f", secs) << " s]"
              << std::endl;
  }
  return failures;
}
