// edgetwin: run scenarios, replications and density sweeps; write CSV/JSON reports.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "edgetwin/engine.hpp"
#include "edgetwin/io.hpp"

namespace fs = std::filesystem;
using namespace edgetwin;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string valid_policies() {
  std::string s;
  for (auto n : kPolicyNames) s += (s.empty() ? "" : ", ") + std::string(n);
  return s;
}

fs::path resolve_out(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("EDGETWIN_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "out";
}

nlohmann::json timing_json(const ReplicatedReport& rep) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rep.runs) {
    const double per_sim_s = r.duration_s > 0.0 ? r.scheduler_wall_s / r.duration_s : 0.0;
    j.push_back({{"seed", r.seed},
                 {"run_wall_s", r.run_wall_s},
                 {"scheduler_wall_s", r.scheduler_wall_s},
                 {"scheduler_s_per_sim_s", per_sim_s},
                 {"scheduler_fraction_of_wall", r.run_wall_s > 0.0 ? r.scheduler_wall_s / r.run_wall_s : 0.0}});
  }
  return j;
}

int run_command(const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::size_t> reps,
                const std::string& policy_list, const std::string& out_flag, const std::string& densities,
                std::optional<double> duration) {
  Scenario base = config.empty() ? Scenario{} : load_scenario(config);
  if (seed) base.master_seed = *seed;
  if (reps) base.replications = *reps;
  if (duration) base.duration_s = *duration;

  std::vector<PolicyKind> policies;
  if (policy_list.empty()) {
    policies.push_back(base.policy);
  } else {
    for (const auto& name : split(policy_list, ',')) {
      const auto p = parse_policy(name);
      if (!p) {
        std::cerr << "error: unknown policy '" << name << "'; valid policies: " << valid_policies() << "\n";
        return 2;
      }
      policies.push_back(*p);
    }
  }
  base.validate();

  const fs::path out = resolve_out(out_flag);
  fs::create_directories(out);

  if (!densities.empty()) {
    std::vector<double> d;
    for (const auto& s : split(densities, ',')) d.push_back(std::stod(s));
    for (PolicyKind p : policies) {
      Scenario sc = base;
      sc.policy = p;
      const auto rows = density_sweep(sc, d);
      const std::string name = policies.size() == 1 ? "sweep.csv" : "sweep_" + std::string(to_string(p)) + ".csv";
      write_sweep_csv(out / name, rows);
      for (const auto& r : rows)
        std::cout << to_string(p) << " density=" << r.density << " p99_lss_ms=" << r.p99_lss_ms.mean << "\n";
    }
    return 0;
  }

  std::vector<std::pair<std::string, ReplicatedReport>> reports;
  for (PolicyKind p : policies) {
    Scenario sc = base;
    sc.policy = p;
    reports.emplace_back(std::string(to_string(p)), replicate(sc));
    const auto& rep = reports.back().second;
    const fs::path dir = policies.size() == 1 ? out : out / reports.back().first;
    fs::create_directories(dir);
    write_metrics_csv(dir / "metrics.csv", rep.runs);
    write_text(dir / "summary.json", summary_json(rep, sc).dump(2) + "\n");
    write_text(dir / "timing.json", timing_json(rep).dump(2) + "\n");
    if (!rep.runs.empty()) {
      write_timeline_csv(dir / "timeline.csv", rep.runs.front());
      write_fl_csv(dir / "fl_rounds.csv", rep.runs.front());
    }
    const auto* p99 = rep.find("latency_p99_ms", "LSS");
    const auto* e = rep.find("grid_energy_j", "NRTS");
    std::cout << to_string(p) << ": LSS p99 " << (p99 ? p99->summary.mean : 0.0) << " ms, NRTS grid energy "
              << (e ? e->summary.mean : 0.0) << " J over " << rep.runs.size() << " replication(s)\n";
  }
  if (policies.size() > 1) {
    std::vector<std::pair<std::string, const ReplicatedReport*>> refs;
    for (const auto& [n, r] : reports) refs.emplace_back(n, &r);
    write_comparison_csv(out / "comparison.csv", emit_comparison(refs));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-aware slicing simulator"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "Run replications (or a density sweep) and write reports");

  std::string config, policy, out, densities;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<double> duration;
  run->add_option("--config", config, "Scenario JSON file")->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Master seed (replication i uses seed + i)");
  run->add_option("--reps", reps, "Replications");
  run->add_option("--policy", policy, "Policy name, or a comma-separated list for a comparison: " + valid_policies());
  run->add_option("--out", out, "Output directory (default $EDGETWIN_OUT_DIR or ./out)");
  run->add_option("--densities", densities, "Comma-separated densities in devices/km^2; runs a sweep");
  run->add_option("--duration", duration, "Override duration_s");

  CLI11_PARSE(app, argc, argv);
  try {
    return run_command(config, seed, reps, policy, out, densities, duration);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
