#pragma once

// Scenario files (JSON, unknown keys rejected) and report emission:
// metrics.csv, summary.json, comparison.csv, sweep.csv and timeline tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgetwin/engine.hpp"

namespace edgetwin {

namespace detail {

using nlohmann::json;

// Reads fields from one JSON object and remembers which keys were used.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    const auto it = j_.find(key);
    used_.insert(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  template <class T, std::size_t N>
  void get_array(const char* key, std::array<T, N>& out) {
    const auto it = j_.find(key);
    used_.insert(key);
    if (it == j_.end()) return;
    if (!it->is_array() || it->size() != N) throw ConfigError(where(key) + ": expected an array of " + std::to_string(N));
    for (std::size_t i = 0; i < N; ++i) {
      try {
        out[i] = (*it)[i].template get<T>();
      } catch (const json::exception&) {
        throw ConfigError(where(key) + ": wrong element type");
      }
    }
  }

  std::optional<ObjectReader> child(const char* key) {
    const auto it = j_.find(key);
    used_.insert(key);
    if (it == j_.end()) return std::nullopt;
    return ObjectReader(*it, where(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError("unknown key '" + where(k) + "'");
  }

  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Slice parse_slice(const std::string& s, const std::string& where) {
  for (Slice x : kAllSlices)
    if (to_string(x) == s) return x;
  throw ConfigError(where + ": unknown slice '" + s + "' (expected LSS, RTS or NRTS)");
}

}  // namespace detail

/// Parses a scenario document. An empty document yields all defaults.
inline Scenario parse_scenario(const std::string& text) {
  using detail::json;
  Scenario sc;
  bool blank = true;
  for (char c : text) blank = blank && std::isspace(static_cast<unsigned char>(c));
  if (blank) return sc;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario: malformed JSON: ") + e.what());
  }
  detail::ObjectReader root(j, "");

  if (auto n = root.child("network")) {
    auto& net = sc.network;
    n->get("n_devices", net.n_devices);
    n->get("n_gnbs", net.n_gnbs);
    n->get("area_km2", net.area_km2);
    n->get("spectral_efficiency", net.spectral_efficiency);
    if (auto m = n->child("class_mix")) {
      m->get("mmtc", net.class_mix.mmtc);
      m->get("embb", net.class_mix.embb);
      m->get("urllc", net.class_mix.urllc);
      m->finish();
    }
    if (auto c = n->child("gnb_capacity")) {
      c->get("cpu_cores", net.gnb_capacity.cpu);
      c->get("ram_gb", net.gnb_capacity.ram);
      c->get("bw_mhz", net.gnb_capacity.bw);
      c->finish();
    }
    n->finish();
  }
  std::string policy = std::string(to_string(sc.policy));
  root.get("policy", policy);
  const auto pk = parse_policy(policy);
  if (!pk) throw ConfigError("policy: unknown policy '" + policy + "' (valid: hybrid, static, hrass, fedavg-hybrid)");
  sc.policy = *pk;
  root.get("duration_s", sc.duration_s);
  root.get("timestep_ms", sc.timestep_ms);
  root.get("replications", sc.replications);
  root.get("seed", sc.master_seed);

  if (auto t = root.child("traffic")) {
    auto& p = sc.traffic;
    t->get("beta_alpha", p.beta_alpha);
    t->get("beta_beta", p.beta_beta);
    t->get("mmtc_packet_bytes", p.mmtc_packet_bytes);
    std::string reading = p.beta_reading == BetaReading::kProbability ? "probability" : "size";
    t->get("beta_reading", reading);
    if (reading == "probability") p.beta_reading = BetaReading::kProbability;
    else if (reading == "size") p.beta_reading = BetaReading::kSize;
    else throw ConfigError("traffic.beta_reading: expected 'probability' or 'size'");
    t->get("cbr_rate_bps", p.cbr_rate_bps);
    t->get("cbr_sigma", p.cbr_sigma);
    t->get("mtu_bytes", p.mtu_bytes);
    t->get("period_ms", p.period_ms);
    t->get("jitter_ms", p.jitter_ms);
    t->get("urllc_packet_bytes", p.urllc_packet_bytes);
    t->finish();
  }
  if (auto s = root.child("scheduler")) {
    auto& c = sc.scheduler;
    s->get_array("weights", c.weights);
    s->get_array("static_split", c.static_split);
    s->get_array("headroom", c.headroom);
    s->get_array("latency_bound_s", c.latency_bound_s);
    s->get_array("tau_min_s", c.tau_min_s);
    s->get("enforce_bound_s", c.enforce_bound_s);
    s->get("fallback_factor", c.fallback_factor);
    s->get("lambda", c.lambda);
    s->get("cpu_cores_per_gbps", c.resources.cpu_cores_per_gbps);
    s->get("ram_gb_per_gbps", c.resources.ram_gb_per_gbps);
    s->finish();
  }
  if (auto a = root.child("attacks")) {
    auto& at = sc.attacks;
    a->get("adversary_fraction", at.adversary_fraction);
    a->get("byzantine", at.byzantine);
    a->get("impersonation", at.impersonation);
    a->get("resource_exhaustion", at.resource_exhaustion);
    a->get("start_s", at.start_s);
    a->get("stop_s", at.stop_s);
    std::string slice{to_string(at.exhaustion_slice)};
    a->get("exhaustion_slice", slice);
    at.exhaustion_slice = detail::parse_slice(slice, "attacks.exhaustion_slice");
    a->get("exhaustion_factor", at.exhaustion_factor);
    a->get("byzantine_scale", at.byzantine_scale);
    a->finish();
  }
  if (auto e = root.child("energy")) {
    auto& p = sc.energy;
    e->get("beta_c_w", p.beta_c_w);
    e->get("beta_b_w", p.beta_b_w);
    e->get("theta_w_m2", p.theta_w_m2);
    e->get("horizon_h", p.horizon_h);
    e->get("lambda", p.lambda);
    e->get_array("weights", p.weights);
    e->get_array("targets_j", p.targets_j);
    e->get("panel_area_m2", p.panel_area_m2);
    e->get("panel_efficiency", p.panel_efficiency);
    e->get("max_delay_s", p.max_delay_s);
    e->finish();
  }
  if (auto s = root.child("solar")) {
    auto& c = sc.solar;
    s->get("peak_w_m2", c.peak_w_m2);
    s->get("sunrise_h", c.sunrise_h);
    s->get("sunset_h", c.sunset_h);
    s->get("cloud_phi", c.cloud_phi);
    s->get("cloud_sigma", c.cloud_sigma);
    s->get("start_hour", c.start_hour);
    s->get("time_scale", c.time_scale);
    s->get("csv", sc.solar_csv);
    s->finish();
  }
  if (auto f = root.child("features")) {
    f->get("compression", sc.flags.compression);
    f->get("solar", sc.flags.solar);
    f->get("security", sc.flags.security);
    f->finish();
  }
  if (auto e = root.child("engine")) {
    e->get("epoch_ms", sc.epoch_ms);
    e->get("twin_interval_ms", sc.twin_interval_ms);
    e->get_array("sync_interval_ms", sc.sync_interval_ms);
    e->get("twin_dim", sc.twin_dim);
    e->get("sensing_mask_fraction", sc.sensing_mask_fraction);
    e->get("reauth_interval_s", sc.reauth_interval_s);
    e->get("quarantine_s", sc.quarantine_s);
    e->get("plausibility_factor", sc.plausibility_factor);
    e->get("fl_interval_s", sc.fl_interval_s);
    e->get("fl_window_s", sc.fl_window_s);
    e->get("fl_history", sc.fl_history);
    e->get("fl_participants", sc.fl_participants);
    e->get("nrts_drain_s", sc.nrts_drain_s);
    e->get("forecast_refresh_min", sc.forecast_refresh_min);
    e->get("forecast_history_min", sc.forecast_history_min);
    e->get("learned_policy", sc.learned_policy);
    e->get("timeline_interval_s", sc.timeline_interval_s);
    e->get("reservoir_capacity", sc.reservoir_capacity);
    e->finish();
  }
  root.finish();
  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

// ---------------------------------------------------------------------------
// Writers

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MetricRecord {
  std::size_t replication = 0;
  std::string metric;
  std::string slice;
  double value = 0.0;
};

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& runs,
                              const std::string& policy_label = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (policy_label.empty() ? "" : "policy,") << "replication,metric,slice,value\n";
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (const auto& r : runs[i].rows())
      out << (policy_label.empty() ? "" : policy_label + ",") << i << ',' << r.metric << ',' << r.slice << ','
          << format_double(r.value) << '\n';
}

/// Reads the replication,metric,slice,value columns of metrics.csv (a leading
/// policy column is skipped when present).
inline std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const bool has_policy = line.rfind("policy,", 0) == 0;
  std::vector<MetricRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    const std::size_t o = has_policy ? 1 : 0;
    if (cols.size() != 4 + o) throw std::runtime_error("metrics.csv: malformed row: " + line);
    out.push_back({std::stoul(cols[o]), cols[o + 1], cols[o + 2], std::stod(cols[o + 3])});
  }
  return out;
}

inline nlohmann::json summary_json(const ReplicatedReport& rep, const Scenario& sc) {
  nlohmann::json j;
  j["policy"] = std::string(to_string(sc.policy));
  j["replications"] = rep.runs.size();
  j["master_seed"] = sc.master_seed;
  j["duration_s"] = sc.duration_s;
  j["n_devices"] = sc.network.n_devices;
  j["n_gnbs"] = sc.network.n_gnbs;
  auto& m = j["metrics"];
  m = nlohmann::json::array();
  for (const auto& a : rep.metrics) {
    m.push_back({{"metric", a.metric},
                 {"slice", a.slice},
                 {"n", a.summary.n},
                 {"mean", a.summary.mean},
                 {"sd", a.summary.sd},
                 {"ci95", a.summary.ci95}});
  }
  auto& fl = j["fl_rounds"];
  fl = nlohmann::json::array();
  if (!rep.runs.empty()) {
    std::vector<double> acc;
    for (const auto& r : rep.runs.front().fl_rounds) acc.push_back(r.accuracy);
    const auto r95 = rounds_to_accuracy(acc);
    j["fl_rounds_to_95"] = r95 ? nlohmann::json(*r95) : nlohmann::json(nullptr);
    for (const auto& r : rep.runs.front().fl_rounds)
      fl.push_back({{"round", r.index}, {"accuracy", r.accuracy}, {"bytes", r.bytes_on_wire}, {"aborted", r.aborted}});
  }
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline void write_timeline_csv(const std::filesystem::path& path, const MetricsReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t_s,lss_mean_ms,lss_max_ms,rts_mean_ms,rts_max_ms,nrts_mean_ms,nrts_max_ms,grid_w,renewable_w,"
         "irradiance_w_m2,forecast_w_m2,nrts_alloc_fraction,rejects,quarantined\n";
  for (const auto& t : r.timeline) {
    out << format_double(t.t_s);
    for (std::size_t s = 0; s < kNumSlices; ++s)
      out << ',' << format_double(t.mean_latency_ms[s]) << ',' << format_double(t.max_latency_ms[s]);
    out << ',' << format_double(t.grid_w) << ',' << format_double(t.renewable_w) << ',' << format_double(t.irradiance)
        << ',' << format_double(t.forecast) << ',' << format_double(t.nrts_alloc_fraction) << ',' << t.rejects << ','
        << t.quarantined << '\n';
  }
}

inline void write_fl_csv(const std::filesystem::path& path, const MetricsReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "round,accuracy,bytes_on_wire,participants,aborted,selected\n";
  for (const auto& f : r.fl_rounds)
    out << f.index << ',' << format_double(f.accuracy) << ',' << f.bytes_on_wire << ',' << f.participants.size() << ','
        << (f.aborted ? 1 : 0) << ',' << (f.selected ? std::to_string(*f.selected) : std::string()) << '\n';
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "density_per_km2,n_devices,p99_lss_ms,p99_lss_sd,p99_lss_ci95,lss_compliance\n";
  for (const auto& r : rows)
    out << format_double(r.density) << ',' << r.n_devices << ',' << format_double(r.p99_lss_ms.mean) << ','
        << format_double(r.p99_lss_ms.sd) << ',' << format_double(r.p99_lss_ms.ci95) << ','
        << format_double(r.compliance_lss.mean) << '\n';
}

// ---------------------------------------------------------------------------
// Comparison table

struct ReferenceConstants {
  std::string name = "Diffusion-RL";
  double total_w = 5100.0;
  double nrts_w = 1780.0;
};

struct ComparisonRow {
  std::string algorithm;
  double total_w = 0.0;
  double nrts_w = 0.0;
  std::optional<double> total_reduction_pct;
  std::optional<double> nrts_reduction_pct;
  bool reference = false;
};

inline double reduction_pct(double ref, double value) { return (ref - value) / ref * 100.0; }

/// Rows per policy (mean power in watts over the run), plus the reference row.
inline std::vector<ComparisonRow> emit_comparison(const std::vector<std::pair<std::string, const ReplicatedReport*>>& reports,
                                                  const ReferenceConstants& ref = {}) {
  std::vector<ComparisonRow> rows;
  for (const auto& [name, rep] : reports) {
    ComparisonRow r;
    r.algorithm = name;
    if (const auto* m = rep->find("mean_power_w", "all")) r.total_w = m->summary.mean;
    if (const auto* m = rep->find("nrts_mean_power_w", "NRTS")) r.nrts_w = m->summary.mean;
    r.total_reduction_pct = reduction_pct(ref.total_w, r.total_w);
    r.nrts_reduction_pct = reduction_pct(ref.nrts_w, r.nrts_w);
    rows.push_back(r);
  }
  ComparisonRow r;
  r.algorithm = ref.name;
  r.total_w = ref.total_w;
  r.nrts_w = ref.nrts_w;
  r.reference = true;
  rows.push_back(r);
  return rows;
}

inline void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "algorithm,total_energy_w,nrts_energy_w,total_reduction_pct,nrts_reduction_pct,reference_only\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
  for (const auto& r : rows)
    out << r.algorithm << ',' << format_double(r.total_w) << ',' << format_double(r.nrts_w) << ','
        << opt(r.total_reduction_pct) << ',' << opt(r.nrts_reduction_pct) << ',' << (r.reference ? 1 : 0) << '\n';
}

}  // namespace edgetwin
