#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "isatcr/agent.hpp"
#include "isatcr/baselines.hpp"
#include "isatcr/simcore.hpp"

namespace isatcr {

using json = nlohmann::json;

// ---- configuration -----------------------------------------------------------

struct PolicyConfig {
  std::string kind = "isatcr";  // isatcr | d3qn_local | ddqn_local | shortest_path | ics | random
  std::string checkpoint;       // required to run a DRL kind
  std::map<std::string, std::string> checkpoints;  // per-kind paths for sweeps

  // DRL hyperparameters
  int hidden_width = 256;
  int hidden_layers = 2;
  double leaky_slope = 0.01;
  double lr = 2e-4;
  double gamma = 0.99;
  int buffer_capacity = 200000;
  int batch_size = 1024;
  double eps_start = 0.9;
  double eps_decay = 0.999;
  double eps_min = 0.02;
  double p_heuristic = 0.5;
  double heuristic_compute_prob = 0.3;
  int target_sync_period = 10;
  int epochs = 6000;
  int iters_per_epoch = 64;
  double epoch_duration_s = 20.0;

  // baseline knobs
  double sp_compute_threshold_s = 2.0;
  double ics_retry_window_s = 1.0;
};

struct ExperimentConfig {
  SimConfig sim;
  PolicyConfig policy;
  std::vector<std::string> sweep_policies;  // defaults to {policy.kind}
  std::string sweep_axis;                   // optional default for the CLI
  std::vector<std::string> sweep_values;
  double warmup_s = 120.0;
  double measure_s = 600.0;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool trace = false;
};

namespace cfgdetail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config error at " + path + ": " + what);
}

template <typename T>
T get_or(const json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(path + "." + key, "wrong type");
  }
}

}  // namespace cfgdetail

inline ExperimentConfig parse_experiment_config(const json& j) {
  using cfgdetail::fail;
  using cfgdetail::get_or;
  ExperimentConfig cfg;

  if (j.contains("constellation")) {
    const json& c = j.at("constellation");
    if (c.contains("preset")) {
      try {
        cfg.sim.constellation = constellation_preset(c.at("preset").get<std::string>());
      } catch (const std::invalid_argument& e) {
        fail("constellation.preset", e.what());
      }
      cfg.sim.constellation.beam_half_angle_deg =
          get_or(c, "constellation", "beam_half_angle_deg", cfg.sim.constellation.beam_half_angle_deg);
    } else {
      cfg.sim.constellation.plane_count = get_or(c, "constellation", "planes", 12);
      cfg.sim.constellation.sats_per_plane = get_or(c, "constellation", "sats_per_plane", 24);
      cfg.sim.constellation.altitude_km = get_or(c, "constellation", "altitude_km", 500.0);
      cfg.sim.constellation.inclination_deg = get_or(c, "constellation", "inclination_deg", 60.0);
      cfg.sim.constellation.beam_half_angle_deg =
          get_or(c, "constellation", "beam_half_angle_deg", 45.0);
      cfg.sim.constellation.phasing_offset_deg =
          get_or(c, "constellation", "phasing_offset_deg", 0.0);
    }
    try {
      cfg.sim.constellation.validate();
    } catch (const std::invalid_argument& e) {
      fail("constellation", e.what());
    }
  }

  if (j.contains("ground_stations")) {
    cfg.sim.ground_stations.clear();
    const json& gs = j.at("ground_stations");
    if (!gs.is_array()) fail("ground_stations", "must be an array");
    for (std::size_t i = 0; i < gs.size(); ++i) {
      GroundStation g;
      g.name = get_or(gs[i], "ground_stations[i]", "name", std::string("gs") + std::to_string(i));
      g.latitude_deg = get_or(gs[i], "ground_stations[i]", "lat", 0.0);
      g.longitude_deg = get_or(gs[i], "ground_stations[i]", "lon", 0.0);
      try {
        g.validate();
      } catch (const std::invalid_argument& e) {
        fail("ground_stations[" + std::to_string(i) + "]", e.what());
      }
      cfg.sim.ground_stations.push_back(std::move(g));
    }
  }

  if (j.contains("traffic")) {
    const json& t = j.at("traffic");
    cfg.sim.aggregate_rate = get_or(t, "traffic", "aggregate_rate", cfg.sim.aggregate_rate);
    if (cfg.sim.aggregate_rate < 0.0) fail("traffic.aggregate_rate", "must be >= 0");
    cfg.sim.compression_fraction =
        get_or(t, "traffic", "compression_fraction", cfg.sim.compression_fraction);
    if (cfg.sim.compression_fraction < 0.0 || cfg.sim.compression_fraction > 1.0)
      fail("traffic.compression_fraction", "must be in [0,1]");
    cfg.sim.duty_cycle = get_or(t, "traffic", "duty_cycle", cfg.sim.duty_cycle);
    if (cfg.sim.duty_cycle <= 0.0 || cfg.sim.duty_cycle > 1.0)
      fail("traffic.duty_cycle", "must be in (0,1]");
    cfg.sim.mean_on_s = get_or(t, "traffic", "mean_on_s", cfg.sim.mean_on_s);
    if (t.contains("land_rects")) {
      cfg.sim.land_rects.clear();
      for (const auto& r : t.at("land_rects")) {
        if (!r.is_array() || r.size() != 4) fail("traffic.land_rects", "each entry is [lat0,lat1,lon0,lon1]");
        cfg.sim.land_rects.push_back(
            {r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()});
      }
    }
  }

  if (j.contains("failure")) {
    const json& f = j.at("failure");
    cfg.sim.failure_pi1 = get_or(f, "failure", "pi1", cfg.sim.failure_pi1);
    if (cfg.sim.failure_pi1 < 0.0 || cfg.sim.failure_pi1 >= 1.0) fail("failure.pi1", "must be in [0,1)");
    cfg.sim.mean_repair_s = get_or(f, "failure", "mean_repair_s", cfg.sim.mean_repair_s);
    if (cfg.sim.mean_repair_s <= 0.0) fail("failure.mean_repair_s", "must be > 0");
  }

  if (j.contains("resources")) {
    const json& r = j.at("resources");
    cfg.sim.compute_flops = get_or(r, "resources", "compute_flops", cfg.sim.compute_flops);
    cfg.sim.storage_bytes = get_or(r, "resources", "storage_bytes", cfg.sim.storage_bytes);
    cfg.sim.isl_rate_bps = get_or(r, "resources", "isl_rate_bps", cfg.sim.isl_rate_bps);
    cfg.sim.downlink_rate_bps = get_or(r, "resources", "downlink_rate_bps", cfg.sim.downlink_rate_bps);
    if (cfg.sim.compute_flops <= 0 || cfg.sim.storage_bytes <= 0 || cfg.sim.isl_rate_bps <= 0 ||
        cfg.sim.downlink_rate_bps <= 0)
      fail("resources", "rates and capacities must be positive");
  }

  if (j.contains("control")) {
    const json& c = j.at("control");
    cfg.sim.broadcast_period_s = get_or(c, "control", "broadcast_period_s", cfg.sim.broadcast_period_s);
    cfg.sim.qc_cap_s = get_or(c, "control", "qc_cap_s", cfg.sim.qc_cap_s);
    cfg.sim.detection_period_s = get_or(c, "control", "detection_period_s", cfg.sim.detection_period_s);
    if (cfg.sim.detection_period_s <= 0.0) fail("control.detection_period_s", "must be > 0");
    cfg.sim.storage_reserve_fraction =
        get_or(c, "control", "storage_reserve_fraction", cfg.sim.storage_reserve_fraction);
    cfg.sim.drop_inflight_on_failure =
        get_or(c, "control", "drop_inflight_on_failure", cfg.sim.drop_inflight_on_failure);
  }

  if (j.contains("durations")) {
    const json& d = j.at("durations");
    cfg.warmup_s = get_or(d, "durations", "warmup_s", cfg.warmup_s);
    cfg.measure_s = get_or(d, "durations", "measure_s", cfg.measure_s);
    if (cfg.warmup_s < 0.0) fail("durations.warmup_s", "must be >= 0");
    if (cfg.measure_s <= 0.0) fail("durations.measure_s", "must be > 0");
  }

  if (j.contains("policy")) {
    const json& p = j.at("policy");
    PolicyConfig& pc = cfg.policy;
    pc.kind = get_or(p, "policy", "kind", pc.kind);
    pc.checkpoint = get_or(p, "policy", "checkpoint", pc.checkpoint);
    if (p.contains("checkpoints"))
      for (auto it = p.at("checkpoints").begin(); it != p.at("checkpoints").end(); ++it)
        pc.checkpoints[it.key()] = it.value().get<std::string>();
    pc.hidden_width = get_or(p, "policy", "hidden_width", pc.hidden_width);
    pc.hidden_layers = get_or(p, "policy", "hidden_layers", pc.hidden_layers);
    pc.leaky_slope = get_or(p, "policy", "leaky_slope", pc.leaky_slope);
    pc.lr = get_or(p, "policy", "lr", pc.lr);
    pc.gamma = get_or(p, "policy", "gamma", pc.gamma);
    pc.buffer_capacity = get_or(p, "policy", "buffer_capacity", pc.buffer_capacity);
    pc.batch_size = get_or(p, "policy", "batch_size", pc.batch_size);
    pc.eps_start = get_or(p, "policy", "eps_start", pc.eps_start);
    pc.eps_decay = get_or(p, "policy", "eps_decay", pc.eps_decay);
    pc.eps_min = get_or(p, "policy", "eps_min", pc.eps_min);
    pc.p_heuristic = get_or(p, "policy", "p_heuristic", pc.p_heuristic);
    pc.heuristic_compute_prob =
        get_or(p, "policy", "heuristic_compute_prob", pc.heuristic_compute_prob);
    pc.target_sync_period = get_or(p, "policy", "target_sync_period", pc.target_sync_period);
    pc.epochs = get_or(p, "policy", "epochs", pc.epochs);
    if (pc.epochs < 0) fail("policy.epochs", "must be >= 0");
    pc.iters_per_epoch = get_or(p, "policy", "iters_per_epoch", pc.iters_per_epoch);
    pc.epoch_duration_s = get_or(p, "policy", "epoch_duration_s", pc.epoch_duration_s);
    pc.sp_compute_threshold_s =
        get_or(p, "policy", "sp_compute_threshold_s", pc.sp_compute_threshold_s);
    pc.ics_retry_window_s = get_or(p, "policy", "ics_retry_window_s", pc.ics_retry_window_s);
    static const std::vector<std::string> kinds{"isatcr",        "d3qn_local", "ddqn_local",
                                                "shortest_path", "ics",        "random"};
    if (std::find(kinds.begin(), kinds.end(), pc.kind) == kinds.end())
      fail("policy.kind", "unknown kind '" + pc.kind + "'");
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    if (s.contains("policies"))
      cfg.sweep_policies = s.at("policies").get<std::vector<std::string>>();
    cfg.sweep_axis = get_or(s, "sweep", "axis", cfg.sweep_axis);
    if (s.contains("values"))
      for (const auto& v : s.at("values"))
        cfg.sweep_values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  }
  if (cfg.sweep_policies.empty()) cfg.sweep_policies = {cfg.policy.kind};

  cfg.seed = get_or(j, "", "seed", cfg.seed);
  cfg.output_dir = get_or(j, "", "output_dir", cfg.output_dir);
  cfg.trace = get_or(j, "", "trace", cfg.trace);
  cfg.sim.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

// ---- metrics -----------------------------------------------------------------

struct MetricsSummary {
  long generated = 0, delivered = 0, dropped = 0, in_flight = 0;
  double loss_rate = 0.0;
  double mean_delay_s = 0.0, p50_delay_s = 0.0, p95_delay_s = 0.0, p99_delay_s = 0.0;
  double mean_tp = 0.0, mean_tt = 0.0, mean_tq = 0.0, mean_tc = 0.0;
  double mean_hops = 0.0;
  std::vector<double> per_sat_compute_s;
  long decisions = 0;
  int state_width_min = 0, state_width_max = 0;
  long broadcasts = 0;
  int payload_width_min = 0, payload_width_max = 0;
  long control_messages = 0;
};

inline json summary_to_json(const MetricsSummary& m) {
  json j;
  j["generated"] = m.generated;
  j["delivered"] = m.delivered;
  j["dropped"] = m.dropped;
  j["in_flight"] = m.in_flight;
  j["loss_rate"] = m.loss_rate;
  j["mean_delay_s"] = m.mean_delay_s;
  j["p50_delay_s"] = m.p50_delay_s;
  j["p95_delay_s"] = m.p95_delay_s;
  j["p99_delay_s"] = m.p99_delay_s;
  j["mean_Tp_s"] = m.mean_tp;
  j["mean_Tt_s"] = m.mean_tt;
  j["mean_Tq_s"] = m.mean_tq;
  j["mean_Tc_s"] = m.mean_tc;
  j["mean_hops"] = m.mean_hops;
  j["per_sat_compute_s"] = m.per_sat_compute_s;
  j["instrumentation"] = {{"decisions", m.decisions},
                          {"state_width_min", m.state_width_min},
                          {"state_width_max", m.state_width_max},
                          {"broadcasts", m.broadcasts},
                          {"payload_width_min", m.payload_width_min},
                          {"payload_width_max", m.payload_width_max},
                          {"control_messages", m.control_messages}};
  return j;
}

// Empirical CDF over raw values: one point per distinct value, cumulative
// fraction of samples at or below it.
inline std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.emplace_back(values[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

// ---- policy construction -------------------------------------------------------

// Lets a policy that needs the simulator (the centralized planner) be wired
// after the simulator is constructed.
struct ForwardingPolicy : Policy {
  Policy* inner = nullptr;
  Action decide(const DecisionContext& ctx) override { return inner->decide(ctx); }
  void on_terminal(const Task& t, bool d, double at) override { inner->on_terminal(t, d, at); }
};

struct PolicyBundle {
  std::unique_ptr<Policy> policy;
  std::unique_ptr<QNet> net;
  bool needs_sim = false;  // true: construct against the simulator afterwards
};

inline bool is_drl_kind(const std::string& kind) {
  return kind == "isatcr" || kind == "d3qn_local" || kind == "ddqn_local";
}

inline NetConfig net_config_for(const std::string& kind, const PolicyConfig& pc) {
  NetConfig nc;
  nc.in_dim = (kind == "isatcr") ? kAgentStateDim : kLocalStateDim;
  nc.hidden_width = pc.hidden_width;
  nc.hidden_layers = pc.hidden_layers;
  nc.actions = 5;
  nc.dueling = (kind != "ddqn_local");
  nc.leaky_slope = pc.leaky_slope;
  return nc;
}

inline StateEncoder encoder_for(const std::string& kind) {
  return (kind == "isatcr") ? StateEncoder(encode_state) : StateEncoder(encode_state_local);
}

inline PolicyBundle make_eval_policy(const std::string& kind, const PolicyConfig& pc,
                                     std::uint64_t seed) {
  PolicyBundle b;
  if (is_drl_kind(kind)) {
    std::string path = pc.checkpoint;
    auto it = pc.checkpoints.find(kind);
    if (it != pc.checkpoints.end()) path = it->second;
    if (path.empty())
      throw std::invalid_argument("policy '" + kind + "' needs a checkpoint path");
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open checkpoint: " + path);
    json cp;
    in >> cp;
    if (cp.contains("policy_kind") && cp.at("policy_kind").get<std::string>() != kind)
      throw std::invalid_argument("checkpoint at " + path + " was trained for policy '" +
                                  cp.at("policy_kind").get<std::string>() + "', not '" + kind + "'");
    b.net = std::make_unique<QNet>(net_from_json(cp.at("net")));
    if (b.net->config().in_dim != net_config_for(kind, pc).in_dim)
      throw std::invalid_argument("checkpoint input width does not match policy kind");
    b.policy = std::make_unique<GreedyPolicy>(*b.net, encoder_for(kind));
    return b;
  }
  if (kind == "shortest_path") {
    b.policy = std::make_unique<ShortestPathPolicy>(pc.sp_compute_threshold_s);
    return b;
  }
  if (kind == "random") {
    b.policy = std::make_unique<RandomPolicy>(Rng::stream(seed, 9));
    return b;
  }
  if (kind == "ics") {
    b.needs_sim = true;  // constructed against the simulator by the caller
    return b;
  }
  throw std::invalid_argument("unknown policy kind '" + kind + "'");
}

// ---- file helpers --------------------------------------------------------------

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// ---- run -----------------------------------------------------------------------

struct RunResult {
  MetricsSummary summary;
  std::string summary_json;  // serialized form, byte-stable for a fixed seed
};

inline MetricsSummary collect_summary(const Simulator& sim, double warmup_s) {
  MetricsSummary m;
  m.generated = sim.measured_generated();
  m.delivered = sim.measured_delivered();
  m.dropped = sim.measured_dropped();
  m.in_flight = m.generated - m.delivered - m.dropped;
  m.loss_rate = (m.delivered + m.dropped) > 0
                    ? static_cast<double>(m.dropped) / static_cast<double>(m.delivered + m.dropped)
                    : 0.0;
  std::vector<double> delays;
  long hops = 0;
  for (const Task& t : sim.tasks()) {
    if (t.birth_s < warmup_s || t.outcome != TaskOutcome::delivered) continue;
    delays.push_back(t.delay.total());
    m.mean_tp += t.delay.t_p;
    m.mean_tt += t.delay.t_t;
    m.mean_tq += t.delay.t_q;
    m.mean_tc += t.delay.t_c;
    hops += t.isl_hops;
  }
  if (!delays.empty()) {
    const double n = static_cast<double>(delays.size());
    for (double d : delays) m.mean_delay_s += d;
    m.mean_delay_s /= n;
    m.mean_tp /= n;
    m.mean_tt /= n;
    m.mean_tq /= n;
    m.mean_tc /= n;
    m.mean_hops = static_cast<double>(hops) / n;
    std::vector<double> sorted = delays;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double q) {
      const std::size_t idx = static_cast<std::size_t>(
          std::min<double>(sorted.size() - 1, std::ceil(q * sorted.size()) - 1));
      return sorted[idx];
    };
    m.p50_delay_s = pct(0.50);
    m.p95_delay_s = pct(0.95);
    m.p99_delay_s = pct(0.99);
  }
  m.per_sat_compute_s = sim.per_sat_compute_seconds();
  const Instrumentation& in = sim.instrumentation();
  m.decisions = in.decisions;
  m.state_width_min = in.decisions ? in.state_width_min : 0;
  m.state_width_max = in.state_width_max;
  m.broadcasts = in.broadcasts;
  m.payload_width_min = in.broadcasts ? in.payload_width_min : 0;
  m.payload_width_max = in.payload_width_max;
  m.control_messages = in.control_messages;
  return m;
}

inline std::string tasks_csv(const Simulator& sim) {
  std::ostringstream out;
  out << "task_id,type,s,d,s_prime,t_b,t_end,T_p,T_t,T_q,T_c,hops,computed_at,outcome\n";
  for (const Task& t : sim.tasks()) {
    if (t.outcome == TaskOutcome::in_flight) continue;
    out << t.id << ',' << (t.type == TaskType::compression ? "compression" : "inference") << ','
        << format_double(t.size_bytes) << ',' << format_double(t.demand_flop) << ','
        << format_double(t.out_bytes) << ',' << format_double(t.birth_s) << ','
        << format_double(t.end_s) << ',' << format_double(t.delay.t_p) << ','
        << format_double(t.delay.t_t) << ',' << format_double(t.delay.t_q) << ','
        << format_double(t.delay.t_c) << ',' << t.isl_hops << ',' << t.computed_at << ','
        << (t.outcome == TaskOutcome::delivered ? "delivered" : "dropped") << '\n';
  }
  return out.str();
}

inline std::string cdf_csv(const std::vector<double>& values) {
  std::ostringstream out;
  out << "value,cum_fraction\n";
  for (const auto& [v, f] : empirical_cdf(values))
    out << format_double(v) << ',' << format_double(f) << '\n';
  return out.str();
}

// Deterministic single run: build the policy, simulate warmup + measurement,
// aggregate, and (optionally) write summary.json / tasks.csv / cdf.csv.
inline RunResult run_experiment(const ExperimentConfig& cfg, bool write_files = true,
                                const std::string& out_override = "") {
  PolicyBundle bundle = make_eval_policy(cfg.policy.kind, cfg.policy, cfg.seed);
  ForwardingPolicy shim;
  SimConfig sim_cfg = cfg.sim;
  std::ofstream trace_out;
  Simulator sim(sim_cfg, shim, cfg.seed);
  std::unique_ptr<IcsPolicy> ics;
  if (bundle.needs_sim) {
    ics = std::make_unique<IcsPolicy>(sim, cfg.policy.ics_retry_window_s);
    shim.inner = ics.get();
  } else {
    shim.inner = bundle.policy.get();
  }
  const std::string out_dir = out_override.empty() ? cfg.output_dir : out_override;
  if (cfg.trace) {
    std::filesystem::create_directories(out_dir);
    trace_out.open(std::filesystem::path(out_dir) / "broadcast_trace.jsonl");
    sim.trace_sink_ = [&trace_out](double t, int sat, const GraphRep& rep) {
      json line;
      line["time"] = t;
      line["sat"] = sat;
      line["rep"] = rep.v;
      trace_out << line.dump() << '\n';
    };
  }
  sim.set_measure_from(cfg.warmup_s);
  sim.run_until(cfg.warmup_s + cfg.measure_s);

  RunResult result;
  result.summary = collect_summary(sim, cfg.warmup_s);
  result.summary_json = summary_to_json(result.summary).dump(2) + "\n";
  if (write_files) {
    const std::filesystem::path dir(out_dir);
    write_text_file(dir / "summary.json", result.summary_json);
    write_text_file(dir / "tasks.csv", tasks_csv(sim));
    write_text_file(dir / "cdf.csv", cdf_csv(result.summary.per_sat_compute_s));
  }
  return result;
}

// ---- sweep ----------------------------------------------------------------------

struct SweepPoint {
  std::string axis_value;
  std::string policy;
  bool ok = false;
  std::string error;
  MetricsSummary summary;
};

inline ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                                   const std::string& value) {
  ExperimentConfig cfg = base;
  if (axis == "load") {
    cfg.sim.aggregate_rate = std::stod(value);
  } else if (axis == "failure_rate") {
    cfg.sim.failure_pi1 = std::stod(value);
  } else if (axis == "constellation") {
    const double beam = cfg.sim.constellation.beam_half_angle_deg;
    cfg.sim.constellation = constellation_preset(value);
    cfg.sim.constellation.beam_half_angle_deg = beam;
  } else {
    throw std::invalid_argument("unknown sweep axis '" + axis + "' (load | failure_rate | constellation)");
  }
  return cfg;
}

// One run per (value, policy) under the shared master seed; failures are
// recorded per point and do not stop the sweep.
inline std::vector<SweepPoint> sweep_experiment(const ExperimentConfig& base, const std::string& axis,
                                                const std::vector<std::string>& values,
                                                bool write_files = true) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  std::vector<SweepPoint> points;
  for (const std::string& value : values) {
    for (const std::string& policy : base.sweep_policies) {
      SweepPoint pt;
      pt.axis_value = value;
      pt.policy = policy;
      try {
        ExperimentConfig cfg = apply_axis(base, axis, value);
        cfg.policy.kind = policy;
        const std::string out =
            cfg.output_dir + "/" + axis + "_" + value + "/" + policy;
        const RunResult r = run_experiment(cfg, write_files, out);
        pt.summary = r.summary;
        pt.ok = true;
      } catch (const std::exception& e) {
        pt.error = e.what();
      }
      points.push_back(std::move(pt));
    }
  }
  if (write_files) {
    std::ostringstream out;
    out << "axis_value,policy,status,delay,loss,hops\n";
    for (const SweepPoint& pt : points) {
      out << pt.axis_value << ',' << pt.policy << ',' << (pt.ok ? "ok" : "failed") << ',';
      if (pt.ok)
        out << format_double(pt.summary.mean_delay_s) << ',' << format_double(pt.summary.loss_rate)
            << ',' << format_double(pt.summary.mean_hops);
      else
        out << ",,";
      out << '\n';
    }
    write_text_file(std::filesystem::path(base.output_dir) / "combined.csv", out.str());
  }
  return points;
}

// ---- training -------------------------------------------------------------------

inline TrainSettings train_settings_from(const PolicyConfig& pc) {
  TrainSettings ts;
  ts.epochs = pc.epochs;
  ts.epoch_duration_s = pc.epoch_duration_s;
  ts.iters_per_epoch = pc.iters_per_epoch;
  ts.batch_size = pc.batch_size;
  ts.buffer_capacity = pc.buffer_capacity;
  ts.lr = pc.lr;
  ts.gamma = pc.gamma;
  ts.exploration.start = pc.eps_start;
  ts.exploration.decay = pc.eps_decay;
  ts.exploration.floor = pc.eps_min;
  ts.exploration.p_heuristic = pc.p_heuristic;
  ts.exploration.heuristic_compute_prob = pc.heuristic_compute_prob;
  ts.target_sync_period = pc.target_sync_period;
  return ts;
}

inline std::string curve_csv(const std::vector<EpochStats>& curve) {
  std::ostringstream out;
  out << "epoch,mean_reward,loss,epsilon\n";
  for (const EpochStats& e : curve)
    out << e.epoch << ',' << format_double(e.mean_reward) << ',' << format_double(e.mean_loss) << ','
        << format_double(e.epsilon) << '\n';
  return out.str();
}

// Trains the requested DRL variant, writing checkpoint.json and curve.csv.
// Resumes (weights, moments, epoch, epsilon schedule) when the configured
// checkpoint file exists. On divergence the last consistent state is written
// to checkpoint.diverged.json before rethrowing.
inline std::filesystem::path train_experiment(const ExperimentConfig& cfg) {
  const std::string kind = cfg.policy.kind;
  if (!is_drl_kind(kind))
    throw std::invalid_argument("policy '" + kind + "' is not trainable; pick isatcr, d3qn_local or ddqn_local");
  Trainer trainer(cfg.sim, train_settings_from(cfg.policy), net_config_for(kind, cfg.policy),
                  encoder_for(kind), cfg.seed);
  int remaining = cfg.policy.epochs;
  if (!cfg.policy.checkpoint.empty() && std::filesystem::exists(cfg.policy.checkpoint)) {
    std::ifstream in(cfg.policy.checkpoint);
    json cp;
    in >> cp;
    checkpoint_restore(trainer, cp);
    remaining = std::max(0, cfg.policy.epochs - trainer.epoch());
  }
  const std::filesystem::path dir(cfg.output_dir);
  try {
    trainer.run(remaining);
  } catch (const std::exception&) {
    write_text_file(dir / "checkpoint.diverged.json",
                    checkpoint_to_json(trainer, kind).dump() + "\n");
    throw;
  }
  write_text_file(dir / "checkpoint.json", checkpoint_to_json(trainer, kind).dump() + "\n");
  write_text_file(dir / "curve.csv", curve_csv(trainer.curve()));
  return dir / "checkpoint.json";
}

// ---- report ----------------------------------------------------------------------

// Turns sweep/run/train outputs into plot-ready data series: one file per
// figure axis, the computing-time CDF, and the reward curve when present.
inline void report_experiment(const std::string& in_dir, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path in(in_dir);
  bool produced = false;

  if (fs::exists(in / "combined.csv")) {
    std::ifstream comb(in / "combined.csv");
    std::string header;
    std::getline(comb, header);
    std::ostringstream delay, loss, hops;
    delay << "axis_value,policy,delay\n";
    loss << "axis_value,policy,loss\n";
    hops << "axis_value,policy,hops\n";
    std::string line;
    while (std::getline(comb, line)) {
      std::istringstream ss(line);
      std::string axis, policy, status, d, l, h;
      std::getline(ss, axis, ',');
      std::getline(ss, policy, ',');
      std::getline(ss, status, ',');
      std::getline(ss, d, ',');
      std::getline(ss, l, ',');
      std::getline(ss, h, ',');
      if (status != "ok") continue;
      delay << axis << ',' << policy << ',' << d << '\n';
      loss << axis << ',' << policy << ',' << l << '\n';
      hops << axis << ',' << policy << ',' << h << '\n';
    }
    write_text_file(fs::path(out_dir) / "delay_vs_axis.csv", delay.str());
    write_text_file(fs::path(out_dir) / "loss_vs_axis.csv", loss.str());
    write_text_file(fs::path(out_dir) / "hops_vs_axis.csv", hops.str());
    produced = true;
  }
  if (fs::exists(in / "cdf.csv")) {
    fs::copy_file(in / "cdf.csv", fs::path(out_dir) / "compute_time_cdf.csv",
                  fs::copy_options::overwrite_existing);
    produced = true;
  }
  if (fs::exists(in / "curve.csv")) {
    fs::copy_file(in / "curve.csv", fs::path(out_dir) / "reward_vs_epoch.csv",
                  fs::copy_options::overwrite_existing);
    produced = true;
  }
  if (!produced)
    throw std::invalid_argument("no combined.csv, cdf.csv or curve.csv under " + in_dir);
}

}  // namespace isatcr
