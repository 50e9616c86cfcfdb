#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "isatcr/constellation.hpp"
#include "isatcr/embedding.hpp"
#include "isatcr/netview.hpp"
#include "isatcr/rng.hpp"

namespace isatcr {

enum class TaskType { compression, inference };
enum class TaskOutcome { in_flight, delivered, dropped };

// Four-way delay decomposition. total() must always equal the wall-clock
// span from birth to ground arrival for delivered tasks.
struct DelayRecord {
  double t_p = 0.0;  // propagation
  double t_t = 0.0;  // transmission (serialization)
  double t_q = 0.0;  // queuing and other waits
  double t_c = 0.0;  // computing

  double total() const { return t_p + t_t + t_q + t_c; }
};

enum class LogKind : std::uint8_t {
  Birth, Admit, Drop, TxStart, TxAbort, TxEnd, Arrive, CqEnq, CompStart, CompEnd,
  DlEnq, DlStart, DlAbort, DlEnd, Ground, Decision, Reinject
};

struct TaskLogEntry {
  double t = 0.0;
  LogKind kind{};
  int where = -1;  // satellite (or direction for Tx*, action for Decision)
};

// An observation subtask (s, d, s') moving through the constellation.
struct Task {
  int id = -1;
  TaskType type = TaskType::compression;
  double size_bytes = 0.0;    // s
  double demand_flop = 0.0;   // d
  double out_bytes = 0.0;     // s'
  bool computed = false;      // x_c
  double birth_s = 0.0;       // t_b
  int source = -1;
  int destination = -1;
  bool destination_was_visible = false;

  int current_sat = -1;   // resident satellite, or the receiver while in flight
  int resident_sat = -1;  // satellite currently charged for this task's bytes
  int computed_at = -1;
  int isl_hops = 0;
  TaskOutcome outcome = TaskOutcome::in_flight;
  double end_s = 0.0;
  double last_decision_s = 0.0;

  DelayRecord delay;
  double cursor_s = 0.0;  // online attribution cursor
  std::vector<std::pair<int, double>> hop_trace;

  double current_size() const { return computed ? out_bytes : size_bytes; }
};

// Two-state Markov chain over every undirected ISL, stepped once per
// detection period: normal edges fail with probability p, faulty edges
// recover with probability q. Steady-state faulty fraction is p/(p+q).
struct FailureProcess {
  double p_fail = 0.0;
  double q_recover = 0.0;
  double step_s = 0.25;
  std::vector<std::uint8_t> faulty;

  static FailureProcess from_target(double pi1, double mean_repair_s, double step_s, int n_edges) {
    if (pi1 < 0.0 || pi1 >= 1.0) throw std::invalid_argument("failure: pi1 must be in [0,1)");
    if (mean_repair_s <= 0.0) throw std::invalid_argument("failure: mean repair must be positive");
    FailureProcess fp;
    fp.step_s = step_s;
    fp.q_recover = std::min(1.0, step_s / mean_repair_s);
    fp.p_fail = pi1 * fp.q_recover / (1.0 - pi1);
    fp.faulty.assign(static_cast<std::size_t>(n_edges), 0);
    return fp;
  }

  std::vector<LinkEvent> step(Rng& rng) {
    std::vector<LinkEvent> events;
    for (std::size_t e = 0; e < faulty.size(); ++e) {
      const double u = rng.uniform();
      if (!faulty[e]) {
        if (u < p_fail) {
          faulty[e] = 1;
          events.push_back({static_cast<int>(e), false});
        }
      } else if (u < q_recover) {
        faulty[e] = 0;
        events.push_back({static_cast<int>(e), true});
      }
    }
    return events;
  }

  double steady_state_faulty() const { return p_fail + q_recover > 0 ? p_fail / (p_fail + q_recover) : 0.0; }
};

struct LatLonRect {
  double lat_min, lat_max, lon_min, lon_max;
  bool contains(double lat, double lon) const {
    return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
  }
};

// Coarse continent boxes; configurable, only used to skew task arrival rates.
inline std::vector<LatLonRect> default_land_rects() {
  return {{15, 72, -168, -52}, {-56, 13, -82, -34}, {36, 71, -10, 60},
          {-35, 37, -18, 52},  {5, 75, 60, 180},    {-44, -10, 112, 154}};
}

struct ScriptedBirth {
  double t = 0.0;
  int source = 0;
  TaskType type = TaskType::compression;
  double size_bytes = 0.0;
  double demand_flop = 0.0;
  double out_bytes = 0.0;
  int destination = -1;  // -1: select as usual
};

struct SimConfig {
  ConstellationConfig constellation;
  std::vector<GroundStation> ground_stations = default_ground_stations();

  // traffic
  double aggregate_rate = 70.0;  // long-run tasks/s over the whole network
  double compression_fraction = 0.5;
  double duty_cycle = 0.5;  // observation on-time fraction
  double mean_on_s = 40.0;
  std::vector<LatLonRect> land_rects = default_land_rects();
  double size_min_bytes = 25e6, size_max_bytes = 75e6;
  double ratio_min = 9.0, ratio_max = 11.0;
  double comp_demand_min = 1200.0, comp_demand_max = 2000.0;  // FLOP/byte
  double inf_demand_min = 2400.0, inf_demand_max = 4000.0;
  double inference_out_bytes = 5e3;

  // resources
  double compute_flops = 50e9;
  double storage_bytes = 1e9;
  double isl_rate_bps = 1.2e9;
  double downlink_rate_bps = 3e9;

  // control plane
  double broadcast_period_s = 0.1;  // 0 disables representation broadcasts
  double qc_cap_s = 10.0;

  // failures
  double failure_pi1 = 0.03;
  double mean_repair_s = 8.0;
  double detection_period_s = 0.25;
  bool drop_inflight_on_failure = false;

  // reward-related threshold shared with the agent layer
  double storage_reserve_fraction = 0.8;

  bool log_events = false;
  std::vector<ScriptedBirth> scripted_births;  // test/experiment hook

  void validate() const {
    constellation.validate();
    for (const auto& gs : ground_stations) gs.validate();
    if (aggregate_rate < 0.0) throw std::invalid_argument("traffic: aggregate rate must be >= 0");
    if (duty_cycle <= 0.0 || duty_cycle > 1.0) throw std::invalid_argument("traffic: duty cycle must be in (0,1]");
    if (storage_bytes <= 0.0 || compute_flops <= 0.0) throw std::invalid_argument("resources must be positive");
    if (detection_period_s <= 0.0) throw std::invalid_argument("detection period must be positive");
  }
};

// Per-satellite Poisson rate while observing: land satellites generate at
// twice the ocean rate, scaled so the long-run network total is `aggregate`.
inline double traffic_per_sat_rate(double aggregate, int n_land, int n_ocean, double duty,
                                   bool is_land) {
  const double denom = duty * (2.0 * n_land + n_ocean);
  if (denom <= 0.0) return 0.0;
  return aggregate / denom * (is_land ? 2.0 : 1.0);
}

struct Instrumentation {
  long decisions = 0;
  int state_width_min = std::numeric_limits<int>::max();
  int state_width_max = 0;
  long broadcasts = 0;
  int payload_width_min = std::numeric_limits<int>::max();
  int payload_width_max = 0;
  long control_messages = 0;

  void record_state_width(int w) {
    state_width_min = std::min(state_width_min, w);
    state_width_max = std::max(state_width_max, w);
  }
  void record_broadcast(int payload_width, int fanout) {
    ++broadcasts;
    payload_width_min = std::min(payload_width_min, payload_width);
    payload_width_max = std::max(payload_width_max, payload_width);
    control_messages += fanout;
  }
};

// Decision actions: 0..3 push to the transmission queue of that grid
// direction, 4 pushes to the local compute queue. Wait retries at the next
// detection boundary; Abort drops the task (used by the centralized planner).
struct Action {
  static constexpr int kComputeIndex = 4;
  int value = 0;

  static Action direction(int d) { return Action{d}; }
  static Action compute() { return Action{kComputeIndex}; }
  static Action wait() { return Action{-1}; }
  static Action abort() { return Action{-2}; }

  bool is_direction() const { return value >= 0 && value < 4; }
  bool is_compute() const { return value == kComputeIndex; }
  bool is_wait() const { return value == -1; }
  bool is_abort() const { return value == -2; }
};

class Simulator;

// Everything a policy may look at when a task asks for its next step.
// Fill values for dead directions are applied by the state encoders, not
// here; heuristics want the raw view.
struct DecisionContext {
  int sat = 0;
  double now = 0.0;
  const Task* task = nullptr;
  std::array<bool, 4> dir_live{};
  std::array<int, 4> nbr_flat{};
  std::array<GraphRep, 4> reps{};       // fault-substituted neighbor representations
  std::array<NodeFeature, 4> nbr_raw{}; // latest received area-1 features (fault-substituted)
  NodeFeature self;
  std::array<double, 4> edge_queue_norm{};  // tx queue bytes / M per live direction
  std::array<int, 4> nbr_hops{};            // hops from neighbor j to destination
  int diameter = 1;
  double used_bytes = 0.0;
  double storage_cap = 1.0;
  bool storage_above_reserve = false;
  const Simulator* sim = nullptr;

  bool any_live() const { return dir_live[0] || dir_live[1] || dir_live[2] || dir_live[3]; }
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action decide(const DecisionContext& ctx) = 0;
  virtual void on_terminal(const Task& task, bool delivered, double t) { (void)task, (void)delivered, (void)t; }
};

namespace detail {

enum class EventKind : int {
  TxEnd = 0,
  ComputeEnd = 1,
  DownlinkEnd = 2,
  GroundArrive = 3,
  TaskArrive = 4,
  ControlDeliver = 5,
  DetectionTick = 6,
  RetryDecision = 7,
  BroadcastTick = 8,
  ObsToggle = 9,
  TaskBirth = 10,
};

struct Event {
  double t = 0.0;
  EventKind kind{};
  std::uint64_t seq = 0;
  int sat = -1;
  int dir = -1;
  int task = -1;
  std::uint32_t gen = 0;
  std::array<double, 12> payload{};
  double payload_time = 0.0;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
    return a.seq > b.seq;
  }
};

struct SatRuntime {
  double used_bytes = 0.0;
  bool obs_on = false;
  bool is_land = false;

  std::deque<int> cq;
  double cq_queued_flop = 0.0;
  int cq_active = -1;
  double cq_start = 0.0, cq_end = 0.0;
  std::uint32_t cq_gen = 0;
  double busy_compute_s = 0.0;

  std::array<std::deque<int>, 4> txq;
  std::array<double, 4> txq_bytes{};
  std::array<int, 4> tx_active{-1, -1, -1, -1};
  std::array<double, 4> tx_start{}, tx_end{};
  std::array<std::uint32_t, 4> tx_gen{};

  std::deque<int> dlq;
  double dlq_bytes = 0.0;
  int dl_active = -1;
  double dl_start = 0.0, dl_end = 0.0;
  std::uint32_t dl_gen = 0;

  NeighborInbox inbox;

  bool visible = false;
  int best_gs = -1;
  double best_slant_km = 0.0;

  std::uint32_t birth_gen = 0;

  Rng obs_rng{0}, arrival_rng{0}, attr_rng{0};
};

}  // namespace detail

// Strictly single-threaded deterministic event loop. Identical (config,
// master seed) reproduces identical event sequences and metrics; the policy
// is the only pluggable part and task/failure streams do not depend on it.
class Simulator {
 public:
  Simulator(const SimConfig& cfg, Policy& policy, std::uint64_t master_seed)
      : cfg_(cfg),
        policy_(&policy),
        netview_(cfg.constellation),
        failure_rng_(Rng::stream(master_seed, 1)),
        d_max_km_(compute_d_max(cfg.constellation)) {
    cfg_.validate();
    const int n = cfg_.constellation.total_sats();
    sats_.resize(static_cast<std::size_t>(n));
    failures_ = FailureProcess::from_target(cfg_.failure_pi1, cfg_.mean_repair_s,
                                            cfg_.detection_period_s, edge_count(cfg_.constellation));
    compute_busy_.assign(static_cast<std::size_t>(n), 0.0);
    for (int s = 0; s < n; ++s) {
      auto& sat = sats_[static_cast<std::size_t>(s)];
      sat.obs_rng = Rng::stream(master_seed, 2, static_cast<std::uint64_t>(s));
      sat.arrival_rng = Rng::stream(master_seed, 3, static_cast<std::uint64_t>(s));
      sat.attr_rng = Rng::stream(master_seed, 4, static_cast<std::uint64_t>(s));
    }
    refresh_geometry(0.0);
    if (cfg_.aggregate_rate > 0.0) {
      for (int s = 0; s < n; ++s) start_observation_cycle(s, 0.0, /*initial=*/true);
    }
    for (const ScriptedBirth& b : cfg_.scripted_births) {
      detail::Event ev;
      ev.t = b.t;
      ev.kind = detail::EventKind::TaskBirth;
      ev.sat = b.source;
      ev.gen = kScriptedGen;
      ev.task = static_cast<int>(&b - cfg_.scripted_births.data());
      push(ev);
    }
    if (cfg_.broadcast_period_s > 0.0) schedule(0.0, detail::EventKind::BroadcastTick);
    schedule(cfg_.detection_period_s, detail::EventKind::DetectionTick);
  }

  // Run the event loop until sim time `until_s`.
  void run_until(double until_s) {
    horizon_s_ = until_s;
    while (!events_.empty()) {
      const detail::Event ev = events_.top();
      if (ev.t > until_s) break;
      events_.pop();
      now_ = ev.t;
      dispatch(ev);
    }
    now_ = until_s;
  }

  double now() const { return now_; }
  const SimConfig& config() const { return cfg_; }
  NetView& netview() { return netview_; }
  const NetView& netview() const { return netview_; }
  const std::vector<Task>& tasks() const { return tasks_; }
  Task& task(int id) { return tasks_[static_cast<std::size_t>(id)]; }
  Instrumentation& instrumentation() const { return instr_; }
  double d_max_km() const { return d_max_km_; }
  int diameter() const { return NetView::torus_diameter(cfg_.constellation); }

  long generated_count() const { return generated_; }
  long delivered_count() const { return delivered_; }
  long dropped_count() const { return dropped_; }
  long in_flight_count() const { return generated_ - delivered_ - dropped_; }
  const std::vector<double>& per_sat_compute_seconds() const { return compute_busy_; }
  const std::vector<TaskLogEntry>& event_log(int task_id) const {
    return logs_.at(static_cast<std::size_t>(task_id));
  }

  bool sat_visible(int flat) const { return sats_[static_cast<std::size_t>(flat)].visible; }
  double sat_used_bytes(int flat) const { return sats_[static_cast<std::size_t>(flat)].used_bytes; }
  bool sat_obs_on(int flat) const { return sats_[static_cast<std::size_t>(flat)].obs_on; }

  // Fault-substituted view of one satellite's inbox, as aggregation sees it.
  std::array<GraphRep, 4> current_inbox(int flat) const {
    const SatelliteId sid = SatelliteId::from_flat(cfg_.constellation, flat);
    std::array<bool, 4> live{};
    for (int d = 0; d < 4; ++d) live[static_cast<std::size_t>(d)] = netview_.direction_live(sid, d);
    return substituted_reps(sats_[static_cast<std::size_t>(flat)].inbox, live, now_);
  }

  // Force a single link state change outside the Markov process (tests and
  // fault-injection experiments). Applies the same service side effects as a
  // detection-tick event.
  void force_link(int edge, bool up) {
    netview_.apply_failure_events({{edge, up}}, now_);
    failures_.faulty[static_cast<std::size_t>(edge)] = up ? 0 : 1;
    const auto [a, b] = edge_endpoints(cfg_.constellation, edge);
    for (int flat : {a, b}) {
      const SatelliteId sid = SatelliteId::from_flat(cfg_.constellation, flat);
      for (int d = 0; d < 4; ++d) {
        if (edge_for_direction(cfg_.constellation, sid, d) != edge) continue;
        if (up)
          try_start_tx(flat, d);
        else
          abort_tx(flat, d);
      }
    }
  }

  // Current node feature; compute drain is clipped at the configured cap.
  NodeFeature feature(int flat) const {
    const auto& sat = sats_[static_cast<std::size_t>(flat)];
    NodeFeature f;
    f.p = sat.obs_on ? 1.0 : 0.0;
    f.m_r = std::max(0.0, 1.0 - sat.used_bytes / cfg_.storage_bytes);
    double flop = sat.cq_queued_flop;
    if (sat.cq_active >= 0) flop += std::max(0.0, (sat.cq_end - now_)) * cfg_.compute_flops;
    f.q_c = std::min(cfg_.qc_cap_s, flop / cfg_.compute_flops);
    double tx_bytes = sat.dlq_bytes;
    for (double b : sat.txq_bytes) tx_bytes += b;
    f.q_t = tx_bytes / cfg_.storage_bytes;
    return f;
  }

  // Plan-time views used by the centralized baseline.
  double tx_queue_bytes(int flat, int dir) const {
    return sats_[static_cast<std::size_t>(flat)].txq_bytes[static_cast<std::size_t>(dir)];
  }
  double compute_drain_s(int flat) const {
    const auto& sat = sats_[static_cast<std::size_t>(flat)];
    double flop = sat.cq_queued_flop;
    if (sat.cq_active >= 0) flop += std::max(0.0, (sat.cq_end - now_)) * cfg_.compute_flops;
    return flop / cfg_.compute_flops;
  }
  double isl_distance_now(int a, int b) const {
    const Position pa = propagate(cfg_.constellation, SatelliteId::from_flat(cfg_.constellation, a), now_);
    const Position pb = propagate(cfg_.constellation, SatelliteId::from_flat(cfg_.constellation, b), now_);
    return isl_distance(pa, pb);
  }

  // Storage-ledger audit used by tests: recompute every satellite's usage
  // from resident tasks and compare with the incremental ledger.
  double max_ledger_error() const {
    std::vector<double> sums(sats_.size(), 0.0);
    for (const Task& t : tasks_)
      if (t.resident_sat >= 0) sums[static_cast<std::size_t>(t.resident_sat)] += t.current_size();
    double worst = 0.0;
    for (std::size_t s = 0; s < sats_.size(); ++s)
      worst = std::max(worst, std::abs(sums[s] - sats_[s].used_bytes));
    return worst;
  }

  DecisionContext make_context(int sat_flat, const Task& task) const {
    DecisionContext ctx;
    ctx.sat = sat_flat;
    ctx.now = now_;
    ctx.task = &task;
    ctx.self = feature(sat_flat);
    ctx.diameter = diameter();
    const SatelliteId sid = SatelliteId::from_flat(cfg_.constellation, sat_flat);
    const auto nbrs = grid_neighbors(cfg_.constellation, sid);
    const auto& sat = sats_[static_cast<std::size_t>(sat_flat)];
    for (int d = 0; d < 4; ++d) {
      ctx.dir_live[static_cast<std::size_t>(d)] = netview_.direction_live(sid, d);
      ctx.nbr_flat[static_cast<std::size_t>(d)] = nbrs[static_cast<std::size_t>(d)].flat(cfg_.constellation);
      ctx.edge_queue_norm[static_cast<std::size_t>(d)] =
          sat.txq_bytes[static_cast<std::size_t>(d)] / cfg_.storage_bytes;
    }
    ctx.reps = substituted_reps(sat.inbox, ctx.dir_live, now_);
    {
      std::array<NodeFeature, 4> raw{};
      std::array<NodeFeature, 4> live_buf{};
      std::size_t n_live = 0;
      for (std::size_t d = 0; d < 4; ++d) {
        NodeFeature nf;
        const auto& rep = sat.inbox.rep[d];
        nf.p = rep[0];
        nf.m_r = rep[1];
        nf.q_c = rep[2];
        nf.q_t = rep[3];
        raw[d] = nf;
        if (ctx.dir_live[d]) live_buf[n_live++] = nf;
      }
      const NodeFeature fault = fault_feature(std::span<const NodeFeature>(live_buf.data(), n_live));
      for (std::size_t d = 0; d < 4; ++d) ctx.nbr_raw[d] = ctx.dir_live[d] ? raw[d] : fault;
    }
    // hops from each neighbor to the destination over the live topology
    const HopField& field = netview_.hop_field(task.destination);
    for (int d = 0; d < 4; ++d)
      ctx.nbr_hops[static_cast<std::size_t>(d)] = field.at(ctx.nbr_flat[static_cast<std::size_t>(d)]);
    ctx.used_bytes = sat.used_bytes;
    ctx.storage_cap = cfg_.storage_bytes;
    ctx.storage_above_reserve = sat.used_bytes >= cfg_.storage_reserve_fraction * cfg_.storage_bytes;
    ctx.sim = this;
    return ctx;
  }

 private:
  static constexpr std::uint32_t kScriptedGen = 0xffffffffu;

  void push(detail::Event ev) {
    ev.seq = ++seq_;
    events_.push(ev);
  }

  void schedule(double t, detail::EventKind kind, int sat = -1, int dir = -1, int task = -1,
                std::uint32_t gen = 0) {
    detail::Event ev;
    ev.t = t;
    ev.kind = kind;
    ev.sat = sat;
    ev.dir = dir;
    ev.task = task;
    ev.gen = gen;
    push(ev);
  }

  void dispatch(const detail::Event& ev) {
    using detail::EventKind;
    switch (ev.kind) {
      case EventKind::TxEnd: handle_tx_end(ev); break;
      case EventKind::ComputeEnd: handle_compute_end(ev); break;
      case EventKind::DownlinkEnd: handle_downlink_end(ev); break;
      case EventKind::GroundArrive: handle_ground_arrive(ev); break;
      case EventKind::TaskArrive: handle_task_arrive(ev); break;
      case EventKind::ControlDeliver: handle_control_deliver(ev); break;
      case EventKind::DetectionTick: handle_detection_tick(); break;
      case EventKind::RetryDecision: handle_retry(ev); break;
      case EventKind::BroadcastTick: handle_broadcast_tick(); break;
      case EventKind::ObsToggle: handle_obs_toggle(ev); break;
      case EventKind::TaskBirth: handle_task_birth(ev); break;
    }
  }

  // ---- delay attribution -------------------------------------------------

  enum class Bucket { P, T, Q, C };

  void attribute(Task& t, double until, Bucket b) {
    const double span = until - t.cursor_s;
    if (span < -1e-9) throw std::logic_error("delay attribution went backwards");
    switch (b) {
      case Bucket::P: t.delay.t_p += span; break;
      case Bucket::T: t.delay.t_t += span; break;
      case Bucket::Q: t.delay.t_q += span; break;
      case Bucket::C: t.delay.t_c += span; break;
    }
    t.cursor_s = until;
  }

  void log(const Task& t, LogKind kind, int where) {
    if (!cfg_.log_events) return;
    logs_[static_cast<std::size_t>(t.id)].push_back({now_, kind, where});
  }

  // ---- geometry / visibility / traffic classes ---------------------------

  void refresh_geometry(double t) {
    const int n = cfg_.constellation.total_sats();
    prev_visible_.assign(static_cast<std::size_t>(n), false);
    n_land_ = n_ocean_ = 0;
    for (int s = 0; s < n; ++s) {
      auto& sat = sats_[static_cast<std::size_t>(s)];
      prev_visible_[static_cast<std::size_t>(s)] = sat.visible;
      const Position p = propagate(cfg_.constellation, SatelliteId::from_flat(cfg_.constellation, s), t);
      double best = std::numeric_limits<double>::max();
      int best_gs = -1;
      for (std::size_t g = 0; g < cfg_.ground_stations.size(); ++g) {
        const Position gp = ground_position(cfg_.ground_stations[g], t);
        const double d = isl_distance(p, gp);
        if (d < best) {
          best = d;
          best_gs = static_cast<int>(g);
        }
      }
      sat.visible = !cfg_.ground_stations.empty() && best <= d_max_km_;
      sat.best_gs = best_gs;
      sat.best_slant_km = best;
      // land/ocean by subsatellite point in the Earth-fixed frame
      const double lat = std::asin(std::clamp(p.z / p.norm(), -1.0, 1.0)) * 180.0 / M_PI;
      double lon = std::atan2(p.y, p.x) - kEarthRotationRadPerS * t;
      lon = std::fmod(lon * 180.0 / M_PI + 540.0, 360.0) - 180.0;
      sat.is_land = false;
      for (const auto& rect : cfg_.land_rects)
        if (rect.contains(lat, lon)) {
          sat.is_land = true;
          break;
        }
      (sat.is_land ? n_land_ : n_ocean_)++;
    }
  }

  double arrival_rate(int flat) const {
    const auto& sat = sats_[static_cast<std::size_t>(flat)];
    return traffic_per_sat_rate(cfg_.aggregate_rate, n_land_, n_ocean_, cfg_.duty_cycle, sat.is_land);
  }

  void start_observation_cycle(int flat, double t, bool initial) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    if (initial) {
      sat.obs_on = cfg_.duty_cycle >= 1.0 || sat.obs_rng.bernoulli(cfg_.duty_cycle);
      if (sat.obs_on) schedule_next_birth(flat, t);
      if (cfg_.duty_cycle >= 1.0) return;  // always observing, no toggling
      const double mean = sat.obs_on ? cfg_.mean_on_s : off_mean_s();
      schedule(t + sat.obs_rng.exponential(mean), detail::EventKind::ObsToggle, flat);
      return;
    }
    sat.obs_on = !sat.obs_on;
    sat.birth_gen++;
    if (sat.obs_on) schedule_next_birth(flat, t);
    const double mean = sat.obs_on ? cfg_.mean_on_s : off_mean_s();
    schedule(t + sat.obs_rng.exponential(mean), detail::EventKind::ObsToggle, flat);
  }

  double off_mean_s() const {
    return cfg_.mean_on_s * (1.0 - cfg_.duty_cycle) / cfg_.duty_cycle;
  }

  void schedule_next_birth(int flat, double t) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    const double rate = arrival_rate(flat);
    if (rate <= 0.0) return;
    schedule(t + sat.arrival_rng.exponential(1.0 / rate), detail::EventKind::TaskBirth, flat, -1, -1,
             sat.birth_gen);
  }

  // ---- event handlers -----------------------------------------------------

  void handle_obs_toggle(const detail::Event& ev) { start_observation_cycle(ev.sat, now_, false); }

  void handle_task_birth(const detail::Event& ev) {
    if (ev.gen == kScriptedGen) {
      const ScriptedBirth& b = cfg_.scripted_births[static_cast<std::size_t>(ev.task)];
      spawn_task(b.source, b.type, b.size_bytes, b.demand_flop, b.out_bytes, b.destination);
      return;
    }
    auto& sat = sats_[static_cast<std::size_t>(ev.sat)];
    if (ev.gen != sat.birth_gen || !sat.obs_on) return;  // stale chain after a toggle
    draw_and_spawn(ev.sat);
    schedule_next_birth(ev.sat, now_);
  }

  void draw_and_spawn(int flat) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    const bool compression = sat.attr_rng.bernoulli(cfg_.compression_fraction);
    const double s = sat.attr_rng.uniform(cfg_.size_min_bytes, cfg_.size_max_bytes);
    double d, out;
    if (compression) {
      d = s * sat.attr_rng.uniform(cfg_.comp_demand_min, cfg_.comp_demand_max);
      out = s / sat.attr_rng.uniform(cfg_.ratio_min, cfg_.ratio_max);
    } else {
      d = s * sat.attr_rng.uniform(cfg_.inf_demand_min, cfg_.inf_demand_max);
      out = cfg_.inference_out_bytes;
    }
    spawn_task(flat, compression ? TaskType::compression : TaskType::inference, s, d, out);
  }

  void spawn_task(int flat, TaskType type, double s, double d, double out, int dest_override = -1) {
    Task t;
    t.id = static_cast<int>(tasks_.size());
    t.type = type;
    t.size_bytes = s;
    t.demand_flop = d;
    t.out_bytes = out;
    t.birth_s = now_;
    t.cursor_s = now_;
    t.last_decision_s = now_;
    t.source = flat;
    t.current_sat = flat;
    tasks_.push_back(t);
    if (cfg_.log_events) logs_.emplace_back();
    ++generated_;
    if (now_ >= measure_from_s_) ++measured_generated_;

    Task& task = tasks_.back();
    log(task, LogKind::Birth, flat);
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    if (sat.used_bytes + task.size_bytes > cfg_.storage_bytes) {
      drop_task(task, flat);
      return;
    }
    sat.used_bytes += task.size_bytes;
    task.resident_sat = flat;
    task.hop_trace.emplace_back(flat, now_);
    log(task, LogKind::Admit, flat);

    if (dest_override >= 0) {
      task.destination = dest_override;
      task.destination_was_visible = sats_[static_cast<std::size_t>(dest_override)].visible;
      decision_point(task);
      return;
    }
    if (sat.visible) {
      // ground-visible sources downlink raw data without onboard processing
      task.destination = flat;
      task.destination_was_visible = true;
      enqueue_downlink(flat, task);
      return;
    }
    task.destination = select_destination(flat);
    task.destination_was_visible = sats_[static_cast<std::size_t>(task.destination)].visible;
    decision_point(task);
  }

  // Nearest ground-visible satellite in live hops, ties by lowest flat id.
  // With no satellite visible, fall back to the one closest to any station.
  int select_destination(int from_flat) {
    const int n = cfg_.constellation.total_sats();
    int best = -1, best_hops = std::numeric_limits<int>::max();
    for (int c = 0; c < n; ++c) {
      if (!sats_[static_cast<std::size_t>(c)].visible) continue;
      const int h = netview_.hop_field(c).at(from_flat);
      if (h == HopField::kUnreachable) continue;
      if (h < best_hops) {
        best_hops = h;
        best = c;
      }
    }
    if (best >= 0) return best;
    double best_slant = std::numeric_limits<double>::max();
    for (int c = 0; c < n; ++c) {
      const double s = sats_[static_cast<std::size_t>(c)].best_slant_km;
      if (s < best_slant) {
        best_slant = s;
        best = c;
      }
    }
    return best < 0 ? from_flat : best;
  }

  void decision_point(Task& task) {
    const int sat_flat = task.current_sat;
    if (sat_flat == task.destination) {
      enqueue_downlink(sat_flat, task);
      return;
    }
    DecisionContext ctx = make_context(sat_flat, task);
    ++instr_.decisions;
    const Action a = policy_->decide(ctx);
    log(task, LogKind::Decision, a.value);
    if (a.is_wait()) {
      schedule(next_boundary(), detail::EventKind::RetryDecision, sat_flat, -1, task.id);
      return;
    }
    if (a.is_abort()) {
      drop_task(task, sat_flat);
      return;
    }
    task.last_decision_s = now_;
    if (a.is_compute()) {
      if (task.computed) throw std::logic_error("masked action: compute chosen for a computed task");
      enqueue_compute(sat_flat, task);
      return;
    }
    if (!ctx.dir_live[static_cast<std::size_t>(a.value)])
      throw std::logic_error("policy chose a dead direction");
    enqueue_tx(sat_flat, a.value, task);
  }

  double next_boundary() const {
    const double k = std::floor(now_ / cfg_.detection_period_s + 1e-9) + 1.0;
    return k * cfg_.detection_period_s;
  }

  void handle_retry(const detail::Event& ev) {
    Task& task = tasks_[static_cast<std::size_t>(ev.task)];
    if (task.outcome != TaskOutcome::in_flight) return;
    decision_point(task);
  }

  // ---- queues -------------------------------------------------------------

  void enqueue_compute(int flat, Task& task) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    sat.cq.push_back(task.id);
    sat.cq_queued_flop += task.demand_flop;
    log(task, LogKind::CqEnq, flat);
    try_start_compute(flat);
  }

  void try_start_compute(int flat) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    if (sat.cq_active >= 0 || sat.cq.empty()) return;
    const int tid = sat.cq.front();
    sat.cq.pop_front();
    Task& task = tasks_[static_cast<std::size_t>(tid)];
    sat.cq_queued_flop -= task.demand_flop;
    sat.cq_active = tid;
    sat.cq_start = now_;
    sat.cq_end = now_ + task.demand_flop / cfg_.compute_flops;
    sat.cq_gen++;
    log(task, LogKind::CompStart, flat);
    schedule(sat.cq_end, detail::EventKind::ComputeEnd, flat, -1, tid, sat.cq_gen);
  }

  void handle_compute_end(const detail::Event& ev) {
    auto& sat = sats_[static_cast<std::size_t>(ev.sat)];
    if (ev.gen != sat.cq_gen || sat.cq_active != ev.task) return;
    Task& task = tasks_[static_cast<std::size_t>(ev.task)];
    attribute(task, sat.cq_start, Bucket::Q);
    attribute(task, now_, Bucket::C);
    sat.used_bytes -= task.size_bytes - task.out_bytes;
    task.computed = true;
    task.computed_at = ev.sat;
    if (now_ >= measure_from_s_)
      compute_busy_[static_cast<std::size_t>(ev.sat)] += now_ - sat.cq_start;
    sat.cq_active = -1;
    log(task, LogKind::CompEnd, ev.sat);
    try_start_compute(ev.sat);
    decision_point(task);
  }

  void enqueue_tx(int flat, int dir, Task& task) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    sat.txq[static_cast<std::size_t>(dir)].push_back(task.id);
    sat.txq_bytes[static_cast<std::size_t>(dir)] += task.current_size();
    try_start_tx(flat, dir);
  }

  void try_start_tx(int flat, int dir) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    if (sat.tx_active[static_cast<std::size_t>(dir)] >= 0) return;
    if (sat.txq[static_cast<std::size_t>(dir)].empty()) return;
    if (!netview_.direction_live(SatelliteId::from_flat(cfg_.constellation, flat), dir)) return;
    const int tid = sat.txq[static_cast<std::size_t>(dir)].front();
    sat.txq[static_cast<std::size_t>(dir)].pop_front();
    Task& task = tasks_[static_cast<std::size_t>(tid)];
    sat.tx_active[static_cast<std::size_t>(dir)] = tid;
    sat.tx_start[static_cast<std::size_t>(dir)] = now_;
    sat.tx_end[static_cast<std::size_t>(dir)] = now_ + task.current_size() * 8.0 / cfg_.isl_rate_bps;
    sat.tx_gen[static_cast<std::size_t>(dir)]++;
    log(task, LogKind::TxStart, dir);
    schedule(sat.tx_end[static_cast<std::size_t>(dir)], detail::EventKind::TxEnd, flat, dir, tid,
             sat.tx_gen[static_cast<std::size_t>(dir)]);
  }

  void handle_tx_end(const detail::Event& ev) {
    auto& sat = sats_[static_cast<std::size_t>(ev.sat)];
    const std::size_t d = static_cast<std::size_t>(ev.dir);
    if (ev.gen != sat.tx_gen[d] || sat.tx_active[d] != ev.task) return;
    Task& task = tasks_[static_cast<std::size_t>(ev.task)];
    attribute(task, sat.tx_start[d], Bucket::Q);
    attribute(task, now_, Bucket::T);
    const double size = task.current_size();
    sat.txq_bytes[d] -= size;
    sat.used_bytes -= size;
    task.resident_sat = -1;
    sat.tx_active[d] = -1;
    log(task, LogKind::TxEnd, ev.dir);

    const SatelliteId sid = SatelliteId::from_flat(cfg_.constellation, ev.sat);
    const int nbr = grid_neighbors(cfg_.constellation, sid)[d].flat(cfg_.constellation);
    const double dist = isl_distance_now(ev.sat, nbr);
    task.current_sat = nbr;
    schedule(now_ + dist / kLightSpeedKmPerS, detail::EventKind::TaskArrive, nbr, -1, task.id);
    try_start_tx(ev.sat, ev.dir);
  }

  void handle_task_arrive(const detail::Event& ev) {
    Task& task = tasks_[static_cast<std::size_t>(ev.task)];
    auto& sat = sats_[static_cast<std::size_t>(ev.sat)];
    log(task, LogKind::Arrive, ev.sat);
    const double size = task.current_size();
    if (sat.used_bytes + size > cfg_.storage_bytes) {
      attribute(task, now_, Bucket::P);
      drop_task(task, ev.sat);
      return;
    }
    attribute(task, now_, Bucket::P);
    sat.used_bytes += size;
    task.resident_sat = ev.sat;
    ++task.isl_hops;
    task.hop_trace.emplace_back(ev.sat, now_);
    log(task, LogKind::Admit, ev.sat);
    if (ev.sat == task.destination) {
      enqueue_downlink(ev.sat, task);
      return;
    }
    decision_point(task);
  }

  // ---- downlink -----------------------------------------------------------

  void enqueue_downlink(int flat, Task& task) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    sat.dlq.push_back(task.id);
    sat.dlq_bytes += task.current_size();
    log(task, LogKind::DlEnq, flat);
    try_start_downlink(flat);
  }

  void try_start_downlink(int flat) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    if (sat.dl_active >= 0 || sat.dlq.empty() || !sat.visible) return;
    const int tid = sat.dlq.front();
    sat.dlq.pop_front();
    Task& task = tasks_[static_cast<std::size_t>(tid)];
    sat.dl_active = tid;
    sat.dl_start = now_;
    sat.dl_end = now_ + task.current_size() * 8.0 / cfg_.downlink_rate_bps;
    sat.dl_gen++;
    log(task, LogKind::DlStart, flat);
    schedule(sat.dl_end, detail::EventKind::DownlinkEnd, flat, -1, tid, sat.dl_gen);
  }

  void handle_downlink_end(const detail::Event& ev) {
    auto& sat = sats_[static_cast<std::size_t>(ev.sat)];
    if (ev.gen != sat.dl_gen || sat.dl_active != ev.task) return;
    Task& task = tasks_[static_cast<std::size_t>(ev.task)];
    attribute(task, sat.dl_start, Bucket::Q);
    attribute(task, now_, Bucket::T);
    sat.dlq_bytes -= task.current_size();
    sat.used_bytes -= task.current_size();
    task.resident_sat = -1;
    sat.dl_active = -1;
    log(task, LogKind::DlEnd, ev.sat);
    const double slant = sat.best_slant_km;
    schedule(now_ + slant / kLightSpeedKmPerS, detail::EventKind::GroundArrive, ev.sat, -1, task.id);
    try_start_downlink(ev.sat);
  }

  void handle_ground_arrive(const detail::Event& ev) {
    Task& task = tasks_[static_cast<std::size_t>(ev.task)];
    attribute(task, now_, Bucket::P);
    task.outcome = TaskOutcome::delivered;
    task.end_s = now_;
    log(task, LogKind::Ground, ev.sat);
    ++delivered_;
    if (task.birth_s >= measure_from_s_) ++measured_delivered_;
    policy_->on_terminal(task, true, now_);
  }

  void drop_task(Task& task, int at_sat) {
    attribute(task, now_, Bucket::Q);
    if (task.resident_sat >= 0) {
      sats_[static_cast<std::size_t>(task.resident_sat)].used_bytes -= task.current_size();
      task.resident_sat = -1;
    }
    task.outcome = TaskOutcome::dropped;
    task.end_s = now_;
    log(task, LogKind::Drop, at_sat);
    ++dropped_;
    if (task.birth_s >= measure_from_s_) ++measured_dropped_;
    policy_->on_terminal(task, false, now_);
  }

  // ---- control plane -------------------------------------------------------

  void handle_broadcast_tick() {
    const int n = cfg_.constellation.total_sats();
    for (int s = 0; s < n; ++s) {
      auto& sat = sats_[static_cast<std::size_t>(s)];
      const SatelliteId sid = SatelliteId::from_flat(cfg_.constellation, s);
      std::array<bool, 4> live{};
      for (int d = 0; d < 4; ++d) live[static_cast<std::size_t>(d)] = netview_.direction_live(sid, d);
      const auto inbox = substituted_reps(sat.inbox, live, now_);
      const GraphRep rep = aggregate(feature(s), inbox, kGridDegree, now_);
      int fanout = 0;
      const auto nbrs = grid_neighbors(cfg_.constellation, sid);
      for (int d = 0; d < 4; ++d) {
        if (!live[static_cast<std::size_t>(d)]) continue;
        ++fanout;
        const int nbr = nbrs[static_cast<std::size_t>(d)].flat(cfg_.constellation);
        const double dist = isl_distance_now(s, nbr);
        detail::Event ev;
        ev.t = now_ + dist / kLightSpeedKmPerS;
        ev.kind = detail::EventKind::ControlDeliver;
        ev.sat = nbr;
        ev.dir = opposite_direction(d);
        ev.payload = rep.v;
        ev.payload_time = rep.produced_at_s;
        push(ev);
      }
      instr_.record_broadcast(kGraphRepDim, fanout);
      if (trace_sink_) trace_sink_(now_, s, rep);
    }
    schedule(now_ + cfg_.broadcast_period_s, detail::EventKind::BroadcastTick);
  }

  void handle_control_deliver(const detail::Event& ev) {
    GraphRep rep;
    rep.v = ev.payload;
    rep.produced_at_s = ev.payload_time;
    sats_[static_cast<std::size_t>(ev.sat)].inbox.store(ev.dir, rep, now_);
  }

  // ---- failures and visibility ---------------------------------------------

  void handle_detection_tick() {
    const auto events = failures_.step(failure_rng_);
    netview_.apply_failure_events(events, now_);
    for (const LinkEvent& le : events) {
      const auto [a, b] = edge_endpoints(cfg_.constellation, le.edge);
      for (int flat : {a, b}) {
        const SatelliteId sid = SatelliteId::from_flat(cfg_.constellation, flat);
        for (int d = 0; d < 4; ++d) {
          if (edge_for_direction(cfg_.constellation, sid, d) != le.edge) continue;
          if (le.up)
            try_start_tx(flat, d);
          else
            abort_tx(flat, d);
        }
      }
    }

    refresh_geometry(now_);
    const int n = cfg_.constellation.total_sats();
    for (int s = 0; s < n; ++s) {
      auto& sat = sats_[static_cast<std::size_t>(s)];
      if (prev_visible_[static_cast<std::size_t>(s)] && !sat.visible) {
        on_visibility_lost(s);
      } else if (sat.visible) {
        try_start_downlink(s);
      }
    }
    schedule(now_ + cfg_.detection_period_s, detail::EventKind::DetectionTick);
  }

  void abort_tx(int flat, int dir) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    const std::size_t d = static_cast<std::size_t>(dir);
    if (sat.tx_active[d] < 0) return;
    Task& task = tasks_[static_cast<std::size_t>(sat.tx_active[d])];
    sat.tx_gen[d]++;  // invalidates the scheduled TxEnd
    sat.tx_active[d] = -1;
    log(task, LogKind::TxAbort, dir);
    if (cfg_.drop_inflight_on_failure) {
      sat.txq_bytes[d] -= task.current_size();
      drop_task(task, flat);
      return;
    }
    // retained at the sender, re-served after recovery
    sat.txq[d].push_front(task.id);
  }

  void on_visibility_lost(int flat) {
    auto& sat = sats_[static_cast<std::size_t>(flat)];
    // abort in-service downlink and re-inject the whole queue as decisions
    if (sat.dl_active >= 0) {
      Task& active = tasks_[static_cast<std::size_t>(sat.dl_active)];
      sat.dl_gen++;
      sat.dl_active = -1;
      log(active, LogKind::DlAbort, flat);
      sat.dlq.push_front(active.id);
    }
    std::deque<int> pending;
    pending.swap(sat.dlq);
    sat.dlq_bytes = 0.0;
    for (int tid : pending) {
      Task& task = tasks_[static_cast<std::size_t>(tid)];
      task.destination = select_destination(flat);
      task.destination_was_visible = sats_[static_cast<std::size_t>(task.destination)].visible;
      log(task, LogKind::Reinject, flat);
      decision_point(task);
    }
    // in-flight tasks that were heading here re-select their destination
    const int n = cfg_.constellation.total_sats();
    for (Task& task : tasks_) {
      if (task.outcome != TaskOutcome::in_flight) continue;
      if (task.destination != flat || !task.destination_was_visible) continue;
      if (task.current_sat == flat && task.resident_sat == flat) continue;  // handled above
      task.destination = select_destination(task.current_sat >= 0 ? task.current_sat : task.source);
      task.destination_was_visible = sats_[static_cast<std::size_t>(task.destination)].visible;
    }
    (void)n;
  }

 public:
  // Optional broadcast trace hook: (time, sat, representation).
  std::function<void(double, int, const GraphRep&)> trace_sink_;

  // Measurement window start; births before it are excluded from the
  // measured counters (global conservation counters always run).
  void set_measure_from(double t) { measure_from_s_ = t; }
  long measured_generated() const { return measured_generated_; }
  long measured_delivered() const { return measured_delivered_; }
  long measured_dropped() const { return measured_dropped_; }

 private:
  SimConfig cfg_;
  Policy* policy_;
  NetView netview_;
  FailureProcess failures_;
  Rng failure_rng_;
  double d_max_km_;

  std::vector<detail::SatRuntime> sats_;
  std::vector<Task> tasks_;
  std::vector<std::vector<TaskLogEntry>> logs_;
  std::priority_queue<detail::Event, std::vector<detail::Event>, detail::EventAfter> events_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  double horizon_s_ = 0.0;

  std::vector<bool> prev_visible_;
  int n_land_ = 0, n_ocean_ = 0;

  long generated_ = 0, delivered_ = 0, dropped_ = 0;
  double measure_from_s_ = 0.0;
  long measured_generated_ = 0, measured_delivered_ = 0, measured_dropped_ = 0;
  std::vector<double> compute_busy_;
  mutable Instrumentation instr_;

 public:
  // Offline re-derivation of the four delay components from the event log;
  // must agree exactly with the online accounting.
  static DelayRecord account_delay(const Task& task, std::span<const TaskLogEntry> log) {
    if (task.outcome != TaskOutcome::delivered)
      throw std::invalid_argument("account_delay: task did not terminate successfully");
    DelayRecord rec;
    double cursor = task.birth_s;
    double service_start = 0.0;
    bool saw_ground = false;
    auto take = [&](double until, Bucket b) {
      const double span = until - cursor;
      if (span < -1e-9) throw std::invalid_argument("account_delay: log out of order");
      switch (b) {
        case Bucket::P: rec.t_p += span; break;
        case Bucket::T: rec.t_t += span; break;
        case Bucket::Q: rec.t_q += span; break;
        case Bucket::C: rec.t_c += span; break;
      }
      cursor = until;
    };
    for (const TaskLogEntry& e : log) {
      switch (e.kind) {
        case LogKind::TxStart:
        case LogKind::CompStart:
        case LogKind::DlStart: service_start = e.t; break;
        case LogKind::TxEnd:
        case LogKind::DlEnd:
          take(service_start, Bucket::Q);
          take(e.t, Bucket::T);
          break;
        case LogKind::CompEnd:
          take(service_start, Bucket::Q);
          take(e.t, Bucket::C);
          break;
        case LogKind::Arrive: take(e.t, Bucket::P); break;
        case LogKind::Ground:
          take(e.t, Bucket::P);
          saw_ground = true;
          break;
        default: break;
      }
    }
    if (!saw_ground) throw std::invalid_argument("account_delay: incomplete event log");
    return rec;
  }
};

}  // namespace isatcr
