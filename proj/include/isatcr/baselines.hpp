#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

#include "isatcr/agent.hpp"
#include "isatcr/simcore.hpp"

namespace isatcr {

inline constexpr int kLocalStateDim = 32;

// Reduced state for the no-embedding DRL baselines: each neighbor's
// 12-number representation is replaced with its latest raw 4-number feature.
// Self (4) + neighbors (16) + edge info (4) + destination direction (4) +
// task state (4) = 32.
inline Eigen::VectorXd encode_state_local(const DecisionContext& ctx) {
  Eigen::VectorXd v(kLocalStateDim);
  const auto self = ctx.self.as_array();
  for (int c = 0; c < 4; ++c) v(c) = self[static_cast<std::size_t>(c)];
  for (int d = 0; d < 4; ++d) {
    const auto f = ctx.nbr_raw[static_cast<std::size_t>(d)].as_array();
    for (int c = 0; c < 4; ++c) v(4 + 4 * d + c) = f[static_cast<std::size_t>(c)];
  }
  for (int d = 0; d < 4; ++d)
    v(20 + d) = ctx.dir_live[static_cast<std::size_t>(d)]
                    ? ctx.edge_queue_norm[static_cast<std::size_t>(d)]
                    : 1.0;
  for (int d = 0; d < 4; ++d) {
    const int h = ctx.nbr_hops[static_cast<std::size_t>(d)];
    v(24 + d) = (ctx.dir_live[static_cast<std::size_t>(d)] && h != HopField::kUnreachable)
                    ? static_cast<double>(h) / ctx.diameter
                    : 2.0;
  }
  const Task& t = *ctx.task;
  v(28) = t.current_size() / ctx.storage_cap;
  v(29) = t.demand_flop / kDemandNorm;
  v(30) = t.out_bytes / ctx.storage_cap;
  v(31) = t.computed ? 1.0 : 0.0;
  return v;
}

// Compute locally while the queue drain stays below a threshold, otherwise
// forward along the fewest live hops toward the destination.
class ShortestPathPolicy : public Policy {
 public:
  explicit ShortestPathPolicy(double compute_threshold_s = 2.0)
      : threshold_s_(compute_threshold_s) {}

  Action decide(const DecisionContext& ctx) override {
    if (!ctx.task->computed && ctx.self.q_c <= threshold_s_) return Action::compute();
    int best = -1, best_h = std::numeric_limits<int>::max();
    for (int d = 0; d < 4; ++d) {
      if (!ctx.dir_live[static_cast<std::size_t>(d)]) continue;
      const int h = ctx.nbr_hops[static_cast<std::size_t>(d)];
      if (h != HopField::kUnreachable && h < best_h) {
        best_h = h;
        best = d;
      }
    }
    if (best >= 0) return Action::direction(best);
    if (!ctx.task->computed) return Action::compute();
    return Action::wait();
  }

 private:
  double threshold_s_;
};

// Uniformly random valid action; the floor any learned policy must beat.
class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(Rng rng) : rng_(rng) {}

  Action decide(const DecisionContext& ctx) override {
    std::array<int, 5> valid{};
    int n = 0;
    for (int d = 0; d < 4; ++d)
      if (ctx.dir_live[static_cast<std::size_t>(d)]) valid[static_cast<std::size_t>(n++)] = d;
    if (!ctx.task->computed) valid[static_cast<std::size_t>(n++)] = Action::kComputeIndex;
    if (n == 0) return Action::wait();
    return Action{valid[static_cast<std::size_t>(rng_.uniform_int(static_cast<std::uint64_t>(n)))]};
  }

 private:
  Rng rng_;
};

// ---- idealized centralized solution -----------------------------------------

struct IcsPlanResult {
  std::vector<int> path1;  // from .. compute satellite
  std::vector<int> dirs1;  // direction taken at each path1 node
  int compute_sat = -1;    // -1: task already computed, only path2 used
  std::vector<int> path2;  // compute satellite .. destination
  std::vector<int> dirs2;
  double leg1_s = 0.0, compute_s = 0.0, leg2_s = 0.0;

  double total_s() const { return leg1_s + compute_s + leg2_s; }
};

namespace detail_ics {

struct DijkstraOut {
  std::vector<double> dist;
  std::vector<int> via_dir;   // direction taken at the predecessor (forward) or at this node (reverse)
  std::vector<int> previous;  // predecessor (forward) or successor (reverse)
};

// Plan-time edge weight for moving `bytes` from a toward direction d:
// propagation + own serialization + current queue drain of that direction.
inline double edge_weight(const Simulator& sim, int a, int dir, int b, double bytes) {
  const double rate = sim.config().isl_rate_bps;
  return sim.isl_distance_now(a, b) / kLightSpeedKmPerS + bytes * 8.0 / rate +
         sim.tx_queue_bytes(a, dir) * 8.0 / rate;
}

template <typename AllowFn>
DijkstraOut dijkstra(const Simulator& sim, int start, double bytes, AllowFn&& allowed, bool reverse) {
  const auto& cfg = sim.config().constellation;
  const int n = cfg.total_sats();
  DijkstraOut out;
  out.dist.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  out.via_dir.assign(static_cast<std::size_t>(n), -1);
  out.previous.assign(static_cast<std::size_t>(n), -1);
  if (!allowed(start)) return out;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  out.dist[static_cast<std::size_t>(start)] = 0.0;
  heap.push({0.0, start});
  while (!heap.empty()) {
    const auto [d_u, u] = heap.top();
    heap.pop();
    if (d_u > out.dist[static_cast<std::size_t>(u)]) continue;
    const SatelliteId uid = SatelliteId::from_flat(cfg, u);
    const auto nbrs = grid_neighbors(cfg, uid);
    for (int dir = 0; dir < 4; ++dir) {
      if (!sim.netview().direction_live(uid, dir)) continue;
      const int v = nbrs[static_cast<std::size_t>(dir)].flat(cfg);
      if (!allowed(v)) continue;
      // forward: traverse u -> v loading u's queue toward dir.
      // reverse: we search from the destination;  the physical hop is v -> u,
      // loading v's queue toward u, i.e. the opposite direction at v.
      const double w = reverse ? edge_weight(sim, v, opposite_direction(dir), u, bytes)
                               : edge_weight(sim, u, dir, v, bytes);
      const double cand = out.dist[static_cast<std::size_t>(u)] + w;
      if (cand < out.dist[static_cast<std::size_t>(v)]) {
        out.dist[static_cast<std::size_t>(v)] = cand;
        out.previous[static_cast<std::size_t>(v)] = u;
        out.via_dir[static_cast<std::size_t>(v)] = reverse ? opposite_direction(dir) : dir;
        heap.push({cand, v});
      }
    }
  }
  return out;
}

}  // namespace detail_ics

// Single-shot centralized plan from instantaneous global state: choose the
// compute satellite and both legs minimizing plan-time delay, honoring
// storage feasibility along each leg under the given reservations.
// Forward distances carry the raw size s, backward distances from the
// destination carry s'; total(v) = dist1(v) + queue-plus-compute(v) + dist2(v).
inline std::optional<IcsPlanResult> ics_plan(const Simulator& sim, const Task& task, int from,
                                             const std::vector<double>& reserved_bytes) {
  const auto& cfg = sim.config();
  const int n = cfg.constellation.total_sats();
  const int dest = task.destination;
  const double cap = cfg.storage_bytes;
  auto resv = [&](int v) {
    return reserved_bytes.empty() ? 0.0 : reserved_bytes[static_cast<std::size_t>(v)];
  };

  const double s_raw = task.size_bytes;
  const double s_out = task.out_bytes;

  if (task.computed) {
    auto allowed = [&](int v) {
      return v == from || sim.sat_used_bytes(v) + resv(v) + s_out <= cap;
    };
    const auto back = detail_ics::dijkstra(sim, dest, s_out, allowed, /*reverse=*/true);
    if (!std::isfinite(back.dist[static_cast<std::size_t>(from)])) return std::nullopt;
    IcsPlanResult plan;
    plan.compute_sat = -1;
    plan.leg2_s = back.dist[static_cast<std::size_t>(from)];
    for (int v = from; v != -1; v = back.previous[static_cast<std::size_t>(v)]) {
      plan.path2.push_back(v);
      if (back.previous[static_cast<std::size_t>(v)] != -1)
        plan.dirs2.push_back(back.via_dir[static_cast<std::size_t>(v)]);
    }
    return plan;
  }

  auto allowed1 = [&](int v) { return v == from || sim.sat_used_bytes(v) + resv(v) + s_raw <= cap; };
  auto allowed2 = [&](int v) { return sim.sat_used_bytes(v) + resv(v) + s_out <= cap; };
  const auto fwd = detail_ics::dijkstra(sim, from, s_raw, allowed1, /*reverse=*/false);
  const auto back = detail_ics::dijkstra(sim, dest, s_out, allowed2, /*reverse=*/true);

  // Return-leg cost from a candidate compute node. The compute node itself is
  // exempt from the s' residency constraint (it holds the task while
  // processing); a node failing the check can still start the leg by
  // stepping directly onto an allowed neighbor.
  auto leg2 = [&](int v, int* first_dir) -> double {
    *first_dir = -1;
    if (v == dest) return 0.0;
    if (allowed2(v)) return back.dist[static_cast<std::size_t>(v)];
    const SatelliteId vid = SatelliteId::from_flat(cfg.constellation, v);
    const auto nbrs = grid_neighbors(cfg.constellation, vid);
    double best = std::numeric_limits<double>::infinity();
    for (int dir = 0; dir < 4; ++dir) {
      if (!sim.netview().direction_live(vid, dir)) continue;
      const int nbr = nbrs[static_cast<std::size_t>(dir)].flat(cfg.constellation);
      if (!allowed2(nbr) || !std::isfinite(back.dist[static_cast<std::size_t>(nbr)])) continue;
      const double cand =
          detail_ics::edge_weight(sim, v, dir, nbr, s_out) + back.dist[static_cast<std::size_t>(nbr)];
      if (cand < best) {
        best = cand;
        *first_dir = dir;
      }
    }
    return best;
  };

  int best = -1, best_first_dir = -1;
  double best_total = std::numeric_limits<double>::infinity();
  double best_d2 = 0.0;
  std::vector<double> compute_cost(static_cast<std::size_t>(n), 0.0);
  for (int v = 0; v < n; ++v) {
    compute_cost[static_cast<std::size_t>(v)] =
        sim.compute_drain_s(v) + task.demand_flop / cfg.compute_flops;
    if (!std::isfinite(fwd.dist[static_cast<std::size_t>(v)])) continue;
    int first_dir = -1;
    const double d2 = leg2(v, &first_dir);
    if (!std::isfinite(d2)) continue;
    const double total = fwd.dist[static_cast<std::size_t>(v)] +
                         compute_cost[static_cast<std::size_t>(v)] + d2;
    if (total < best_total) {
      best_total = total;
      best = v;
      best_first_dir = first_dir;
      best_d2 = d2;
    }
  }
  if (best < 0) return std::nullopt;

  IcsPlanResult plan;
  plan.compute_sat = best;
  plan.leg1_s = fwd.dist[static_cast<std::size_t>(best)];
  plan.compute_s = compute_cost[static_cast<std::size_t>(best)];
  plan.leg2_s = best_d2;
  // forward parents give the path reversed
  std::vector<int> rev;
  for (int v = best; v != -1; v = fwd.previous[static_cast<std::size_t>(v)]) rev.push_back(v);
  plan.path1.assign(rev.rbegin(), rev.rend());
  for (std::size_t i = 1; i < plan.path1.size(); ++i)
    plan.dirs1.push_back(fwd.via_dir[static_cast<std::size_t>(plan.path1[i])]);
  int leg2_start = best;
  if (best_first_dir >= 0) {
    // exempt compute node: explicit first hop, then the reverse-search path
    plan.path2.push_back(best);
    plan.dirs2.push_back(best_first_dir);
    const SatelliteId vid = SatelliteId::from_flat(cfg.constellation, best);
    leg2_start = grid_neighbors(cfg.constellation, vid)[static_cast<std::size_t>(best_first_dir)]
                     .flat(cfg.constellation);
  }
  for (int v = leg2_start; v != -1; v = back.previous[static_cast<std::size_t>(v)]) {
    plan.path2.push_back(v);
    if (back.previous[static_cast<std::size_t>(v)] != -1)
      plan.dirs2.push_back(back.via_dir[static_cast<std::size_t>(v)]);
  }
  return plan;
}

// Centralized execution: plans once per task from instantaneous global
// state, reserves storage along both legs and compute at the chosen
// satellite, and releases reservations as the task progresses. A dead
// planned hop waits up to a retry window, then the task is lost; replanning
// happens only from scratch (at the source or after a re-injection).
class IcsPolicy : public Policy {
 public:
  explicit IcsPolicy(const Simulator& sim, double retry_window_s = 1.0)
      : sim_(&sim),
        retry_window_s_(retry_window_s),
        reserved_bytes_(static_cast<std::size_t>(sim.config().constellation.total_sats()), 0.0),
        reserved_flop_(static_cast<std::size_t>(sim.config().constellation.total_sats()), 0.0) {}

  const std::vector<double>& reserved_bytes() const { return reserved_bytes_; }
  long planned_tasks() const { return planned_; }
  long failed_plans() const { return plan_failures_; }

  Action decide(const DecisionContext& ctx) override {
    const Task& task = *ctx.task;
    auto it = execs_.find(task.id);
    if (it != execs_.end() && !position_matches(it->second, ctx.sat)) {
      release_all(task.id);
      execs_.erase(it);
      it = execs_.end();
    }
    if (it == execs_.end()) {
      auto plan = ics_plan(*sim_, task, ctx.sat, reserved_bytes_);
      ++planned_;
      if (!plan) {
        ++plan_failures_;
        return Action::wait();  // held; replanned at the next detection boundary
      }
      Exec ex;
      ex.plan = std::move(*plan);
      ex.sequence = ex.plan.path1;
      ex.dirs = ex.plan.dirs1;
      for (std::size_t i = 1; i < ex.plan.path2.size(); ++i) {
        ex.sequence.push_back(ex.plan.path2[i]);
        ex.dirs.push_back(ex.plan.dirs2[i - 1]);
      }
      if (ex.plan.compute_sat < 0 && !ex.sequence.empty()) {
        // already-computed replan: sequence is path2 directly
        ex.sequence = ex.plan.path2;
        ex.dirs = ex.plan.dirs2;
      }
      reserve(task.id, ex.plan);
      it = execs_.emplace(task.id, std::move(ex)).first;
    }

    Exec& ex = it->second;
    release_node(task.id, ctx.sat);

    if (ex.plan.compute_sat == ctx.sat && !task.computed) return Action::compute();
    if (ex.plan.compute_sat == ctx.sat && task.computed) release_flop(task.id, ctx.sat);

    if (ex.cursor + 1 >= ex.sequence.size()) {
      // plan exhausted away from the destination (stale plan); replan next time
      release_all(task.id);
      execs_.erase(it);
      return Action::wait();
    }
    const int dir = ex.dirs[ex.cursor];
    if (!ctx.dir_live[static_cast<std::size_t>(dir)]) {
      if (ex.blocked_since < 0.0) ex.blocked_since = ctx.now;
      if (ctx.now - ex.blocked_since > retry_window_s_) {
        release_all(task.id);
        execs_.erase(it);
        return Action::abort();  // centralized fragility under sudden failures
      }
      return Action::wait();
    }
    ex.blocked_since = -1.0;
    ++ex.cursor;
    return Action::direction(dir);
  }

  void on_terminal(const Task& task, bool, double) override {
    release_all(task.id);
    execs_.erase(task.id);
  }

 private:
  struct Exec {
    IcsPlanResult plan;
    std::vector<int> sequence;  // node visit order
    std::vector<int> dirs;      // direction per hop
    std::size_t cursor = 0;     // index into sequence of the current node
    double blocked_since = -1.0;
  };

  bool position_matches(const Exec& ex, int sat) const {
    return ex.cursor < ex.sequence.size() && ex.sequence[ex.cursor] == sat;
  }

  void reserve(int task_id, const IcsPlanResult& plan) {
    auto& held = held_bytes_[task_id];
    const Task& task = sim_->tasks()[static_cast<std::size_t>(task_id)];
    // raw size along leg 1 beyond the holder, result size along leg 2
    for (std::size_t i = 1; i < plan.path1.size(); ++i) add_bytes(held, plan.path1[i], task.size_bytes);
    for (std::size_t i = 1; i < plan.path2.size(); ++i) add_bytes(held, plan.path2[i], task.out_bytes);
    if (plan.compute_sat >= 0) {
      reserved_flop_[static_cast<std::size_t>(plan.compute_sat)] += task.demand_flop;
      held_flop_[task_id] = plan.compute_sat;
    }
  }

  void add_bytes(std::unordered_map<int, double>& held, int sat, double bytes) {
    held[sat] += bytes;
    reserved_bytes_[static_cast<std::size_t>(sat)] += bytes;
  }

  void release_node(int task_id, int sat) {
    auto hit = held_bytes_.find(task_id);
    if (hit == held_bytes_.end()) return;
    auto nit = hit->second.find(sat);
    if (nit == hit->second.end()) return;
    reserved_bytes_[static_cast<std::size_t>(sat)] -= nit->second;
    hit->second.erase(nit);
  }

  void release_flop(int task_id, int sat) {
    auto fit = held_flop_.find(task_id);
    if (fit == held_flop_.end() || fit->second != sat) return;
    reserved_flop_[static_cast<std::size_t>(sat)] -=
        sim_->tasks()[static_cast<std::size_t>(task_id)].demand_flop;
    held_flop_.erase(fit);
  }

  void release_all(int task_id) {
    auto hit = held_bytes_.find(task_id);
    if (hit != held_bytes_.end()) {
      for (auto& [sat, bytes] : hit->second)
        reserved_bytes_[static_cast<std::size_t>(sat)] -= bytes;
      held_bytes_.erase(hit);
    }
    auto fit = held_flop_.find(task_id);
    if (fit != held_flop_.end()) {
      reserved_flop_[static_cast<std::size_t>(fit->second)] -=
          sim_->tasks()[static_cast<std::size_t>(task_id)].demand_flop;
      held_flop_.erase(fit);
    }
  }

  const Simulator* sim_;
  double retry_window_s_;
  std::vector<double> reserved_bytes_;
  std::vector<double> reserved_flop_;
  std::unordered_map<int, Exec> execs_;
  std::unordered_map<int, std::unordered_map<int, double>> held_bytes_;
  std::unordered_map<int, int> held_flop_;
  long planned_ = 0;
  long plan_failures_ = 0;
};

}  // namespace isatcr
