// Exhaustive reference for the centralized planner: enumerate every compute
// satellite and every simple path for both legs, with per-leg storage
// feasibility, and return the minimum plan-time delay. Weight arithmetic
// mirrors the model definitions and accumulates in path order so agreement
// with the planner is exact.
#pragma once

#include <limits>
#include <vector>

#include "isatcr/simcore.hpp"

namespace oracle {

inline double ics_edge_weight(const isatcr::Simulator& sim, int a, int dir, int b, double bytes) {
  const double rate = sim.config().isl_rate_bps;
  return sim.isl_distance_now(a, b) / isatcr::kLightSpeedKmPerS + bytes * 8.0 / rate +
         sim.tx_queue_bytes(a, dir) * 8.0 / rate;
}

namespace detail {

template <typename AllowFn>
void dfs_min_path(const isatcr::Simulator& sim, int u, int goal, double bytes, double cost,
                  std::vector<bool>& visited, AllowFn&& allowed, double& best) {
  using namespace isatcr;
  if (u == goal) {
    if (cost < best) best = cost;
    return;
  }
  if (cost >= best) return;  // weights are positive
  const auto& cfg = sim.config().constellation;
  const SatelliteId uid = SatelliteId::from_flat(cfg, u);
  const auto nbrs = grid_neighbors(cfg, uid);
  for (int dir = 0; dir < 4; ++dir) {
    if (!sim.netview().direction_live(uid, dir)) continue;
    const int v = nbrs[static_cast<std::size_t>(dir)].flat(cfg);
    if (visited[static_cast<std::size_t>(v)] || !allowed(v)) continue;
    visited[static_cast<std::size_t>(v)] = true;
    dfs_min_path(sim, v, goal, bytes, cost + ics_edge_weight(sim, u, dir, v, bytes), visited,
                 allowed, best);
    visited[static_cast<std::size_t>(v)] = false;
  }
}

}  // namespace detail

// Minimum plan-time delay over all (compute satellite, simple path pairs),
// or infinity when no feasible tuple exists. Matches the planner's
// feasibility contract: the source is exempt from the raw-size residency
// check, the compute satellite from the result-size check.
inline double ics_exhaustive_best(const isatcr::Simulator& sim, const isatcr::Task& task, int from) {
  using namespace isatcr;
  const auto& cfg = sim.config();
  const int n = cfg.constellation.total_sats();
  const double cap = cfg.storage_bytes;
  const double s_raw = task.size_bytes;
  const double s_out = task.out_bytes;
  const int dest = task.destination;

  auto allowed1 = [&](int v) { return v == from || sim.sat_used_bytes(v) + s_raw <= cap; };
  auto allowed2 = [&](int v) { return sim.sat_used_bytes(v) + s_out <= cap; };

  double best_total = std::numeric_limits<double>::infinity();
  for (int vk = 0; vk < n; ++vk) {
    if (!allowed1(vk)) continue;
    double leg1 = std::numeric_limits<double>::infinity();
    {
      std::vector<bool> visited(static_cast<std::size_t>(n), false);
      visited[static_cast<std::size_t>(from)] = true;
      detail::dfs_min_path(sim, from, vk, s_raw, 0.0, visited, allowed1, leg1);
    }
    if (!std::isfinite(leg1)) continue;
    double leg2 = std::numeric_limits<double>::infinity();
    if (vk == dest) {
      leg2 = 0.0;
    } else {
      if (!allowed2(dest)) continue;
      std::vector<bool> visited(static_cast<std::size_t>(n), false);
      visited[static_cast<std::size_t>(vk)] = true;  // vk itself is exempt from the s' check
      detail::dfs_min_path(sim, vk, dest, s_out, 0.0, visited, allowed2, leg2);
    }
    if (!std::isfinite(leg2)) continue;
    const double cc = sim.compute_drain_s(vk) + task.demand_flop / cfg.compute_flops;
    const double total = leg1 + cc + leg2;
    if (total < best_total) best_total = total;
  }
  return best_total;
}

}  // namespace oracle
