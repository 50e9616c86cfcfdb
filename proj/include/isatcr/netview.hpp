#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "isatcr/constellation.hpp"

namespace isatcr {

// Undirected ISL identification. Every satellite owns two edges: its
// slot+1 intra-plane link (kind 0) and its plane+1 inter-plane link (kind 1),
// so a P x S torus always has exactly 2*P*S undirected edges. For P == 2 the
// two inter-plane directions of a satellite are parallel edges to the same
// neighbor; everything downstream is direction-indexed so this stays sound.
inline int edge_count(const ConstellationConfig& cfg) { return 2 * cfg.total_sats(); }

inline int edge_for_direction(const ConstellationConfig& cfg, SatelliteId sat, int dir) {
  switch (dir) {
    case 0: return 2 * sat.flat(cfg);
    case 1: return 2 * SatelliteId{sat.plane, (sat.slot + cfg.sats_per_plane - 1) % cfg.sats_per_plane}.flat(cfg);
    case 2: return 2 * sat.flat(cfg) + 1;
    case 3:
      return 2 * SatelliteId{(sat.plane + cfg.plane_count - 1) % cfg.plane_count, sat.slot}.flat(cfg) + 1;
    default: throw std::invalid_argument("edge_for_direction: dir must be in [0,4)");
  }
}

inline std::pair<int, int> edge_endpoints(const ConstellationConfig& cfg, int edge) {
  const int flat = edge / 2;
  const SatelliteId a = SatelliteId::from_flat(cfg, flat);
  const SatelliteId b = (edge % 2 == 0) ? SatelliteId{a.plane, (a.slot + 1) % cfg.sats_per_plane}
                                        : SatelliteId{(a.plane + 1) % cfg.plane_count, a.slot};
  return {flat, b.flat(cfg)};
}

struct LinkEvent {
  int edge = 0;
  bool up = false;  // false: failed, true: restored
};

// Immutable-once-published view of which ISLs are alive. Liveness is stored
// per undirected edge, so a failed ISL is failed in both directions.
struct TopologySnapshot {
  std::vector<std::uint8_t> live;
  std::uint64_t version = 0;
  double timestamp_s = 0.0;
};

// Per-destination BFS hop distances over the live topology.
struct HopField {
  static constexpr int kUnreachable = -1;
  int destination = 0;           // flat id
  std::uint64_t version = 0;     // snapshot version this field was computed from
  std::vector<int> hops;

  int at(int flat) const { return hops[static_cast<std::size_t>(flat)]; }
};

// The run-wide shared topology knowledge: link states flooded globally at
// detection boundaries, plus lazily cached per-destination hop fields.
class NetView {
 public:
  explicit NetView(const ConstellationConfig& cfg) : cfg_(cfg) {
    snapshot_.live.assign(static_cast<std::size_t>(edge_count(cfg)), 1);
    snapshot_.version = 1;
  }

  const ConstellationConfig& config() const { return cfg_; }
  const TopologySnapshot& snapshot() const { return snapshot_; }

  bool edge_live(int edge) const { return snapshot_.live[static_cast<std::size_t>(edge)] != 0; }
  bool direction_live(SatelliteId sat, int dir) const {
    return edge_live(edge_for_direction(cfg_, sat, dir));
  }

  void apply_failure_events(const std::vector<LinkEvent>& events, double t) {
    bool changed = false;
    for (const LinkEvent& ev : events) {
      if (ev.edge < 0 || ev.edge >= edge_count(cfg_))
        throw std::invalid_argument("apply_failure_events: event on nonexistent edge");
      std::uint8_t next = ev.up ? 1 : 0;
      if (snapshot_.live[static_cast<std::size_t>(ev.edge)] != next) {
        snapshot_.live[static_cast<std::size_t>(ev.edge)] = next;
        changed = true;
      }
    }
    if (changed) {
      snapshot_.version++;
      snapshot_.timestamp_s = t;
      cache_.clear();
    }
  }

  // BFS from the destination over live edges; cached until topology changes.
  const HopField& hop_field(int destination_flat) const {
    if (destination_flat < 0 || destination_flat >= cfg_.total_sats())
      throw std::invalid_argument("hop_field: destination does not exist");
    auto it = cache_.find(destination_flat);
    if (it != cache_.end() && it->second.version == snapshot_.version) return it->second;

    HopField field;
    field.destination = destination_flat;
    field.version = snapshot_.version;
    field.hops.assign(static_cast<std::size_t>(cfg_.total_sats()), HopField::kUnreachable);
    std::deque<int> frontier;
    field.hops[static_cast<std::size_t>(destination_flat)] = 0;
    frontier.push_back(destination_flat);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop_front();
      const SatelliteId uid = SatelliteId::from_flat(cfg_, u);
      const auto nbrs = grid_neighbors(cfg_, uid);
      for (int dir = 0; dir < kGridDegree; ++dir) {
        if (!direction_live(uid, dir)) continue;
        const int v = nbrs[static_cast<std::size_t>(dir)].flat(cfg_);
        if (field.hops[static_cast<std::size_t>(v)] == HopField::kUnreachable) {
          field.hops[static_cast<std::size_t>(v)] = field.hops[static_cast<std::size_t>(u)] + 1;
          frontier.push_back(v);
        }
      }
    }
    return cache_[destination_flat] = std::move(field);
  }

  // Fault-free torus diameter; used as the static hop normalizer.
  static int torus_diameter(const ConstellationConfig& cfg) {
    return cfg.plane_count / 2 + cfg.sats_per_plane / 2;
  }

 private:
  ConstellationConfig cfg_;
  TopologySnapshot snapshot_;
  mutable std::unordered_map<int, HopField> cache_;
};

}  // namespace isatcr
