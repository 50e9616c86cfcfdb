#include <catch2/catch_amalgamated.hpp>

#include "isatcr/netview.hpp"
#include "isatcr/rng.hpp"
#include "oracles.hpp"

using namespace isatcr;

namespace {

std::vector<std::pair<int, int>> live_edges(const NetView& nv) {
  const auto& cfg = nv.config();
  std::vector<std::pair<int, int>> out;
  for (int e = 0; e < edge_count(cfg); ++e)
    if (nv.edge_live(e)) out.push_back(edge_endpoints(cfg, e));
  return out;
}

}  // namespace

TEST_CASE("hop field on the fault-free 12x24 torus equals torus Manhattan distance") {
  ConstellationConfig cfg = constellation_preset("paper-walker-12x24");
  NetView nv(cfg);
  const HopField& f = nv.hop_field(SatelliteId{6, 12}.flat(cfg));
  CHECK(f.at(SatelliteId{0, 0}.flat(cfg)) == 18);  // min(6,6)+min(12,12)
  CHECK(f.at(SatelliteId{6, 12}.flat(cfg)) == 0);
  // spot-check against the independent all-pairs oracle
  const auto d = oracle::all_pairs_hops(cfg.total_sats(), live_edges(nv));
  for (int flat : {0, 7, 100, 200, 287})
    CHECK(f.at(flat) == d[static_cast<std::size_t>(flat)][static_cast<std::size_t>(SatelliteId{6, 12}.flat(cfg))]);
}

TEST_CASE("diameter matches exhaustive all-pairs BFS for several grids") {
  struct Case {
    int p, s, expected;
  };
  for (const Case c : {Case{12, 24, 18}, Case{6, 11, 8}, Case{2, 3, 2}}) {
    ConstellationConfig cfg;
    cfg.plane_count = c.p;
    cfg.sats_per_plane = c.s;
    CHECK(NetView::torus_diameter(cfg) == c.expected);
    NetView nv(cfg);
    const auto d = oracle::all_pairs_hops(cfg.total_sats(), live_edges(nv));
    int worst = 0;
    for (const auto& row : d)
      for (int v : row) worst = std::max(worst, v);
    CHECK(worst == c.expected);
  }
}

TEST_CASE("failure events update adjacency symmetrically and bump the version") {
  ConstellationConfig cfg;
  cfg.plane_count = 6;
  cfg.sats_per_plane = 8;
  NetView nv(cfg);
  const auto v0 = nv.snapshot().version;

  nv.apply_failure_events({}, 0.25);
  CHECK(nv.snapshot().version == v0);  // empty list: same version

  const int e = edge_for_direction(cfg, {2, 3}, 0);
  nv.apply_failure_events({{e, false}}, 0.25);
  CHECK(nv.snapshot().version == v0 + 1);
  CHECK_FALSE(nv.direction_live({2, 3}, 0));
  CHECK_FALSE(nv.direction_live({2, 4}, 1));  // same undirected edge from the other side

  nv.apply_failure_events({{e, true}}, 0.5);
  CHECK(nv.direction_live({2, 3}, 0));
  CHECK(nv.snapshot().version == v0 + 2);

  CHECK_THROWS_AS(nv.apply_failure_events({{edge_count(cfg), false}}, 0.75), std::invalid_argument);
}

TEST_CASE("failing all four edges of a satellite makes it unreachable everywhere") {
  ConstellationConfig cfg;
  cfg.plane_count = 6;
  cfg.sats_per_plane = 8;
  NetView nv(cfg);
  const SatelliteId victim{3, 4};
  std::vector<LinkEvent> evs;
  for (int dir = 0; dir < 4; ++dir) evs.push_back({edge_for_direction(cfg, victim, dir), false});
  nv.apply_failure_events(evs, 0.25);
  for (int dest : {0, 11, 40}) {
    const HopField& f = nv.hop_field(dest);
    CHECK(f.at(victim.flat(cfg)) == HopField::kUnreachable);
  }
  const auto d = oracle::all_pairs_hops(cfg.total_sats(), live_edges(nv));
  CHECK(d[static_cast<std::size_t>(victim.flat(cfg))][0] == -1);
}

TEST_CASE("hop fields agree exactly with the oracle on 100 random failure patterns") {
  ConstellationConfig cfg;
  cfg.plane_count = 6;
  cfg.sats_per_plane = 8;
  Rng rng(20240809);
  for (int trial = 0; trial < 100; ++trial) {
    NetView nv(cfg);
    std::vector<LinkEvent> evs;
    for (int e = 0; e < edge_count(cfg); ++e)
      if (rng.bernoulli(0.15)) evs.push_back({e, false});
    nv.apply_failure_events(evs, 0.25);
    const auto d = oracle::all_pairs_hops(cfg.total_sats(), live_edges(nv));
    const int dest = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.total_sats())));
    const HopField& f = nv.hop_field(dest);
    for (int u = 0; u < cfg.total_sats(); ++u) {
      const int expect = d[static_cast<std::size_t>(u)][static_cast<std::size_t>(dest)];
      CHECK(f.at(u) == expect);
    }
  }
}

TEST_CASE("hop fields satisfy the live-edge Lipschitz property") {
  ConstellationConfig cfg;
  cfg.plane_count = 6;
  cfg.sats_per_plane = 8;
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    NetView nv(cfg);
    std::vector<LinkEvent> evs;
    for (int e = 0; e < edge_count(cfg); ++e)
      if (rng.bernoulli(0.2)) evs.push_back({e, false});
    nv.apply_failure_events(evs, 0.25);
    const HopField& f = nv.hop_field(0);
    for (int u = 0; u < cfg.total_sats(); ++u) {
      const SatelliteId uid = SatelliteId::from_flat(cfg, u);
      const auto nbrs = grid_neighbors(cfg, uid);
      for (int dir = 0; dir < 4; ++dir) {
        if (!nv.direction_live(uid, dir)) continue;
        const int v = nbrs[static_cast<std::size_t>(dir)].flat(cfg);
        const int hu = f.at(u), hv = f.at(v);
        if (hu == HopField::kUnreachable || hv == HopField::kUnreachable) {
          CHECK(hu == hv);  // live edge joins same component
        } else {
          CHECK(std::abs(hu - hv) <= 1);
        }
      }
    }
  }
}

TEST_CASE("hop fields are recomputed after topology changes, never served stale") {
  ConstellationConfig cfg;
  cfg.plane_count = 4;
  cfg.sats_per_plane = 4;
  NetView nv(cfg);
  const HopField& before = nv.hop_field(0);
  const auto v_before = before.version;
  CHECK(before.at(SatelliteId{0, 1}.flat(cfg)) == 1);

  nv.apply_failure_events({{edge_for_direction(cfg, {0, 0}, 0), false}}, 0.25);
  const HopField& after = nv.hop_field(0);
  CHECK(after.version == nv.snapshot().version);
  CHECK(after.version > v_before);
  CHECK(after.at(SatelliteId{0, 1}.flat(cfg)) == 3);  // the direct edge is gone
}
