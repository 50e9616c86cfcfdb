#include <catch2/catch_amalgamated.hpp>
#include <vector>

#include "isatcr/embedding.hpp"
#include "isatcr/rng.hpp"
#include "oracles.hpp"

using namespace isatcr;

namespace {

NodeFeature feat(double p, double m, double qc, double qt) { return NodeFeature{p, m, qc, qt}; }

// Two rounds of synchronous exchange-then-aggregate over an explicit graph,
// starting from the bare-feature representation each node can emit before
// hearing from anyone.
std::vector<GraphRep> two_synchronous_rounds(const std::vector<std::vector<int>>& adj,
                                             const std::vector<NodeFeature>& features, int k) {
  const std::size_t n = adj.size();
  std::vector<GraphRep> reps(n);
  for (std::size_t i = 0; i < n; ++i)
    reps[i] = aggregate(features[i], std::span<const GraphRep>{}, k);
  for (int round = 0; round < 2; ++round) {
    std::vector<GraphRep> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<GraphRep> inbox;
      for (int j : adj[i]) inbox.push_back(reps[static_cast<std::size_t>(j)]);
      next[i] = aggregate(features[i], inbox, k);
    }
    reps = std::move(next);
  }
  return reps;
}

std::vector<std::vector<int>> random_graph(Rng& rng, int n, int max_degree) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      if (adj[static_cast<std::size_t>(a)].size() >= static_cast<std::size_t>(max_degree)) break;
      if (adj[static_cast<std::size_t>(b)].size() >= static_cast<std::size_t>(max_degree)) continue;
      if (rng.bernoulli(3.0 / n)) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
      }
    }
  return adj;
}

}  // namespace

TEST_CASE("the all-idle network is a fixed point of aggregation") {
  const GraphRep h0 = initial_padding();
  std::vector<GraphRep> inbox(4, h0);
  const GraphRep out = aggregate(feat(0, 1, 0, 0), inbox, 4);
  for (int c = 0; c < kGraphRepDim; ++c) CHECK(out[static_cast<std::size_t>(c)] == Catch::Approx(h0[static_cast<std::size_t>(c)]).margin(1e-15));
}

TEST_CASE("path A-B-C aggregates match the hand-computed two-hop values") {
  const std::vector<std::vector<int>> adj{{1}, {0, 2}, {1}};
  const std::vector<NodeFeature> f{feat(1, 0.5, 0.2, 0.1), feat(0, 0.8, 0, 0), feat(0, 1, 0, 0)};
  const auto reps = two_synchronous_rounds(adj, f, 4);

  // B sees (A + C)/4 in area 2 and nothing in area 3
  const std::array<double, 4> b2{0.25, 0.375, 0.05, 0.025};
  for (int c = 0; c < 4; ++c) {
    CHECK(reps[1].area2()[static_cast<std::size_t>(c)] == Catch::Approx(b2[static_cast<std::size_t>(c)]).margin(1e-12));
    CHECK(reps[1].area3()[static_cast<std::size_t>(c)] == Catch::Approx(0.0).margin(1e-12));
  }
  // A sees C scaled by 1/(K(K-1)) = 1/12 in area 3
  const std::array<double, 4> a3{0.0, 1.0 / 12.0, 0.0, 0.0};
  for (int c = 0; c < 4; ++c)
    CHECK(reps[0].area3()[static_cast<std::size_t>(c)] == Catch::Approx(a3[static_cast<std::size_t>(c)]).margin(1e-12));
}

TEST_CASE("two synchronous rounds reproduce the closed forms on random graphs") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(48));
    auto adj = random_graph(rng, n, 4);
    std::vector<NodeFeature> f;
    std::vector<std::array<double, 4>> raw;
    for (int i = 0; i < n; ++i) {
      NodeFeature nf{rng.bernoulli(0.5) ? 1.0 : 0.0, rng.uniform(), rng.uniform(0, 10), rng.uniform()};
      f.push_back(nf);
      raw.push_back(nf.as_array());
    }
    const auto reps = two_synchronous_rounds(adj, f, 4);
    const auto expect = oracle::two_hop_closed_form(adj, raw, 4);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 4; ++c) {
        CHECK(reps[static_cast<std::size_t>(i)].area2()[static_cast<std::size_t>(c)] ==
              Catch::Approx(expect.area2[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]).margin(1e-12));
        CHECK(reps[static_cast<std::size_t>(i)].area3()[static_cast<std::size_t>(c)] ==
              Catch::Approx(expect.area3[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]).margin(1e-12));
      }
      // area 1 is always the node's own current feature
      for (int c = 0; c < 4; ++c)
        CHECK(reps[static_cast<std::size_t>(i)].area1()[static_cast<std::size_t>(c)] == raw[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
    }
  }
}

TEST_CASE("aggregation is linear in the queue components") {
  Rng rng(11);
  std::vector<GraphRep> inbox;
  for (int j = 0; j < 3; ++j) {
    GraphRep r;
    for (int c = 0; c < kGraphRepDim; ++c) r[static_cast<std::size_t>(c)] = rng.uniform();
    inbox.push_back(r);
  }
  const NodeFeature self = feat(1, 0.3, 0.7, 0.4);

  auto scale_queues = [](GraphRep r, double a) {
    for (int area = 0; area < 3; ++area) {
      r[static_cast<std::size_t>(4 * area + 2)] *= a;
      r[static_cast<std::size_t>(4 * area + 3)] *= a;
    }
    return r;
  };
  std::vector<GraphRep> scaled;
  for (const auto& r : inbox) scaled.push_back(scale_queues(r, 2.5));
  NodeFeature self_scaled = self;
  self_scaled.q_c *= 2.5;
  self_scaled.q_t *= 2.5;

  const GraphRep base = aggregate(self, inbox, 4);
  const GraphRep big = aggregate(self_scaled, scaled, 4);
  for (int area = 0; area < 3; ++area)
    for (int c = 2; c < 4; ++c)
      CHECK(big[static_cast<std::size_t>(4 * area + c)] ==
            Catch::Approx(2.5 * base[static_cast<std::size_t>(4 * area + c)]).margin(1e-12));
}

TEST_CASE("aggregate validates its preconditions") {
  std::vector<GraphRep> five(5, initial_padding());
  CHECK_THROWS_AS(aggregate(feat(0, 1, 0, 0), five, 4), std::invalid_argument);
  std::vector<GraphRep> one(1, initial_padding());
  CHECK_THROWS_AS(aggregate(feat(0, 1, 0, 0), one, 1), std::invalid_argument);
}

TEST_CASE("shift moves areas outward and discards the third area") {
  const GraphRep h0 = initial_padding();
  const GraphRep s = shift(h0);
  const std::array<double, 12> expect{0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0};
  for (int c = 0; c < kGraphRepDim; ++c) CHECK(s[static_cast<std::size_t>(c)] == expect[static_cast<std::size_t>(c)]);

  GraphRep zero;
  const GraphRep sz = shift(zero);
  for (int c = 0; c < kGraphRepDim; ++c) CHECK(sz[static_cast<std::size_t>(c)] == 0.0);

  Rng rng(3);
  GraphRep r;
  for (int c = 0; c < kGraphRepDim; ++c) r[static_cast<std::size_t>(c)] = rng.uniform();
  const GraphRep sr = shift(r);
  for (int c = 0; c < 4; ++c) {
    CHECK(sr.area2()[static_cast<std::size_t>(c)] == r.area1()[static_cast<std::size_t>(c)]);
    CHECK(sr.area3()[static_cast<std::size_t>(c)] == r.area2()[static_cast<std::size_t>(c)]);
    CHECK(sr.area1()[static_cast<std::size_t>(c)] == 0.0);
  }
}

TEST_CASE("initial padding is the idle representation") {
  const GraphRep h0 = initial_padding();
  const std::array<double, 12> expect{0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0};
  for (int c = 0; c < kGraphRepDim; ++c) CHECK(h0[static_cast<std::size_t>(c)] == expect[static_cast<std::size_t>(c)]);
  NeighborInbox inbox;
  for (int d = 0; d < 4; ++d) {
    CHECK_FALSE(inbox.received[static_cast<std::size_t>(d)]);
    for (int c = 0; c < kGraphRepDim; ++c)
      CHECK(inbox.rep[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)] == expect[static_cast<std::size_t>(c)]);
  }
}

TEST_CASE("fault padding doubles the live-neighbor queue averages") {
  std::vector<GraphRep> live(3);
  for (int j = 0; j < 3; ++j) {
    live[static_cast<std::size_t>(j)] = initial_padding();
    live[static_cast<std::size_t>(j)][2] = 0.1 + 0.1 * j;  // area-1 q_c: mean 0.2
  }
  const GraphRep f = fault_padding(live);
  CHECK(f[0] == 1.0);
  CHECK(f[1] == 0.0);
  CHECK(f[2] == Catch::Approx(0.4).margin(1e-12));
  CHECK(f[4] == 1.0);
  CHECK(f[5] == 0.0);
  CHECK(f[8] == 1.0);
  CHECK(f[9] == 0.0);

  // all live neighbors idle: doubling zero stays zero
  std::vector<GraphRep> idle(3, initial_padding());
  const GraphRep fi = fault_padding(idle);
  const std::array<double, 12> expect{1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
  for (int c = 0; c < kGraphRepDim; ++c) CHECK(fi[static_cast<std::size_t>(c)] == expect[static_cast<std::size_t>(c)]);

  // no live neighbors at all: degenerate marker
  const GraphRep fd = fault_padding({});
  for (int c = 0; c < kGraphRepDim; ++c) CHECK(fd[static_cast<std::size_t>(c)] == expect[static_cast<std::size_t>(c)]);
}

TEST_CASE("fault feature mirrors the padding on raw features") {
  std::vector<NodeFeature> live{feat(0, 0.9, 0.3, 0.2), feat(1, 0.5, 0.1, 0.0)};
  const NodeFeature f = fault_feature(live);
  CHECK(f.p == 1.0);
  CHECK(f.m_r == 0.0);
  CHECK(f.q_c == Catch::Approx(0.4).margin(1e-12));
  CHECK(f.q_t == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("substituted inbox uses padding only for dead directions") {
  NeighborInbox inbox;
  GraphRep busy = initial_padding();
  busy[2] = 0.5;
  inbox.store(0, busy, 1.0);
  inbox.store(2, busy, 1.0);
  const std::array<bool, 4> live{true, true, false, true};
  const auto reps = substituted_reps(inbox, live, 2.0);
  CHECK(reps[0][2] == 0.5);
  CHECK(reps[1][1] == 1.0);  // never-received live direction keeps initial padding
  // dead direction 2: live q_c entries are {0.5, 0, 0}, mean 1/6, doubled
  CHECK(reps[2][0] == 1.0);
  CHECK(reps[2][1] == 0.0);
  CHECK(reps[2][2] == Catch::Approx(2.0 * (0.5 + 0.0 + 0.0) / 3.0).margin(1e-12));
}
