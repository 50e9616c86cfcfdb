#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace isatcr {

// Resource feature of one satellite: {p, m_r, q_c, q_t}.
//   p   - 1 while the satellite is generating observation data
//   m_r - remaining storage fraction
//   q_c - compute queue drain time, seconds (clipped upstream)
//   q_t - total transmission queue bytes over storage capacity
struct NodeFeature {
  double p = 0.0;
  double m_r = 1.0;
  double q_c = 0.0;
  double q_t = 0.0;

  std::array<double, 4> as_array() const { return {p, m_r, q_c, q_t}; }
};

inline constexpr int kFeatureDim = 4;
inline constexpr int kGraphRepDim = 12;

// Three-area graph representation: own feature, 1-hop aggregate, 2-hop
// aggregate. This is the 12-number payload exchanged between neighbors.
struct GraphRep {
  std::array<double, kGraphRepDim> v{};
  double produced_at_s = 0.0;

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  std::span<double, 4> area1() { return std::span<double, 4>(v.data(), 4); }
  std::span<double, 4> area2() { return std::span<double, 4>(v.data() + 4, 4); }
  std::span<double, 4> area3() { return std::span<double, 4>(v.data() + 8, 4); }
  std::span<const double, 4> area1() const { return std::span<const double, 4>(v.data(), 4); }
  std::span<const double, 4> area2() const { return std::span<const double, 4>(v.data() + 4, 4); }
  std::span<const double, 4> area3() const { return std::span<const double, 4>(v.data() + 8, 4); }
};

// Representation of an idle satellite with idle neighbors,
// h0 = {0,1,0,0, 0,1,0,0, 0,1,0,0}; also the fill for neighbor slots that
// have not produced an embedding yet.
inline GraphRep initial_padding() {
  GraphRep r;
  r.v = {0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0};
  return r;
}

// Shifted feature aggregation. Each received representation contributes its
// areas 1 and 2 shifted outward one hop; the incoming area 3 is dropped,
// which bounds feature propagation at 3 hops. The K/(K-1) and I/(K(K-1))
// corrections decouple the 2-hop area from the echo of the current node:
//   area2 = (1/K) sum_j area1_j
//   area3 = (1/(K-1)) sum_j area2_j - (I/(K(K-1))) self
inline GraphRep aggregate(const NodeFeature& self, std::span<const GraphRep> inbox, int k = 4,
                          double produced_at_s = 0.0) {
  if (k < 2) throw std::invalid_argument("aggregate: K must be >= 2");
  const int i_count = static_cast<int>(inbox.size());
  if (i_count > k) throw std::invalid_argument("aggregate: more neighbor entries than K");

  const std::array<double, 4> own = self.as_array();
  GraphRep out;
  out.produced_at_s = produced_at_s;
  for (int c = 0; c < 4; ++c) out.v[static_cast<std::size_t>(c)] = own[static_cast<std::size_t>(c)];

  const double w1 = 1.0 / k;
  const double w2 = 1.0 / (k - 1);  // (1/K) * K/(K-1)
  for (const GraphRep& rep : inbox) {
    for (int c = 0; c < 4; ++c) {
      out.v[static_cast<std::size_t>(4 + c)] += w1 * rep.v[static_cast<std::size_t>(c)];
      out.v[static_cast<std::size_t>(8 + c)] += w2 * rep.v[static_cast<std::size_t>(4 + c)];
    }
  }
  const double corr = static_cast<double>(i_count) / (static_cast<double>(k) * (k - 1));
  for (int c = 0; c < 4; ++c) out.v[static_cast<std::size_t>(8 + c)] -= corr * own[static_cast<std::size_t>(c)];
  return out;
}

// Plain shift [h1, h2, h3] -> [0, h1, h2]: what a receiver keeps of a
// neighbor representation before weighting.
inline GraphRep shift(const GraphRep& rep) {
  GraphRep out;
  out.produced_at_s = rep.produced_at_s;
  for (int c = 0; c < 4; ++c) {
    out.v[static_cast<std::size_t>(4 + c)] = rep.v[static_cast<std::size_t>(c)];
    out.v[static_cast<std::size_t>(8 + c)] = rep.v[static_cast<std::size_t>(4 + c)];
  }
  return out;
}

// Fill for a faulted neighbor direction: p marked 1 and remaining storage 0
// in every area (unreachable), queue occupations set to twice the average of
// the other neighbors' representations so the dead direction repels traffic.
// With no live neighbor to average over this degenerates to {1,0,0,0,...}.
inline GraphRep fault_padding(std::span<const GraphRep> other_live, double produced_at_s = 0.0) {
  GraphRep out;
  out.produced_at_s = produced_at_s;
  std::array<double, kGraphRepDim> mean{};
  if (!other_live.empty()) {
    for (const GraphRep& rep : other_live)
      for (int c = 0; c < kGraphRepDim; ++c) mean[static_cast<std::size_t>(c)] += rep.v[static_cast<std::size_t>(c)];
    for (double& m : mean) m /= static_cast<double>(other_live.size());
  }
  for (int area = 0; area < 3; ++area) {
    const std::size_t base = static_cast<std::size_t>(4 * area);
    out.v[base + 0] = 1.0;
    out.v[base + 1] = 0.0;
    out.v[base + 2] = 2.0 * mean[base + 2];
    out.v[base + 3] = 2.0 * mean[base + 3];
  }
  return out;
}

// Area-1 analogue of fault_padding for policies that consume raw neighbor
// features instead of graph representations.
inline NodeFeature fault_feature(std::span<const NodeFeature> other_live) {
  double qc = 0.0, qt = 0.0;
  if (!other_live.empty()) {
    for (const NodeFeature& f : other_live) {
      qc += f.q_c;
      qt += f.q_t;
    }
    qc /= static_cast<double>(other_live.size());
    qt /= static_cast<double>(other_live.size());
  }
  return NodeFeature{1.0, 0.0, 2.0 * qc, 2.0 * qt};
}

// Latest representation received from each grid direction.
struct NeighborInbox {
  std::array<GraphRep, 4> rep{initial_padding(), initial_padding(), initial_padding(), initial_padding()};
  std::array<bool, 4> received{};
  std::array<double, 4> received_at_s{};

  void store(int dir, const GraphRep& r, double t) {
    rep[static_cast<std::size_t>(dir)] = r;
    received[static_cast<std::size_t>(dir)] = true;
    received_at_s[static_cast<std::size_t>(dir)] = t;
  }
};

// Inbox as seen by aggregation and state encoding: live directions keep the
// latest received representation (or the initial padding before the first
// message), faulted directions are substituted with fault padding built from
// the live entries.
inline std::array<GraphRep, 4> substituted_reps(const NeighborInbox& inbox,
                                                const std::array<bool, 4>& dir_live, double t) {
  std::array<GraphRep, 4> out;
  std::array<GraphRep, 4> live_buf;
  std::size_t n_live = 0;
  for (std::size_t d = 0; d < 4; ++d)
    if (dir_live[d]) live_buf[n_live++] = inbox.rep[d];
  const GraphRep fault = fault_padding(std::span<const GraphRep>(live_buf.data(), n_live), t);
  for (std::size_t d = 0; d < 4; ++d) out[d] = dir_live[d] ? inbox.rep[d] : fault;
  return out;
}

}  // namespace isatcr
