#pragma once

// Shared fixtures and brute-force oracles for the unit and acceptance tests.
// Everything here is written independently of the library's algorithms.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "trajsim/autodiff.hpp"
#include "trajsim/road_network.hpp"
#include "trajsim/rng.hpp"

namespace testing {

using namespace trajsim;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// rows x cols grid, both directions per neighbour pair with one shared
// random length, so shortest paths are symmetric.
inline RoadNetwork grid(std::size_t rows, std::size_t cols, Rng& rng, double lo = 50.0,
                        double hi = 150.0) {
  std::vector<Vertex> vs;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      vs.push_back({static_cast<VertexId>(r * cols + c), 116.0 + 0.001 * double(c), 39.0 + 0.001 * double(r)});
  std::vector<Edge> es;
  auto link = [&](std::size_t u, std::size_t v) {
    const double len = rng.uniform(lo, hi);
    es.push_back({VertexId(u), VertexId(v), len});
    es.push_back({VertexId(v), VertexId(u), len});
  };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (c + 1 < cols) link(r * cols + c, r * cols + c + 1);
      if (r + 1 < rows) link(r * cols + c, (r + 1) * cols + c);
    }
  return RoadNetwork(vs, es);
}

// Random directed graph; some vertices may be unreachable from others.
inline RoadNetwork random_directed(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<Vertex> vs;
  for (std::size_t i = 0; i < n; ++i) vs.push_back({VertexId(i), rng.uniform(116, 117), rng.uniform(39, 40)});
  std::vector<Edge> es;
  while (es.size() < m) {
    const auto u = VertexId(rng.below(n)), v = VertexId(rng.below(n));
    if (u != v) es.push_back({u, v, rng.uniform(1.0, 100.0)});
  }
  return RoadNetwork(vs, es);
}

// Random walk of `steps` vertices along out-arcs (restarting at a random
// vertex on a dead end), with strictly increasing times.
inline MatchedTrajectory random_walk(const RoadNetwork& net, TrajId id, std::size_t steps, Rng& rng,
                                     double t0 = 0.0) {
  std::vector<Step> s;
  VertexId v = VertexId(rng.below(net.num_vertices()));
  double t = t0 + rng.uniform(0.0, 600.0);
  s.push_back({v, t});
  while (s.size() < steps) {
    const auto arcs = net.out_arcs(v);
    VertexId next;
    if (arcs.empty()) {
      do next = VertexId(rng.below(net.num_vertices()));
      while (next == v);
    } else {
      next = arcs[rng.below(arcs.size())].dst;
    }
    t += rng.uniform(5.0, 120.0);
    v = next;
    s.push_back({v, t});
  }
  return MatchedTrajectory(id, s);
}

// Bellman-Ford single-source distances.
inline std::vector<double> bellman_ford(const RoadNetwork& net, VertexId src) {
  std::vector<double> d(net.num_vertices(), kInf);
  d[src] = 0.0;
  for (std::size_t it = 0; it + 1 < net.num_vertices(); ++it) {
    bool changed = false;
    for (const Edge& e : net.edges()) {
      if (d[e.src] + e.length_m < d[e.dst]) {
        d[e.dst] = d[e.src] + e.length_m;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return d;
}

// Minimum over every monotone warping path from (0,0) to (n-1,m-1).
inline double exhaustive_dtw(const std::function<double(std::size_t, std::size_t)>& cost, std::size_t n,
                             std::size_t m) {
  double best = kInf;
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
    acc += cost(i, j);
    if (i == n - 1 && j == m - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < n) walk(i + 1, j, acc);
    if (j + 1 < m) walk(i, j + 1, acc);
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

// Minimum over every edit script: match a_i with b_j, or pair a_i (b_j) with the gap.
inline double exhaustive_erp(const std::function<double(std::size_t, std::size_t)>& match,
                             const std::vector<double>& gap_a, const std::vector<double>& gap_b) {
  const std::size_t n = gap_a.size(), m = gap_b.size();
  double best = kInf;
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
    if (i == n && j == m) {
      best = std::min(best, acc);
      return;
    }
    if (i < n && j < m) walk(i + 1, j + 1, acc + match(i, j));
    if (i < n) walk(i + 1, j, acc + gap_a[i]);
    if (j < m) walk(i, j + 1, acc + gap_b[j]);
  };
  walk(0, 0, 0.0);
  return best;
}

inline ad::Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                                double hi = 1.0) {
  ad::Tensor t = cols == 0 ? ad::Tensor::vector(rows) : ad::Tensor::matrix(rows, cols);
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace testing
