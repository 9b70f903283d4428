#include "trajsim/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace trajsim {

namespace {

constexpr double kMetersPerDegree = 111320.0;
constexpr double kDay = 86400.0;

}  // namespace

void SyntheticConfig::validate() const {
  if (grid < 2) throw std::invalid_argument("grid must be >= 2");
  if (trajectories == 0) throw std::invalid_argument("trajectories must be > 0");
  if (!(cell_m > 0.0) || !(speed_mps > 0.0)) throw std::invalid_argument("cell_m and speed_mps must be > 0");
  if (!(length_jitter >= 0.0 && length_jitter < 1.0)) throw std::invalid_argument("length_jitter must lie in [0, 1)");
  if (departure_hours.empty()) throw std::invalid_argument("need at least one departure cluster");
  if (departure_sigma_s < 0.0 || gps_noise_m < 0.0) throw std::invalid_argument("negative spread");
  if (min_steps < 2 || max_steps < min_steps) throw std::invalid_argument("need 2 <= min_steps <= max_steps");
  if (min_steps > 2 * grid - 1) throw std::invalid_argument("min_steps longer than any grid path");
}

RoadNetwork make_grid_network(const SyntheticConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t g = cfg.grid;
  const double dlat = cfg.cell_m / kMetersPerDegree;
  const double dlon = cfg.cell_m / (kMetersPerDegree * std::cos(cfg.origin_lat * std::numbers::pi / 180.0));
  std::vector<Vertex> vertices;
  vertices.reserve(g * g);
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      vertices.push_back({static_cast<VertexId>(r * g + c), cfg.origin_lon + dlon * static_cast<double>(c),
                          cfg.origin_lat + dlat * static_cast<double>(r)});
    }
  }
  std::vector<Edge> edges;
  edges.reserve(4 * g * (g - 1));
  auto link = [&](std::size_t u, std::size_t v) {
    const double len = cfg.cell_m * rng.uniform(1.0 - cfg.length_jitter, 1.0 + cfg.length_jitter);
    edges.push_back({static_cast<VertexId>(u), static_cast<VertexId>(v), len});
    edges.push_back({static_cast<VertexId>(v), static_cast<VertexId>(u), len});
  };
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      const std::size_t u = r * g + c;
      if (c + 1 < g) link(u, u + 1);
      if (r + 1 < g) link(u, u + g);
    }
  }
  return RoadNetwork(std::move(vertices), std::move(edges));
}

std::vector<VertexId> shortest_path(const RoadNetwork& net, VertexId src, VertexId dst) {
  if (!net.contains(src) || !net.contains(dst)) throw std::out_of_range("shortest_path: unknown vertex");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(net.num_vertices(), inf);
  std::vector<VertexId> parent(net.num_vertices(), -1);
  using Item = std::pair<double, VertexId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[src] = 0.0;
  heap.push({0.0, src});
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    if (u == dst) break;
    for (const Arc& a : net.out_arcs(u)) {
      const double nd = d + a.length_m;
      if (nd < dist[a.dst] || (nd == dist[a.dst] && u < parent[a.dst])) {
        if (nd < dist[a.dst]) heap.push({nd, a.dst});
        dist[a.dst] = nd;
        parent[a.dst] = u;
      }
    }
  }
  if (dist[dst] == inf) return {};
  std::vector<VertexId> path{dst};
  while (path.back() != src) path.push_back(parent[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

MatchedTrajectory timed_walk(const RoadNetwork& net, TrajId id, std::span<const VertexId> path,
                             double departure, double speed_mps) {
  std::vector<Step> steps;
  steps.reserve(path.size());
  double t = departure;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) {
      const auto len = net.arc_length(path[i - 1], path[i]);
      if (!len) throw std::invalid_argument("timed_walk: consecutive vertices are not adjacent");
      t += *len / speed_mps;
    }
    steps.push_back({path[i], t});
  }
  return MatchedTrajectory(id, std::move(steps));
}

std::vector<MatchedTrajectory> make_trajectories(const RoadNetwork& net,
                                                 const SyntheticConfig& cfg, Rng& rng,
                                                 TrajId first_id) {
  cfg.validate();
  const std::size_t n = net.num_vertices();
  std::vector<MatchedTrajectory> out;
  out.reserve(cfg.trajectories);
  std::size_t attempts = 0;
  while (out.size() < cfg.trajectories) {
    if (++attempts > 1000 * cfg.trajectories) {
      throw std::runtime_error("could not draw walks within the step bounds");
    }
    const auto src = static_cast<VertexId>(rng.below(n));
    const auto dst = static_cast<VertexId>(rng.below(n));
    if (src == dst) continue;
    const auto path = shortest_path(net, src, dst);
    if (path.size() < cfg.min_steps || path.size() > cfg.max_steps) continue;
    const double centre = cfg.departure_hours[rng.below(cfg.departure_hours.size())] * 3600.0;
    const double departure = std::clamp(centre + cfg.departure_sigma_s * rng.normal(), 0.0, kDay);
    out.push_back(timed_walk(net, first_id + static_cast<TrajId>(out.size()), path, departure,
                             cfg.speed_mps));
  }
  return out;
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  Rng rng(cfg.seed);
  RoadNetwork net = make_grid_network(cfg, rng);
  auto trajs = make_trajectories(net, cfg, rng);
  return {std::move(net), std::move(trajs)};
}

std::vector<RawTrajectory> to_raw(const RoadNetwork& net, std::span<const MatchedTrajectory> trajs,
                                  double noise_m, Rng& rng) {
  std::vector<RawTrajectory> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) {
    RawTrajectory raw{t.id(), {}};
    for (const Step& s : t.steps()) {
      const Vertex& v = net.vertex(s.vertex);
      const double dlat = noise_m * rng.normal() / kMetersPerDegree;
      const double dlon = noise_m * rng.normal() /
                          (kMetersPerDegree * std::cos(v.lat * std::numbers::pi / 180.0));
      raw.points.push_back({v.lon + dlon, v.lat + dlat, s.t});
    }
    out.push_back(std::move(raw));
  }
  return out;
}

}  // namespace trajsim
