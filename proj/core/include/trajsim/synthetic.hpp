#pragma once

#include <cstdint>
#include <vector>

#include "trajsim/road_network.hpp"
#include "trajsim/rng.hpp"

namespace trajsim {

struct SyntheticConfig {
  std::size_t grid = 20;            // grid x grid vertices
  std::size_t trajectories = 200;
  double cell_m = 300.0;            // nominal spacing between neighbours
  double length_jitter = 0.1;       // edge length scaled by U(1-j, 1+j), same both ways
  double origin_lon = 116.30;
  double origin_lat = 39.90;
  std::vector<double> departure_hours = {7.5, 12.0, 17.5, 21.0};
  double departure_sigma_s = 1800.0;
  double speed_mps = 10.0;
  std::size_t min_steps = kMinTrajectorySteps;
  std::size_t max_steps = 30;
  double gps_noise_m = 15.0;        // only used for raw output
  std::uint64_t seed = 1;

  void validate() const;
};

/// Bidirectional grid: vertex id = row * grid + col, 4-neighbour arcs.
RoadNetwork make_grid_network(const SyntheticConfig& cfg, Rng& rng);

/// Shortest-path walk from `src` to `dst`, ties broken toward the lower
/// predecessor id. Empty when unreachable.
std::vector<VertexId> shortest_path(const RoadNetwork& net, VertexId src, VertexId dst);

/// Timestamps a vertex path: start at `departure`, each hop takes
/// arc length / speed.
MatchedTrajectory timed_walk(const RoadNetwork& net, TrajId id, std::span<const VertexId> path,
                             double departure, double speed_mps);

std::vector<MatchedTrajectory> make_trajectories(const RoadNetwork& net,
                                                 const SyntheticConfig& cfg, Rng& rng,
                                                 TrajId first_id = 0);

struct SyntheticCorpus {
  RoadNetwork network;
  std::vector<MatchedTrajectory> trajectories;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg);

/// GPS-like points at each step's vertex with Gaussian position noise.
std::vector<RawTrajectory> to_raw(const RoadNetwork& net, std::span<const MatchedTrajectory> trajs,
                                  double noise_m, Rng& rng);

}  // namespace trajsim
