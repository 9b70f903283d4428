#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajsim {

using VertexId = std::int32_t;
using TrajId = std::int64_t;

/// Thrown for malformed or inconsistent road-network and trajectory input.
/// `line()` is the 1-based source line when the error came from a file, 0 otherwise.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Vertex {
  VertexId id;
  double lon;
  double lat;
};

struct Edge {
  VertexId src;
  VertexId dst;
  double length_m;
};

struct Arc {
  VertexId dst;
  double length_m;
};

/// Directed road graph with geolocated vertices. Immutable after construction.
class RoadNetwork {
 public:
  /// Validates ids (dense in [0, n)), endpoints, lengths and rejects self-loops.
  RoadNetwork(std::vector<Vertex> vertices, std::vector<Edge> edges);

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  const Vertex& vertex(VertexId v) const;
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const Arc> out_arcs(VertexId v) const;
  std::size_t out_degree(VertexId v) const { return out_arcs(v).size(); }

  /// Shortest direct arc u->v, if one exists.
  std::optional<double> arc_length(VertexId u, VertexId v) const;

  bool contains(VertexId v) const {
    return v >= 0 && static_cast<std::size_t>(v) < vertices_.size();
  }

  /// Sum of all edge lengths; an upper bound on any finite path length.
  double total_length() const { return total_length_; }

  /// Nearest vertex by great-circle distance. Ties go to the lower id.
  VertexId nearest_vertex(double lon, double lat) const;

 private:
  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<Arc> arcs_;
  double total_length_ = 0.0;
};

/// Great-circle distance in meters.
double haversine_m(double lon1, double lat1, double lon2, double lat2);

RoadNetwork load_network(std::istream& vertices_csv, std::istream& edges_csv);
RoadNetwork load_network(const std::filesystem::path& vertices_csv,
                         const std::filesystem::path& edges_csv);
void write_network(const RoadNetwork& net, std::ostream& vertices_csv,
                   std::ostream& edges_csv);

/// Single-source Dijkstra over out-arcs. Unreachable vertices hold +infinity.
std::vector<double> dijkstra(const RoadNetwork& net, VertexId source);

/// Memoized single-source shortest-path results.
///
/// Concurrent readers are allowed; inserting a new source takes an exclusive
/// lock. Two threads racing on the same source compute identical rows, so
/// whichever insert wins is indistinguishable.
class ShortestPathCache {
 public:
  explicit ShortestPathCache(const RoadNetwork& net);

  /// Exact network distance u->v, or nullopt when v is unreachable from u.
  std::optional<double> distance(VertexId u, VertexId v);

  /// Full distance row from `source` (+infinity marks unreachable).
  std::shared_ptr<const std::vector<double>> row(VertexId source);

  void clear();
  std::size_t cached_sources() const;
  const RoadNetwork& network() const { return *net_; }

 private:
  const RoadNetwork* net_;
  mutable std::shared_mutex mutex_;
  std::vector<std::shared_ptr<const std::vector<double>>> rows_;
};

struct RawPoint {
  double lon;
  double lat;
  double t;
};

struct RawTrajectory {
  TrajId traj_id = 0;
  std::vector<RawPoint> points;
};

struct Step {
  VertexId vertex;
  double t;
};

/// A time-ordered vertex sequence. Timestamps strictly increase and no two
/// consecutive steps share a vertex; the spatial and temporal views are the
/// two columns of `steps()` and always have the same length.
class MatchedTrajectory {
 public:
  MatchedTrajectory() = default;
  MatchedTrajectory(TrajId id, std::vector<Step> steps);

  TrajId id() const { return id_; }
  const std::vector<Step>& steps() const { return steps_; }
  std::size_t size() const { return steps_.size(); }

  std::vector<VertexId> spatial() const;
  std::vector<double> temporal() const;

 private:
  TrajId id_ = 0;
  std::vector<Step> steps_;
};

inline constexpr std::size_t kMinTrajectorySteps = 10;

/// Nearest-vertex snapping. Consecutive duplicates collapse to the earliest
/// timestamp. Throws when the input is empty, timestamps are not strictly
/// increasing, or fewer than two distinct vertices remain.
MatchedTrajectory snap_trajectory(const RoadNetwork& net, const RawTrajectory& raw);

/// Drops trajectories with fewer than `min_steps` steps.
std::vector<MatchedTrajectory> filter_short(std::vector<MatchedTrajectory> trajs,
                                            std::size_t min_steps = kMinTrajectorySteps);

/// Checks every vertex id against `net`.
void check_matched(const RoadNetwork& net, const MatchedTrajectory& traj);

std::vector<RawTrajectory> read_raw_trajectories(std::istream& in);
std::vector<MatchedTrajectory> read_matched_trajectories(std::istream& in);
void write_raw_trajectories(std::span<const RawTrajectory> trajs, std::ostream& out);
void write_matched_trajectories(std::span<const MatchedTrajectory> trajs, std::ostream& out);

/// Reads a JSON-lines file of either matched (`steps`) or raw (`points`)
/// trajectories; raw ones are snapped onto `net`.
std::vector<MatchedTrajectory> load_trajectories(const std::filesystem::path& path,
                                                 const RoadNetwork& net);

}  // namespace trajsim
