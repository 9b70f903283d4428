#include "trajsim/road_network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "csv_util.hpp"

namespace trajsim {

InputError::InputError(const std::string& what, std::size_t line)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

// ---------------------------------------------------------------------------
// RoadNetwork

RoadNetwork::RoadNetwork(std::vector<Vertex> vertices, std::vector<Edge> edges)
    : vertices_(std::move(vertices)), edges_(std::move(edges)) {
  std::sort(vertices_.begin(), vertices_.end(),
            [](const Vertex& a, const Vertex& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    if (vertices_[i].id != static_cast<VertexId>(i)) {
      throw InputError("vertex ids must be dense in [0, " +
                       std::to_string(vertices_.size()) + "), found id " +
                       std::to_string(vertices_[i].id));
    }
    if (!std::isfinite(vertices_[i].lon) || !std::isfinite(vertices_[i].lat)) {
      throw InputError("vertex " + std::to_string(i) + " has non-finite coordinates");
    }
  }

  std::vector<std::size_t> degree(vertices_.size(), 0);
  for (const Edge& e : edges_) {
    if (!contains(e.src) || !contains(e.dst)) {
      throw InputError("dangling edge endpoint " + std::to_string(e.src) + "->" +
                       std::to_string(e.dst));
    }
    if (e.src == e.dst) {
      throw InputError("self-loop at vertex " + std::to_string(e.src));
    }
    if (!(e.length_m > 0.0) || !std::isfinite(e.length_m)) {
      throw InputError("non-positive or non-finite edge length on " +
                       std::to_string(e.src) + "->" + std::to_string(e.dst));
    }
    ++degree[e.src];
    total_length_ += e.length_m;
  }

  offsets_.assign(vertices_.size() + 1, 0);
  for (std::size_t v = 0; v < vertices_.size(); ++v) offsets_[v + 1] = offsets_[v] + degree[v];
  arcs_.resize(edges_.size());
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const Edge& e : edges_) arcs_[fill[e.src]++] = Arc{e.dst, e.length_m};
}

const Vertex& RoadNetwork::vertex(VertexId v) const {
  if (!contains(v)) throw std::out_of_range("invalid vertex id " + std::to_string(v));
  return vertices_[v];
}

std::span<const Arc> RoadNetwork::out_arcs(VertexId v) const {
  if (!contains(v)) throw std::out_of_range("invalid vertex id " + std::to_string(v));
  return {arcs_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
}

std::optional<double> RoadNetwork::arc_length(VertexId u, VertexId v) const {
  std::optional<double> best;
  for (const Arc& a : out_arcs(u)) {
    if (a.dst == v && (!best || a.length_m < *best)) best = a.length_m;
  }
  return best;
}

VertexId RoadNetwork::nearest_vertex(double lon, double lat) const {
  if (vertices_.empty()) throw InputError("nearest_vertex on an empty network");
  VertexId best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const Vertex& v : vertices_) {
    const double d = haversine_m(lon, lat, v.lon, v.lat);
    if (d < best_d) {
      best_d = d;
      best = v.id;
    }
  }
  return best;
}

double haversine_m(double lon1, double lat1, double lon2, double lat2) {
  constexpr double kEarthRadius = 6371008.8;
  constexpr double kRad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * kRad;
  const double dlon = (lon2 - lon1) * kRad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * kRad) * std::cos(lat2 * kRad) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadius * std::asin(std::min(1.0, std::sqrt(a)));
}

// ---------------------------------------------------------------------------
// CSV I/O

RoadNetwork load_network(std::istream& vertices_csv, std::istream& edges_csv) {
  std::vector<Vertex> vertices;
  csv::for_each_row(vertices_csv, {"id", "lon", "lat"},
                    [&](const std::vector<std::string_view>& f, std::size_t line) {
                      vertices.push_back({csv::parse_int<VertexId>(f[0], line),
                                          csv::parse_double(f[1], line),
                                          csv::parse_double(f[2], line)});
                    });
  std::vector<Edge> edges;
  std::vector<std::size_t> edge_lines;
  csv::for_each_row(edges_csv, {"src", "dst", "length_m"},
                    [&](const std::vector<std::string_view>& f, std::size_t line) {
                      edges.push_back({csv::parse_int<VertexId>(f[0], line),
                                       csv::parse_int<VertexId>(f[1], line),
                                       csv::parse_double(f[2], line)});
                      edge_lines.push_back(line);
                    });
  // Re-check edges here so errors carry the offending line number.
  const auto n = static_cast<VertexId>(vertices.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
      throw InputError("dangling edge endpoint " + std::to_string(e.src) + "->" +
                           std::to_string(e.dst),
                       edge_lines[i]);
    }
    if (e.src == e.dst) throw InputError("self-loop", edge_lines[i]);
    if (!(e.length_m > 0.0) || !std::isfinite(e.length_m)) {
      throw InputError("non-positive edge length", edge_lines[i]);
    }
  }
  return RoadNetwork(std::move(vertices), std::move(edges));
}

RoadNetwork load_network(const std::filesystem::path& vertices_csv,
                         const std::filesystem::path& edges_csv) {
  std::ifstream v(vertices_csv);
  if (!v) throw InputError("cannot open " + vertices_csv.string());
  std::ifstream e(edges_csv);
  if (!e) throw InputError("cannot open " + edges_csv.string());
  return load_network(v, e);
}

void write_network(const RoadNetwork& net, std::ostream& vertices_csv,
                   std::ostream& edges_csv) {
  vertices_csv << "id,lon,lat\n";
  for (const Vertex& v : net.vertices()) {
    vertices_csv << v.id << ',' << csv::format_double(v.lon) << ','
                 << csv::format_double(v.lat) << '\n';
  }
  edges_csv << "src,dst,length_m\n";
  for (const Edge& e : net.edges()) {
    edges_csv << e.src << ',' << e.dst << ',' << csv::format_double(e.length_m) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Shortest paths

std::vector<double> dijkstra(const RoadNetwork& net, VertexId source) {
  if (!net.contains(source)) {
    throw std::out_of_range("invalid vertex id " + std::to_string(source));
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(net.num_vertices(), kInf);
  using Entry = std::pair<double, VertexId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    for (const Arc& a : net.out_arcs(u)) {
      const double nd = d + a.length_m;
      if (nd < dist[a.dst]) {
        dist[a.dst] = nd;
        heap.emplace(nd, a.dst);
      }
    }
  }
  return dist;
}

ShortestPathCache::ShortestPathCache(const RoadNetwork& net)
    : net_(&net), rows_(net.num_vertices()) {}

std::shared_ptr<const std::vector<double>> ShortestPathCache::row(VertexId source) {
  if (!net_->contains(source)) {
    throw std::out_of_range("invalid vertex id " + std::to_string(source));
  }
  {
    std::shared_lock lock(mutex_);
    if (rows_[source]) return rows_[source];
  }
  auto fresh = std::make_shared<const std::vector<double>>(dijkstra(*net_, source));
  std::unique_lock lock(mutex_);
  if (!rows_[source]) rows_[source] = std::move(fresh);
  return rows_[source];
}

std::optional<double> ShortestPathCache::distance(VertexId u, VertexId v) {
  if (!net_->contains(v)) throw std::out_of_range("invalid vertex id " + std::to_string(v));
  const double d = (*row(u))[v];
  if (std::isinf(d)) return std::nullopt;
  return d;
}

void ShortestPathCache::clear() {
  std::unique_lock lock(mutex_);
  for (auto& r : rows_) r.reset();
}

std::size_t ShortestPathCache::cached_sources() const {
  std::shared_lock lock(mutex_);
  return static_cast<std::size_t>(
      std::count_if(rows_.begin(), rows_.end(), [](const auto& r) { return r != nullptr; }));
}

// ---------------------------------------------------------------------------
// Trajectories

MatchedTrajectory::MatchedTrajectory(TrajId id, std::vector<Step> steps)
    : id_(id), steps_(std::move(steps)) {
  if (steps_.empty()) throw InputError("trajectory " + std::to_string(id_) + " is empty");
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (!std::isfinite(steps_[i].t)) {
      throw InputError("trajectory " + std::to_string(id_) + " has a non-finite timestamp");
    }
    if (i == 0) continue;
    if (!(steps_[i].t > steps_[i - 1].t)) {
      throw InputError("trajectory " + std::to_string(id_) +
                       ": timestamps must be strictly increasing");
    }
    if (steps_[i].vertex == steps_[i - 1].vertex) {
      throw InputError("trajectory " + std::to_string(id_) +
                       ": consecutive steps share vertex " +
                       std::to_string(steps_[i].vertex));
    }
  }
}

std::vector<VertexId> MatchedTrajectory::spatial() const {
  std::vector<VertexId> out;
  out.reserve(steps_.size());
  for (const Step& s : steps_) out.push_back(s.vertex);
  return out;
}

std::vector<double> MatchedTrajectory::temporal() const {
  std::vector<double> out;
  out.reserve(steps_.size());
  for (const Step& s : steps_) out.push_back(s.t);
  return out;
}

MatchedTrajectory snap_trajectory(const RoadNetwork& net, const RawTrajectory& raw) {
  if (raw.points.empty()) {
    throw InputError("raw trajectory " + std::to_string(raw.traj_id) + " is empty");
  }
  std::vector<Step> steps;
  for (std::size_t i = 0; i < raw.points.size(); ++i) {
    const RawPoint& p = raw.points[i];
    if (i > 0 && !(p.t > raw.points[i - 1].t)) {
      throw InputError("raw trajectory " + std::to_string(raw.traj_id) +
                       ": timestamps must be strictly increasing");
    }
    const VertexId v = net.nearest_vertex(p.lon, p.lat);
    if (!steps.empty() && steps.back().vertex == v) continue;
    steps.push_back({v, p.t});
  }
  if (steps.size() < 2) {
    throw InputError("raw trajectory " + std::to_string(raw.traj_id) +
                     " collapses to fewer than 2 distinct vertices");
  }
  return MatchedTrajectory(raw.traj_id, std::move(steps));
}

std::vector<MatchedTrajectory> filter_short(std::vector<MatchedTrajectory> trajs,
                                            std::size_t min_steps) {
  std::erase_if(trajs, [&](const MatchedTrajectory& t) { return t.size() < min_steps; });
  return trajs;
}

void check_matched(const RoadNetwork& net, const MatchedTrajectory& traj) {
  for (const Step& s : traj.steps()) {
    if (!net.contains(s.vertex)) {
      throw InputError("trajectory " + std::to_string(traj.id()) +
                       " references unknown vertex " + std::to_string(s.vertex));
    }
  }
}

namespace {

using nlohmann::json;

template <typename Fn>
void for_each_json_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
      fn(obj, lineno);
    } catch (const json::exception& e) {
      throw InputError(e.what(), lineno);
    }
  }
}

}  // namespace

std::vector<RawTrajectory> read_raw_trajectories(std::istream& in) {
  std::vector<RawTrajectory> out;
  for_each_json_line(in, [&](const json& obj, std::size_t lineno) {
    RawTrajectory raw;
    raw.traj_id = obj.at("traj_id").get<TrajId>();
    for (const auto& p : obj.at("points")) {
      if (p.size() != 3) throw InputError("point must be [lon, lat, t]", lineno);
      raw.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    out.push_back(std::move(raw));
  });
  return out;
}

std::vector<MatchedTrajectory> read_matched_trajectories(std::istream& in) {
  std::vector<MatchedTrajectory> out;
  for_each_json_line(in, [&](const json& obj, std::size_t lineno) {
    std::vector<Step> steps;
    for (const auto& s : obj.at("steps")) {
      if (s.size() != 2) throw InputError("step must be [vertex_id, t]", lineno);
      steps.push_back({s[0].get<VertexId>(), s[1].get<double>()});
    }
    try {
      out.emplace_back(obj.at("traj_id").get<TrajId>(), std::move(steps));
    } catch (const InputError& e) {
      throw InputError(e.what(), lineno);
    }
  });
  return out;
}

void write_raw_trajectories(std::span<const RawTrajectory> trajs, std::ostream& out) {
  for (const RawTrajectory& r : trajs) {
    json pts = json::array();
    for (const RawPoint& p : r.points) pts.push_back({p.lon, p.lat, p.t});
    out << json{{"traj_id", r.traj_id}, {"points", std::move(pts)}}.dump() << '\n';
  }
}

void write_matched_trajectories(std::span<const MatchedTrajectory> trajs, std::ostream& out) {
  for (const MatchedTrajectory& m : trajs) {
    json steps = json::array();
    for (const Step& s : m.steps()) steps.push_back({s.vertex, s.t});
    out << json{{"traj_id", m.id()}, {"steps", std::move(steps)}}.dump() << '\n';
  }
}

std::vector<MatchedTrajectory> load_trajectories(const std::filesystem::path& path,
                                                 const RoadNetwork& net) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string first;
  while (std::getline(in, first) && first.find_first_not_of(" \t\r") == std::string::npos) {
  }
  in.clear();
  in.seekg(0);
  if (first.find("\"points\"") != std::string::npos) {
    std::vector<MatchedTrajectory> out;
    for (const RawTrajectory& raw : read_raw_trajectories(in)) {
      out.push_back(snap_trajectory(net, raw));
    }
    return out;
  }
  auto out = read_matched_trajectories(in);
  for (const auto& t : out) check_matched(net, t);
  return out;
}

}  // namespace trajsim
