#include "trajsim/distance_oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace trajsim {

std::string_view to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::TP: return "TP";
    case MeasureKind::DITA: return "DITA";
    case MeasureKind::LCRS: return "LCRS";
    case MeasureKind::NetERP: return "NetERP";
  }
  return "?";
}

MeasureKind parse_measure(std::string_view name) {
  for (MeasureKind k : {MeasureKind::TP, MeasureKind::DITA, MeasureKind::LCRS,
                        MeasureKind::NetERP}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown measure '" + std::string(name) + "'");
}

void SimilarityConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0,1]");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be > 0");
  if (!(lcrs_time_threshold > 0.0)) {
    throw std::invalid_argument("lcrs_time_threshold must be > 0");
  }
  if (!(lcrs_temporal_scale > 0.0)) {
    throw std::invalid_argument("lcrs_temporal_scale must be > 0");
  }
  if (unreachable_penalty && !(*unreachable_penalty > 0.0)) {
    throw std::invalid_argument("unreachable_penalty must be > 0");
  }
}

double SimilarityConfig::penalty_for(const RoadNetwork& net) const {
  return unreachable_penalty ? *unreachable_penalty : net.total_length();
}

namespace {

// Row-major |a| x |b| matrix of point costs.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

void require_nonempty(const MatchedTrajectory& a, const MatchedTrajectory& b) {
  if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("empty trajectory");
}

// sp(a_i, b_j) with the unreachable penalty substituted.
CostMatrix network_costs(const RoadNetwork& net, ShortestPathCache& cache, double penalty,
                         const MatchedTrajectory& a, const MatchedTrajectory& b) {
  check_matched(net, a);
  check_matched(net, b);
  CostMatrix c{a.size(), b.size(), std::vector<double>(a.size() * b.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto row = cache.row(a.steps()[i].vertex);
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = (*row)[b.steps()[j].vertex];
      c.data[i * c.cols + j] = std::isinf(d) ? penalty : d;
    }
  }
  return c;
}

CostMatrix time_costs(const MatchedTrajectory& a, const MatchedTrajectory& b) {
  CostMatrix c{a.size(), b.size(), std::vector<double>(a.size() * b.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      c.data[i * c.cols + j] = std::abs(a.steps()[i].t - b.steps()[j].t);
    }
  }
  return c;
}

// (1/|a|) sum_i min_j forward(i,j) + (1/|b|) sum_j min_i backward(j,i).
double tp_aggregate(const CostMatrix& forward, const CostMatrix& backward) {
  double fa = 0.0;
  for (std::size_t i = 0; i < forward.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < forward.cols; ++j) best = std::min(best, forward(i, j));
    fa += best;
  }
  double fb = 0.0;
  for (std::size_t j = 0; j < backward.rows; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < backward.cols; ++i) best = std::min(best, backward(j, i));
    fb += best;
  }
  return fa / static_cast<double>(forward.rows) + fb / static_cast<double>(backward.rows);
}

double dtw(const CostMatrix& c) {
  const std::size_t n = c.rows, m = c.cols;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, kInf), cur(m + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = kInf;
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = c(i - 1, j - 1) + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double erp(const CostMatrix& c, const std::vector<double>& gap_a,
           const std::vector<double>& gap_b) {
  const std::size_t n = c.rows, m = c.cols;
  std::vector<double> prev(m + 1, 0.0), cur(m + 1, 0.0);
  for (std::size_t j = 1; j <= m; ++j) prev[j] = prev[j - 1] + gap_b[j - 1];
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = prev[0] + gap_a[i - 1];
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = std::min({prev[j - 1] + c(i - 1, j - 1), prev[j] + gap_a[i - 1],
                         cur[j - 1] + gap_b[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Weighted LCS over segment sequences. `match(i, j)` returns the credited
// weight for aligning segment i of a with segment j of b, or 0 for no match.
template <typename Match>
double weighted_lcs(std::size_t n, std::size_t m, Match&& match) {
  std::vector<double> prev(m + 1, 0.0), cur(m + 1, 0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = 0.0;
    for (std::size_t j = 1; j <= m; ++j) {
      const double w = match(i - 1, j - 1);
      cur[j] = std::max(prev[j], cur[j - 1]);
      if (w > 0.0) cur[j] = std::max(cur[j], prev[j - 1] + w);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::vector<double> segment_lengths(const RoadNetwork& net, ShortestPathCache& cache,
                                    double penalty, const MatchedTrajectory& t) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const VertexId u = t.steps()[i].vertex, v = t.steps()[i + 1].vertex;
    if (auto len = net.arc_length(u, v)) {
      out.push_back(*len);
    } else {
      // Snapped trajectories may skip vertices; use the connecting path length.
      out.push_back(cache.distance(u, v).value_or(penalty));
    }
  }
  return out;
}

double ratio_dissimilarity(double common, double total_a, double total_b) {
  const double denom = total_a + total_b;
  if (denom <= 0.0) return 1.0;
  return std::clamp(1.0 - 2.0 * common / denom, 0.0, 1.0);
}

}  // namespace

double lcrs_spatial_dissimilarity(const RoadNetwork& net, ShortestPathCache& cache,
                                  const SimilarityConfig& cfg, const MatchedTrajectory& a,
                                  const MatchedTrajectory& b) {
  require_nonempty(a, b);
  check_matched(net, a);
  check_matched(net, b);
  const double penalty = cfg.penalty_for(net);
  const auto la = segment_lengths(net, cache, penalty, a);
  const auto lb = segment_lengths(net, cache, penalty, b);
  if (la.empty() && lb.empty()) {
    return a.steps()[0].vertex == b.steps()[0].vertex ? 0.0 : 1.0;
  }
  const auto& sa = a.steps();
  const auto& sb = b.steps();
  const double common = weighted_lcs(la.size(), lb.size(), [&](std::size_t i, std::size_t j) {
    return (sa[i].vertex == sb[j].vertex && sa[i + 1].vertex == sb[j + 1].vertex) ? la[i] : 0.0;
  });
  double ta = 0.0, tb = 0.0;
  for (double x : la) ta += x;
  for (double x : lb) tb += x;
  return ratio_dissimilarity(common, ta, tb);
}

double lcrs_temporal_dissimilarity(const SimilarityConfig& cfg, const MatchedTrajectory& a,
                                   const MatchedTrajectory& b) {
  require_nonempty(a, b);
  const auto& sa = a.steps();
  const auto& sb = b.steps();
  if (sa.size() < 2 && sb.size() < 2) {
    return std::abs(sa[0].t - sb[0].t) <= cfg.lcrs_time_threshold ? 0.0 : 1.0;
  }
  const double thr = cfg.lcrs_time_threshold;
  // A time segment matches when both endpoints agree within the threshold;
  // it is credited with the mean of the two durations so the score is symmetric.
  const double common =
      weighted_lcs(sa.size() - 1, sb.size() - 1, [&](std::size_t i, std::size_t j) {
        if (std::abs(sa[i].t - sb[j].t) > thr || std::abs(sa[i + 1].t - sb[j + 1].t) > thr) {
          return 0.0;
        }
        return 0.5 * ((sa[i + 1].t - sa[i].t) + (sb[j + 1].t - sb[j].t));
      });
  // Totals summed segment-wise, like the credit, so identical inputs give exactly 0.
  double ta = 0.0, tb = 0.0;
  for (std::size_t i = 0; i + 1 < sa.size(); ++i) ta += sa[i + 1].t - sa[i].t;
  for (std::size_t j = 0; j + 1 < sb.size(); ++j) tb += sb[j + 1].t - sb[j].t;
  return ratio_dissimilarity(common, ta, tb);
}

double spatial_distance(MeasureKind kind, const RoadNetwork& net, ShortestPathCache& cache,
                        const SimilarityConfig& cfg, const MatchedTrajectory& a,
                        const MatchedTrajectory& b) {
  require_nonempty(a, b);
  const double penalty = cfg.penalty_for(net);
  switch (kind) {
    case MeasureKind::TP:
      return tp_aggregate(network_costs(net, cache, penalty, a, b),
                          network_costs(net, cache, penalty, b, a));
    case MeasureKind::DITA:
      return dtw(network_costs(net, cache, penalty, a, b));
    case MeasureKind::LCRS:
      return penalty * lcrs_spatial_dissimilarity(net, cache, cfg, a, b);
    case MeasureKind::NetERP: {
      if (!net.contains(cfg.erp_gap_vertex)) {
        throw std::invalid_argument("erp_gap_vertex is not in the network");
      }
      const auto costs = network_costs(net, cache, penalty, a, b);
      auto gaps = [&](const MatchedTrajectory& t) {
        std::vector<double> g;
        for (const Step& s : t.steps()) {
          g.push_back(cache.distance(s.vertex, cfg.erp_gap_vertex).value_or(penalty));
        }
        return g;
      };
      return erp(costs, gaps(a), gaps(b));
    }
  }
  throw std::logic_error("unhandled measure");
}

double temporal_distance(MeasureKind kind, const SimilarityConfig& cfg,
                         const MatchedTrajectory& a, const MatchedTrajectory& b) {
  require_nonempty(a, b);
  switch (kind) {
    case MeasureKind::TP:
      return tp_aggregate(time_costs(a, b), time_costs(b, a));
    case MeasureKind::DITA:
      return dtw(time_costs(a, b));
    case MeasureKind::LCRS:
      return cfg.lcrs_temporal_scale * lcrs_temporal_dissimilarity(cfg, a, b);
    case MeasureKind::NetERP: {
      auto gaps = [&](const MatchedTrajectory& t) {
        std::vector<double> g;
        for (const Step& s : t.steps()) g.push_back(std::abs(s.t - cfg.erp_gap_time));
        return g;
      };
      return erp(time_costs(a, b), gaps(a), gaps(b));
    }
  }
  throw std::logic_error("unhandled measure");
}

PairDistance pair_distance(const SimilarityConfig& cfg, const RoadNetwork& net,
                           ShortestPathCache& cache, const MatchedTrajectory& a,
                           const MatchedTrajectory& b) {
  cfg.validate();
  PairDistance d;
  d.spatial = spatial_distance(cfg.kind, net, cache, cfg, a, b);
  d.temporal = temporal_distance(cfg.kind, cfg, a, b);
  d.combined = cfg.lambda * d.spatial + (1.0 - cfg.lambda) * d.temporal;
  return d;
}

double combined_distance(const SimilarityConfig& cfg, const RoadNetwork& net,
                         ShortestPathCache& cache, const MatchedTrajectory& a,
                         const MatchedTrajectory& b) {
  return pair_distance(cfg, net, cache, a, b).combined;
}

double normalize_similarity(double d, double alpha) {
  if (!(d >= 0.0)) throw std::invalid_argument("distance must be nonnegative");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  return std::exp(-alpha * d);
}

}  // namespace trajsim
