#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "trajsim/road_network.hpp"

namespace trajsim {

/// Network-aware trajectory distance families.
///   TP      symmetrized nearest-point aggregation
///   DITA    network dynamic time warping
///   LCRS    longest common road segments, as a dissimilarity
///   NetERP  edit distance with a fixed gap reference
enum class MeasureKind { TP, DITA, LCRS, NetERP };

std::string_view to_string(MeasureKind kind);
MeasureKind parse_measure(std::string_view name);

struct SimilarityConfig {
  MeasureKind kind = MeasureKind::TP;
  /// Spatial weight in the combined distance; temporal weight is 1 - lambda.
  double lambda = 0.5;
  /// Scale of the exp(-alpha * D) normalization.
  double alpha = 1e-4;
  /// Two LCRS timestamps match when they differ by at most this many seconds.
  double lcrs_time_threshold = 300.0;
  /// Seconds-commensurate scale applied to the temporal LCRS dissimilarity.
  double lcrs_temporal_scale = 3600.0;
  VertexId erp_gap_vertex = 0;
  double erp_gap_time = 0.0;
  /// Substituted for unreachable vertex pairs and used as the spatial LCRS
  /// scale. Defaults to the network's total edge length when unset.
  std::optional<double> unreachable_penalty;

  /// Throws std::invalid_argument on an out-of-range field.
  void validate() const;
  double penalty_for(const RoadNetwork& net) const;
};

struct PairDistance {
  double spatial = 0.0;
  double temporal = 0.0;
  double combined = 0.0;
};

/// D_S under `kind`. Shortest paths are directed and taken as-is.
double spatial_distance(MeasureKind kind, const RoadNetwork& net, ShortestPathCache& cache,
                        const SimilarityConfig& cfg, const MatchedTrajectory& a,
                        const MatchedTrajectory& b);

/// D_T under `kind`, with |t_i - t_j| as the point distance.
double temporal_distance(MeasureKind kind, const SimilarityConfig& cfg,
                         const MatchedTrajectory& a, const MatchedTrajectory& b);

/// lambda * D_S + (1 - lambda) * D_T under cfg.kind.
double combined_distance(const SimilarityConfig& cfg, const RoadNetwork& net,
                         ShortestPathCache& cache, const MatchedTrajectory& a,
                         const MatchedTrajectory& b);

/// All three components at once (one spatial and one temporal evaluation).
PairDistance pair_distance(const SimilarityConfig& cfg, const RoadNetwork& net,
                           ShortestPathCache& cache, const MatchedTrajectory& a,
                           const MatchedTrajectory& b);

/// exp(-alpha * d). Rejects negative d and non-positive alpha.
double normalize_similarity(double d, double alpha);

/// Unscaled LCRS dissimilarities in [0, 1].
double lcrs_spatial_dissimilarity(const RoadNetwork& net, ShortestPathCache& cache,
                                  const SimilarityConfig& cfg, const MatchedTrajectory& a,
                                  const MatchedTrajectory& b);
double lcrs_temporal_dissimilarity(const SimilarityConfig& cfg, const MatchedTrajectory& a,
                                   const MatchedTrajectory& b);

}  // namespace trajsim
