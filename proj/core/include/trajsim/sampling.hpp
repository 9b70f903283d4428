#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "trajsim/distance_oracles.hpp"
#include "trajsim/road_network.hpp"
#include "trajsim/rng.hpp"

namespace trajsim {

/// Dense symmetric table of pairwise distances keyed by trajectory id.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::vector<TrajId> ids);

  const std::vector<TrajId>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(TrajId id) const { return index_.count(id) != 0; }
  std::size_t index_of(TrajId id) const;

  const PairDistance& at(TrajId a, TrajId b) const;
  double combined(TrajId a, TrajId b) const { return at(a, b).combined; }
  void set(TrajId a, TrajId b, const PairDistance& d);

  /// Restriction to `ids` (all must be present), preserving their order.
  DistanceMatrix subset(std::span<const TrajId> ids) const;

 private:
  std::vector<TrajId> ids_;
  std::unordered_map<TrajId, std::size_t> index_;
  std::vector<PairDistance> cells_;
};

/// All unordered pairs under cfg. `workers` > 1 splits rows across threads;
/// the result does not depend on the worker count.
DistanceMatrix ground_truth_matrix(std::span<const MatchedTrajectory> trajs,
                                   const SimilarityConfig& cfg, const RoadNetwork& net,
                                   ShortestPathCache& cache, unsigned workers = 1);

/// Rows `traj_i,traj_j,d_spatial,d_temporal,d_combined` for i < j by id order.
void write_ground_truth(const DistanceMatrix& m, std::ostream& out);
DistanceMatrix read_ground_truth(std::istream& in);

struct Triplet {
  TrajId anchor = 0;
  TrajId positive = 0;
  TrajId negative = 0;
  double d_ap_norm = 0.0;
  double d_an_norm = 0.0;
  std::int32_t hardness_rank = 0;

  bool operator==(const Triplet&) const = default;
};

/// Per anchor: the N nearest ids (ties by ascending id) as positives and N
/// uniformly drawn others as negatives, zipped by rank. Every id in `matrix`
/// is a candidate, so pass a training-only submatrix to avoid leakage.
std::vector<Triplet> select_triplets(const DistanceMatrix& matrix,
                                     std::span<const TrajId> anchors, std::size_t n,
                                     double alpha, std::uint64_t seed);

/// Sorts each anchor's triplets by ascending d_ap_norm (stable), assigns
/// hardness ranks, then interleaves anchors round-robin by rank.
std::vector<Triplet> curriculum_order(std::span<const Triplet> triplets);

void write_triplets(std::span<const Triplet> triplets, std::ostream& out);
std::vector<Triplet> read_triplets(std::istream& in);

struct DatasetSplit {
  std::vector<TrajId> train;
  std::vector<TrajId> validation;
  std::vector<TrajId> test;
};

/// Seeded shuffle then a 3:1:6 cut with largest-remainder rounding.
DatasetSplit split_dataset(std::span<const TrajId> ids, std::uint64_t seed);

void write_split(const DatasetSplit& split, std::ostream& out);
DatasetSplit read_split(std::istream& in);

}  // namespace trajsim
