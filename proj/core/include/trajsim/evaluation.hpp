#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "trajsim/distance_oracles.hpp"
#include "trajsim/model.hpp"
#include "trajsim/sampling.hpp"

namespace trajsim {

/// One d-vector per trajectory id, row-major.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  void add(TrajId id, std::span<const double> v);
  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<TrajId>& ids() const { return ids_; }
  bool contains(TrajId id) const { return index_.count(id) != 0; }
  std::span<const double> row(TrajId id) const;

 private:
  std::size_t dim_ = 0;
  std::vector<TrajId> ids_;
  std::unordered_map<TrajId, std::size_t> index_;
  std::vector<double> data_;
};

EmbeddingTable embed_corpus(std::span<const MatchedTrajectory> trajs, const Model& model);

/// `traj_id,v0,...,v{d-1}`.
void write_embeddings(const EmbeddingTable& table, std::ostream& out);
EmbeddingTable read_embeddings(std::istream& in);

struct RankedCandidate {
  TrajId id;
  double score;
};

/// Candidates best-first. For embedding rankings the score is the learned
/// similarity exp(-L2); for ground-truth rankings it is the distance.
struct RankingResult {
  TrajId query = 0;
  std::vector<RankedCandidate> candidates;
};

/// k nearest by embedding L2 over a full scan of `candidates` (or of the
/// whole table when empty), excluding the query; ties go to the lower id.
RankingResult topk_query(const EmbeddingTable& table, TrajId query, std::size_t k,
                         std::span<const TrajId> candidates = {});

/// k smallest combined ground-truth distances, ties to the lower id.
RankingResult truth_ranking(const DistanceMatrix& matrix, TrajId query, std::size_t k,
                            std::span<const TrajId> candidates = {});

struct MetricReport {
  double hr10 = 0.0;
  double hr50 = 0.0;
  double r10at50 = 0.0;
};

/// |top-k(pred) ∩ top-k(truth)| / k for one query. When fewer than k
/// candidates exist, k is clamped to the candidate count.
double hit_ratio(const RankingResult& predicted, const RankingResult& truth, std::size_t k);
/// |top-k(truth) ∩ top-t(pred)| / k for one query, with the same clamping.
double recall_at(const RankingResult& predicted, const RankingResult& truth, std::size_t k,
                 std::size_t t);

/// Macro-averaged HR@10, HR@50 and R10@50. Rankings are matched by query id.
MetricReport compute_metrics(std::span<const RankingResult> predicted,
                             std::span<const RankingResult> truth);

/// Every id in `queries` against the rest of `queries`.
MetricReport evaluate_retrieval(const EmbeddingTable& table, const DistanceMatrix& matrix,
                                std::span<const TrajId> queries);

void write_metrics(const MetricReport& m, std::ostream& out);

inline constexpr int kNoise = -1;

/// DBSCAN over points 0..n-1; a point's neighbourhood includes itself.
/// Clusters are numbered from 0 in order of their lowest-index core point.
std::vector<int> dbscan(std::size_t n, const std::function<double(std::size_t, std::size_t)>& dist,
                        double eps, std::size_t min_pts);

std::size_t cluster_count(std::span<const int> labels);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

struct TimingRow {
  std::size_t corpus_size = 0;
  double embedding_seconds = 0.0;     // per query, full scan
  double oracle_seconds = 0.0;        // per query, shortest paths computed on demand
  double oracle_warm_seconds = 0.0;   // per query, shortest paths already cached
  double speedup() const { return oracle_seconds / embedding_seconds; }
};

/// For each size, top-k search over the first `size` trajectories of the
/// corpus, timed per query for the embedding scan and the pairwise oracle.
/// Embedding construction is excluded (it happens offline).
std::vector<TimingRow> speedup_benchmark(std::span<const MatchedTrajectory> corpus,
                                         const EmbeddingTable& table, const RoadNetwork& net,
                                         const SimilarityConfig& cfg,
                                         std::span<const std::size_t> sizes,
                                         std::size_t queries_per_size = 5, std::size_t k = 50);

/// `corpus_size,embedding_s,oracle_s,oracle_warm_s,speedup`.
void write_timings(std::span<const TimingRow> rows, std::ostream& out);

}  // namespace trajsim
