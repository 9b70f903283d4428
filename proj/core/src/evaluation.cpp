#include "trajsim/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include "csv_util.hpp"

namespace trajsim {

void EmbeddingTable::add(TrajId id, std::span<const double> v) {
  if (v.size() != dim_) {
    throw std::invalid_argument("embedding of dimension " + std::to_string(v.size()) +
                                " does not match table dimension " + std::to_string(dim_));
  }
  if (!index_.emplace(id, ids_.size()).second) {
    throw std::invalid_argument("duplicate embedding id " + std::to_string(id));
  }
  ids_.push_back(id);
  data_.insert(data_.end(), v.begin(), v.end());
}

std::span<const double> EmbeddingTable::row(TrajId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown trajectory id " + std::to_string(id));
  return {data_.data() + it->second * dim_, dim_};
}

EmbeddingTable embed_corpus(std::span<const MatchedTrajectory> trajs, const Model& model) {
  EmbeddingTable table(model.config().hidden);
  for (const auto& t : trajs) table.add(t.id(), model.embed(t));
  return table;
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << "traj_id";
  for (std::size_t k = 0; k < table.dim(); ++k) out << ",v" << k;
  out << '\n';
  for (TrajId id : table.ids()) {
    out << id;
    for (double x : table.row(id)) out << ',' << csv::format_double(x);
    out << '\n';
  }
}

EmbeddingTable read_embeddings(std::istream& in) {
  std::string header;
  std::size_t lineno = 0;
  while (std::getline(in, header)) {
    ++lineno;
    if (header.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  const auto cols = csv::split(header);
  if (cols.empty() || cols[0] != "traj_id") throw InputError("expected traj_id column", lineno);
  for (std::size_t k = 1; k < cols.size(); ++k) {
    if (cols[k] != "v" + std::to_string(k - 1)) throw InputError("unexpected embedding header", lineno);
  }
  EmbeddingTable table(cols.size() - 1);
  std::string line;
  std::vector<double> v(cols.size() - 1);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = csv::split(line);
    if (f.size() != cols.size()) throw InputError("wrong field count", lineno);
    for (std::size_t k = 1; k < f.size(); ++k) v[k - 1] = csv::parse_double(f[k], lineno);
    table.add(csv::parse_int<TrajId>(f[0], lineno), v);
  }
  return table;
}

namespace {

template <typename Score>
RankingResult rank_by(TrajId query, std::size_t k, std::span<const TrajId> pool, Score&& score,
                      bool descending) {
  std::vector<RankedCandidate> all;
  all.reserve(pool.size());
  for (TrajId id : pool) {
    if (id != query) all.push_back({id, score(id)});
  }
  if (k > all.size()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(all.size()) + " available candidates");
  }
  auto better = [&](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return descending ? a.score > b.score : a.score < b.score;
    return a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return {query, std::move(all)};
}

}  // namespace

RankingResult topk_query(const EmbeddingTable& table, TrajId query, std::size_t k,
                         std::span<const TrajId> candidates) {
  const auto q = table.row(query);
  const auto pool = candidates.empty() ? std::span<const TrajId>(table.ids()) : candidates;
  // Rank on squared L2 (same order as the similarity), report exp(-L2).
  auto result = rank_by(
      query, k, pool,
      [&](TrajId id) {
        const auto v = table.row(id);
        double sq = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) sq += (q[i] - v[i]) * (q[i] - v[i]);
        return sq;
      },
      false);
  for (auto& c : result.candidates) c.score = std::exp(-std::sqrt(c.score));
  return result;
}

RankingResult truth_ranking(const DistanceMatrix& matrix, TrajId query, std::size_t k,
                            std::span<const TrajId> candidates) {
  const auto pool = candidates.empty() ? std::span<const TrajId>(matrix.ids()) : candidates;
  return rank_by(
      query, k, pool, [&](TrajId id) { return matrix.combined(query, id); }, false);
}

double recall_at(const RankingResult& predicted, const RankingResult& truth, std::size_t k,
                 std::size_t t) {
  k = std::min(k, truth.candidates.size());
  t = std::min(t, predicted.candidates.size());
  if (k == 0) throw std::invalid_argument("empty ranking");
  std::unordered_set<TrajId> top_pred;
  for (std::size_t i = 0; i < t; ++i) top_pred.insert(predicted.candidates[i].id);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += top_pred.count(truth.candidates[i].id);
  return static_cast<double>(hits) / static_cast<double>(k);
}

double hit_ratio(const RankingResult& predicted, const RankingResult& truth, std::size_t k) {
  k = std::min({k, predicted.candidates.size(), truth.candidates.size()});
  return recall_at(predicted, truth, k, k);
}

MetricReport compute_metrics(std::span<const RankingResult> predicted,
                             std::span<const RankingResult> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw std::invalid_argument("predicted and truth rankings cover different query sets");
  }
  std::unordered_map<TrajId, const RankingResult*> by_query;
  for (const auto& t : truth) by_query[t.query] = &t;
  MetricReport m;
  for (const auto& p : predicted) {
    const auto it = by_query.find(p.query);
    if (it == by_query.end()) {
      throw std::invalid_argument("no truth ranking for query " + std::to_string(p.query));
    }
    const RankingResult& t = *it->second;
    m.hr10 += hit_ratio(p, t, 10);
    m.hr50 += hit_ratio(p, t, 50);
    m.r10at50 += recall_at(p, t, 10, 50);
  }
  const double n = static_cast<double>(predicted.size());
  m.hr10 /= n;
  m.hr50 /= n;
  m.r10at50 /= n;
  return m;
}

MetricReport evaluate_retrieval(const EmbeddingTable& table, const DistanceMatrix& matrix,
                                std::span<const TrajId> queries) {
  if (queries.size() < 2) throw std::invalid_argument("need at least 2 queries");
  const std::size_t k = std::min<std::size_t>(50, queries.size() - 1);
  std::vector<RankingResult> pred, truth;
  for (TrajId q : queries) {
    pred.push_back(topk_query(table, q, k, queries));
    truth.push_back(truth_ranking(matrix, q, k, queries));
  }
  return compute_metrics(pred, truth);
}

void write_metrics(const MetricReport& m, std::ostream& out) {
  out << "hr10,hr50,r10at50\n"
      << csv::format_double(m.hr10) << ',' << csv::format_double(m.hr50) << ','
      << csv::format_double(m.r10at50) << '\n';
}

std::vector<int> dbscan(std::size_t n, const std::function<double(std::size_t, std::size_t)>& dist,
                        double eps, std::size_t min_pts) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (min_pts < 1) throw std::invalid_argument("minPts must be >= 1");
  auto neighbours = [&](std::size_t p) {
    std::vector<std::size_t> out;
    for (std::size_t q = 0; q < n; ++q) {
      if (q == p || dist(p, q) <= eps) out.push_back(q);
    }
    return out;
  };
  constexpr int kUnvisited = -2;
  std::vector<int> label(n, kUnvisited);
  int cluster = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (label[p] != kUnvisited) continue;
    auto seeds = neighbours(p);
    if (seeds.size() < min_pts) {
      label[p] = kNoise;
      continue;
    }
    label[p] = cluster;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const std::size_t q = seeds[i];
      if (label[q] == kNoise) label[q] = cluster;
      if (label[q] != kUnvisited) continue;
      label[q] = cluster;
      const auto more = neighbours(q);
      if (more.size() >= min_pts) seeds.insert(seeds.end(), more.begin(), more.end());
    }
    ++cluster;
  }
  return label;
}

std::size_t cluster_count(std::span<const int> labels) {
  int mx = -1;
  for (int l : labels) mx = std::max(mx, l);
  return static_cast<std::size_t>(mx + 1);
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: bad input");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<TimingRow> speedup_benchmark(std::span<const MatchedTrajectory> corpus,
                                         const EmbeddingTable& table, const RoadNetwork& net,
                                         const SimilarityConfig& cfg,
                                         std::span<const std::size_t> sizes,
                                         std::size_t queries_per_size, std::size_t k) {
  using Clock = std::chrono::steady_clock;
  auto seconds = [](Clock::duration d) { return std::chrono::duration<double>(d).count(); };
  std::vector<TimingRow> rows;
  volatile double sink = 0.0;
  for (std::size_t size : sizes) {
    if (size > corpus.size() || size < 2) {
      throw std::invalid_argument("benchmark size " + std::to_string(size) +
                                  " outside corpus of " + std::to_string(corpus.size()));
    }
    const auto subset = corpus.first(size);
    std::vector<TrajId> ids;
    for (const auto& t : subset) ids.push_back(t.id());
    const std::size_t kk = std::min(k, size - 1);
    const std::size_t nq = std::min(queries_per_size, size);
    TimingRow row;
    row.corpus_size = size;

    // Embedding scans are microseconds each; repeat them for a stable clock.
    const std::size_t reps = 20;
    auto t0 = Clock::now();
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t q = 0; q < nq; ++q) {
        sink = sink + topk_query(table, ids[q], kk, ids).candidates.front().score;
      }
    }
    row.embedding_seconds = seconds(Clock::now() - t0) / static_cast<double>(reps * nq);

    auto oracle_query = [&](ShortestPathCache& cache, std::size_t q) {
      std::vector<RankedCandidate> scored;
      for (std::size_t j = 0; j < size; ++j) {
        if (j == q) continue;
        scored.push_back({ids[j], combined_distance(cfg, net, cache, subset[q], subset[j])});
      }
      std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(kk),
                        scored.end(), [](const auto& a, const auto& b) {
                          return a.score != b.score ? a.score < b.score : a.id < b.id;
                        });
      sink = sink + scored.front().score;
    };

    t0 = Clock::now();
    for (std::size_t q = 0; q < nq; ++q) {
      ShortestPathCache cold(net);
      oracle_query(cold, q);
    }
    row.oracle_seconds = seconds(Clock::now() - t0) / static_cast<double>(nq);

    ShortestPathCache warm(net);
    oracle_query(warm, 0);
    t0 = Clock::now();
    for (std::size_t q = 0; q < nq; ++q) oracle_query(warm, q);
    row.oracle_warm_seconds = seconds(Clock::now() - t0) / static_cast<double>(nq);
    rows.push_back(row);
  }
  return rows;
}

void write_timings(std::span<const TimingRow> rows, std::ostream& out) {
  out << "corpus_size,embedding_s,oracle_s,oracle_warm_s,speedup\n";
  for (const auto& r : rows) {
    out << r.corpus_size << ',' << csv::format_double(r.embedding_seconds) << ','
        << csv::format_double(r.oracle_seconds) << ',' << csv::format_double(r.oracle_warm_seconds)
        << ',' << csv::format_double(r.speedup()) << '\n';
  }
}

}  // namespace trajsim
