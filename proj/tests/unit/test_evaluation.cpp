#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "support.hpp"
#include "trajsim/evaluation.hpp"

using namespace trajsim;

namespace {

EmbeddingTable random_table(Rng& rng, std::size_t n, std::size_t dim, TrajId first = 0) {
  EmbeddingTable t(dim);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& x : v) x = rng.uniform(-1, 1);
    t.add(first + TrajId(i), v);
  }
  return t;
}

// Combined distance |x_a - x_b|.
DistanceMatrix line_matrix(const std::vector<double>& x, TrajId first = 0) {
  std::vector<TrajId> ids(x.size());
  std::iota(ids.begin(), ids.end(), first);
  DistanceMatrix m(ids);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double d = std::abs(x[i] - x[j]);
      m.set(ids[i], ids[j], {d, d, d});
    }
  return m;
}

RankingResult ranking(TrajId q, std::vector<TrajId> ids) {
  RankingResult r{q, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) r.candidates.push_back({ids[i], double(i)});
  return r;
}

// Rank with ties averaged, by counting.
std::vector<double> count_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) less += y < x[i], equal += y == x[i];
    r[i] = less + (equal - 1) / 2;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += (a[i] - ma) * (b[i] - mb);
    aa += (a[i] - ma) * (a[i] - ma);
    bb += (b[i] - mb) * (b[i] - mb);
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("embedding table basics and CSV round trip") {
  Rng rng(1);
  EmbeddingTable t = random_table(rng, 5, 3, 10);
  CHECK(t.size() == 5);
  CHECK(t.contains(12));
  CHECK_FALSE(t.contains(2));
  CHECK_THROWS_AS(t.row(2), std::out_of_range);
  const std::vector<double> v{1, 2};
  CHECK_THROWS_AS(t.add(99, v), std::invalid_argument);
  const std::vector<double> w{1, 2, 3};
  CHECK_THROWS_AS(t.add(10, w), std::invalid_argument);

  std::ostringstream out;
  write_embeddings(t, out);
  CHECK(out.str().rfind("traj_id,v0,v1,v2\n10,", 0) == 0);
  std::istringstream in(out.str());
  const EmbeddingTable back = read_embeddings(in);
  REQUIRE(back.ids() == t.ids());
  for (TrajId id : t.ids())
    CHECK(std::equal(back.row(id).begin(), back.row(id).end(), t.row(id).begin()));
  std::istringstream bad("traj_id,v0\n1,0.5\n2,x\n");
  CHECK_THROWS_AS(read_embeddings(bad), InputError);
}

TEST_CASE("top-k equals a full sort and is prefix-closed") {
  Rng rng(2);
  const EmbeddingTable t = random_table(rng, 200, 5);
  for (int trial = 0; trial < 10; ++trial) {
    const TrajId q = TrajId(rng.below(200));
    std::vector<std::pair<double, TrajId>> all;
    for (TrajId id : t.ids()) {
      if (id == q) continue;
      double sq = 0;
      for (std::size_t k = 0; k < 5; ++k) sq += std::pow(t.row(q)[k] - t.row(id)[k], 2);
      all.push_back({std::sqrt(sq), id});
    }
    std::sort(all.begin(), all.end());
    const auto big = topk_query(t, q, 50, {});
    REQUIRE(big.candidates.size() == 50);
    CHECK(big.query == q);
    for (std::size_t i = 0; i < 50; ++i) {
      CHECK(big.candidates[i].id == all[i].second);
      CHECK(big.candidates[i].score == doctest::Approx(std::exp(-all[i].first)).epsilon(1e-12));
    }
    for (std::size_t k : {1u, 10u, 49u}) {
      const auto small = topk_query(t, q, k, {});
      REQUIRE(small.candidates.size() == k);
      for (std::size_t i = 0; i < k; ++i) CHECK(small.candidates[i].id == big.candidates[i].id);
    }
  }
  CHECK_THROWS_AS(topk_query(t, 0, 200, {}), std::invalid_argument);
  CHECK_NOTHROW(topk_query(t, 0, 199, {}));
}

TEST_CASE("top-k respects candidate pools and breaks ties by id") {
  EmbeddingTable t(1);
  for (TrajId id : {5, 3, 9, 1, 7}) {
    const std::vector<double> v{id == 1 ? 0.0 : 1.0};
    t.add(id, v);
  }
  const auto r = topk_query(t, 1, 4, {});
  CHECK(r.candidates[0].id == 3);
  CHECK(r.candidates[1].id == 5);
  CHECK(r.candidates[3].id == 9);
  const std::vector<TrajId> pool{1, 9, 7};
  const auto p = topk_query(t, 1, 2, pool);
  CHECK(p.candidates[0].id == 7);
  CHECK(p.candidates[1].id == 9);
}

TEST_CASE("ground-truth ranking sorts by combined distance") {
  const auto m = line_matrix({0.0, 4.0, -1.0, 2.0, 2.0, 9.0});
  const auto r = truth_ranking(m, 0, 5);
  std::vector<TrajId> ids;
  for (const auto& c : r.candidates) ids.push_back(c.id);
  CHECK(ids == std::vector<TrajId>{2, 3, 4, 1, 5});
  CHECK(r.candidates[0].score == 1.0);
}

TEST_CASE("hit ratio and recall definitions") {
  const auto truth = ranking(0, {1, 2, 3, 4, 5, 6});
  CHECK(hit_ratio(truth, truth, 3) == 1.0);
  CHECK(hit_ratio(ranking(0, {6, 5, 4, 3, 2, 1}), truth, 3) == 0.0);
  CHECK(hit_ratio(ranking(0, {3, 9, 1, 8}), truth, 4) == 0.5);
  // Clamped: only 6 candidates, so HR@50 compares whole lists.
  CHECK(hit_ratio(ranking(0, {6, 5, 4, 3, 2, 1}), truth, 50) == 1.0);
  CHECK(recall_at(ranking(0, {9, 8, 1, 7, 2}), truth, 2, 5) == 1.0);
  CHECK(recall_at(ranking(0, {9, 8, 1, 7, 2}), truth, 2, 3) == 0.5);
  CHECK_THROWS_AS(recall_at(truth, RankingResult{0, {}}, 1, 1), std::invalid_argument);
}

TEST_CASE("metrics: self is perfect, disjoint is zero, relabelling changes nothing") {
  Rng rng(3);
  std::vector<double> x(80);
  for (double& v : x) v = rng.uniform(0, 100);
  const auto m = line_matrix(x);

  EmbeddingTable exact(1);
  for (std::size_t i = 0; i < x.size(); ++i) exact.add(TrajId(i), std::vector<double>{x[i]});
  const auto self = evaluate_retrieval(exact, m, m.ids());
  CHECK(self.hr10 == 1.0);
  CHECK(self.hr50 == 1.0);
  CHECK(self.r10at50 == 1.0);

  // Disjoint: truth top-10 is a contiguous block, prediction lists the far end.
  std::vector<RankingResult> pred, truth;
  for (TrajId q = 0; q < 5; ++q) {
    std::vector<TrajId> a, b;
    for (TrajId i = 0; i < 20; ++i) a.push_back(100 + i), b.push_back(200 + i);
    truth.push_back(ranking(q, a));
    pred.push_back(ranking(q, b));
  }
  const auto zero = compute_metrics(pred, truth);
  CHECK(zero.hr10 == 0.0);
  CHECK(zero.r10at50 == 0.0);
  std::vector<RankingResult> shuffled(truth.rbegin(), truth.rend());
  CHECK(compute_metrics(truth, shuffled).hr10 == 1.0);  // matched by query id
  CHECK_THROWS_AS(compute_metrics(pred, std::span<const RankingResult>(truth).first(4)), std::invalid_argument);

  const EmbeddingTable noisy = random_table(rng, 80, 4);
  const auto base = evaluate_retrieval(noisy, m, m.ids());
  // Consistent relabelling of ids and reordering of the query list.
  std::vector<TrajId> perm(80);
  std::iota(perm.begin(), perm.end(), 1000);
  rng.shuffle(std::span<TrajId>(perm));
  std::vector<TrajId> ids2(perm.begin(), perm.end());
  DistanceMatrix m2(ids2);
  EmbeddingTable t2(4);
  for (std::size_t i = 0; i < 80; ++i) {
    t2.add(perm[i], noisy.row(TrajId(i)));
    for (std::size_t j = i + 1; j < 80; ++j) m2.set(perm[i], perm[j], m.at(TrajId(i), TrajId(j)));
  }
  std::vector<TrajId> queries = ids2;
  std::reverse(queries.begin(), queries.end());
  const auto relabelled = evaluate_retrieval(t2, m2, queries);
  // Ties in the toy distances could break differently under new ids; x is continuous so none occur.
  CHECK(relabelled.hr10 == doctest::Approx(base.hr10).epsilon(1e-12));
  CHECK(relabelled.hr50 == doctest::Approx(base.hr50).epsilon(1e-12));
  CHECK(relabelled.r10at50 == doctest::Approx(base.r10at50).epsilon(1e-12));
}

TEST_CASE("random embeddings score the hypergeometric baseline") {
  // Two independent random 10-subsets of N candidates overlap by 100/N on average.
  const std::size_t n = 60, seeds = 20;
  const double big_n = double(n - 1);
  const double mean = 10.0 / big_n;
  const double var_overlap = 10.0 * (10.0 / big_n) * (1 - 10.0 / big_n) * (big_n - 10) / (big_n - 1);
  const double sigma = std::sqrt(var_overlap / 100.0 / double(n * seeds));
  double total = 0;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    Rng rng(s);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(0, 1);
    const auto m = line_matrix(x);
    total += evaluate_retrieval(random_table(rng, n, 8), m, m.ids()).hr10;
  }
  const double observed = total / double(seeds);
  CAPTURE(observed);
  CAPTURE(mean);
  CHECK(std::abs(observed - mean) <= 3 * sigma);
}

TEST_CASE("metric report CSV") {
  std::ostringstream out;
  write_metrics({0.5, 0.75, 1.0}, out);
  CHECK(out.str() == "hr10,hr50,r10at50\n0.5,0.75,1\n");
}

TEST_CASE("DBSCAN on hand-made layouts") {
  const std::vector<double> x{0.0, 0.5, 1.0, 10.0, 10.4, 10.8, 50.0, 1.9};
  auto dist = [&](std::size_t a, std::size_t b) { return std::abs(x[a] - x[b]); };
  const auto labels = dbscan(x.size(), dist, 1.0, 3);
  // 0,1,2 are core; 7 is a border point of cluster 0 via 2; 50 is noise.
  CHECK(labels == std::vector<int>{0, 0, 0, 1, 1, 1, kNoise, 0});
  CHECK(cluster_count(labels) == 2);
  const auto singles = dbscan(x.size(), dist, 0.1, 1);
  CHECK(cluster_count(singles) == x.size());
  const auto none = dbscan(x.size(), dist, 0.1, 2);
  CHECK(std::all_of(none.begin(), none.end(), [](int l) { return l == kNoise; }));
  CHECK_THROWS_AS(dbscan(3, dist, 0.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(dbscan(3, dist, 1.0, 0), std::invalid_argument);
}

TEST_CASE("DBSCAN clusters are the connected components of core points") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 40 + rng.below(40);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(0, 100);
    const double eps = rng.uniform(1, 5);
    const std::size_t min_pts = 1 + rng.below(4);
    auto dist = [&](std::size_t a, std::size_t b) { return std::abs(x[a] - x[b]); };
    const auto labels = dbscan(n, dist, eps, min_pts);

    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t c = 0;
      for (std::size_t j = 0; j < n; ++j) c += dist(i, j) <= eps;
      core[i] = c >= min_pts;
    }
    // Union-find over core-core links.
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
      return parent[i] == i ? i : parent[i] = find(parent[i]);
    };
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (core[i] && core[j] && dist(i, j) <= eps) parent[find(i)] = find(j);
    std::set<std::size_t> components;
    for (std::size_t i = 0; i < n; ++i) {
      if (core[i]) components.insert(find(i));
    }
    CHECK(cluster_count(labels) == components.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (core[i] && core[j]) CHECK((labels[i] == labels[j]) == (find(i) == find(j)));
      }
      if (core[i]) continue;
      bool near_core = false, matches = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (core[j] && dist(i, j) <= eps) {
          near_core = true;
          matches = matches || labels[j] == labels[i];
        }
      }
      if (near_core) {
        CHECK(matches);
      } else {
        CHECK(labels[i] == kNoise);
      }
    }
  }
}

TEST_CASE("Spearman correlation") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{10, 20, 30, 40, 50};
  const std::vector<double> r{5, 4, 3, 2, 1};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, r) == doctest::Approx(-1.0));
  CHECK(spearman(a, std::vector<double>{7, 7, 7, 7, 7}) == 0.0);
  CHECK_THROWS_AS(spearman(a, std::vector<double>{1, 2}), std::invalid_argument);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = double(rng.below(8));  // plenty of ties
      y[i] = x[i] + rng.uniform(-4, 4);
    }
    CHECK(spearman(x, y) == doctest::Approx(pearson(count_ranks(x), count_ranks(y))).epsilon(1e-12));
  }
}

TEST_CASE("speedup benchmark rows") {
  Rng rng(5);
  const RoadNetwork net = testing::grid(6, 6, rng);
  std::vector<MatchedTrajectory> trajs;
  for (int i = 0; i < 30; ++i) trajs.push_back(testing::random_walk(net, TrajId(i), 10, rng));
  const EmbeddingTable t = random_table(rng, 30, 4);
  const std::vector<std::size_t> sizes{10, 30};
  const auto rows = speedup_benchmark(trajs, t, net, SimilarityConfig{}, sizes, 2, 5);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.embedding_seconds > 0.0);
    CHECK(r.oracle_seconds > 0.0);
    CHECK(r.oracle_warm_seconds > 0.0);
  }
  CHECK(rows[1].corpus_size == 30);
  std::ostringstream out;
  write_timings(rows, out);
  CHECK(out.str().rfind("corpus_size,embedding_s,oracle_s,oracle_warm_s,speedup\n10,", 0) == 0);
  const std::vector<std::size_t> too_big{31};
  CHECK_THROWS_AS(speedup_benchmark(trajs, t, net, SimilarityConfig{}, too_big), std::invalid_argument);
}
