#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "support.hpp"
#include "trajsim/sampling.hpp"

using namespace trajsim;

namespace {

struct Corpus {
  RoadNetwork net;
  std::vector<MatchedTrajectory> trajs;
};

Corpus corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  RoadNetwork net = testing::grid(5, 6, rng);
  std::vector<MatchedTrajectory> trajs;
  for (std::size_t i = 0; i < n; ++i) {
    trajs.push_back(testing::random_walk(net, TrajId(i * 3 + 1), 3 + rng.below(6), rng, rng.uniform(0, 20000)));
  }
  return {std::move(net), std::move(trajs)};
}

// Matrix with combined distance |x_a - x_b| for scalar positions.
DistanceMatrix line_matrix(const std::vector<double>& x) {
  std::vector<TrajId> ids;
  for (std::size_t i = 0; i < x.size(); ++i) ids.push_back(TrajId(i));
  DistanceMatrix m(ids);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double d = std::abs(x[i] - x[j]);
      m.set(TrajId(i), TrajId(j), {d, d, d});
    }
  return m;
}

}  // namespace

TEST_CASE("ground truth matrix sizes and spot checks") {
  auto c = corpus(10, 1);
  ShortestPathCache cache(c.net);
  SimilarityConfig cfg;
  const auto m = ground_truth_matrix(c.trajs, cfg, c.net, cache);
  std::ostringstream out;
  write_ground_truth(m, out);
  const auto text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 45);

  std::vector<MatchedTrajectory> two(c.trajs.begin(), c.trajs.begin() + 2);
  std::ostringstream out2;
  write_ground_truth(ground_truth_matrix(two, cfg, c.net, cache), out2);
  const auto t2 = out2.str();
  CHECK(std::count(t2.begin(), t2.end(), '\n') == 2);

  Rng rng(3);
  ShortestPathCache fresh(c.net);
  for (int k = 0; k < 5; ++k) {
    const auto& a = c.trajs[rng.below(10)];
    const auto& b = c.trajs[rng.below(10)];
    if (a.id() == b.id()) continue;
    CHECK(m.combined(a.id(), b.id()) == combined_distance(cfg, c.net, fresh, a, b));
  }
}

TEST_CASE("ground truth does not depend on the worker count and round trips") {
  auto c = corpus(25, 2);
  ShortestPathCache c1(c.net), c4(c.net);
  SimilarityConfig cfg;
  const auto m1 = ground_truth_matrix(c.trajs, cfg, c.net, c1, 1);
  const auto m4 = ground_truth_matrix(c.trajs, cfg, c.net, c4, 4);
  std::ostringstream o1, o4;
  write_ground_truth(m1, o1);
  write_ground_truth(m4, o4);
  CHECK(o1.str() == o4.str());
  std::istringstream in(o1.str());
  const auto back = read_ground_truth(in);
  std::ostringstream o2;
  write_ground_truth(back, o2);
  CHECK(o2.str() == o1.str());
  CHECK(back.combined(c.trajs[3].id(), c.trajs[7].id()) == m1.combined(c.trajs[7].id(), c.trajs[3].id()));
}

TEST_CASE("incomplete ground truth file is rejected") {
  std::istringstream in("traj_i,traj_j,d_spatial,d_temporal,d_combined\n1,2,1,1,1\n1,3,1,1,1\n");
  CHECK_THROWS_AS(read_ground_truth(in), InputError);
}

TEST_CASE("N = 1 on four trajectories picks the unique nearest neighbour") {
  const auto m = line_matrix({0.0, 5.0, 1.5, 9.0});
  const std::vector<TrajId> anchors{0};
  const auto ts = select_triplets(m, anchors, 1, 0.1, 1);
  REQUIRE(ts.size() == 1);
  CHECK(ts[0].positive == 2);
  CHECK(ts[0].negative != 0);
  CHECK(ts[0].negative != 2);
}

TEST_CASE("positives equal a full sort of each row; negatives avoid them") {
  auto c = corpus(50, 4);
  ShortestPathCache cache(c.net);
  SimilarityConfig cfg;
  cfg.alpha = 1e-4;
  const auto m = ground_truth_matrix(c.trajs, cfg, c.net, cache);
  const std::size_t n = 5;
  const auto ts = select_triplets(m, m.ids(), n, cfg.alpha, 9);
  REQUIRE(ts.size() == 50 * n);
  for (std::size_t a = 0; a < 50; ++a) {
    const TrajId anchor = m.ids()[a];
    std::vector<std::pair<double, TrajId>> row;
    for (TrajId id : m.ids())
      if (id != anchor) row.push_back({m.combined(anchor, id), id});
    std::sort(row.begin(), row.end());
    std::set<TrajId> top;
    for (std::size_t k = 0; k < n; ++k) top.insert(row[k].second);
    std::set<TrajId> negs;
    for (std::size_t k = 0; k < n; ++k) {
      const Triplet& t = ts[a * n + k];
      CHECK(t.anchor == anchor);
      CHECK(t.positive == row[k].second);
      CHECK(t.hardness_rank == int(k));
      CHECK_FALSE(top.count(t.negative));
      CHECK(t.negative != anchor);
      negs.insert(t.negative);
      CHECK(std::abs(t.d_ap_norm - std::exp(-cfg.alpha * m.combined(anchor, t.positive))) <= 1e-12);
      CHECK(std::abs(t.d_an_norm - std::exp(-cfg.alpha * m.combined(anchor, t.negative))) <= 1e-12);
    }
    CHECK(negs.size() == n);  // without replacement
  }
}

TEST_CASE("ties in the top-N break by ascending id") {
  const auto m = line_matrix({0.0, 1.0, -1.0, 1.0, 5.0, 6.0, 7.0, 8.0});
  const std::vector<TrajId> anchors{0};
  const auto ts = select_triplets(m, anchors, 3, 0.1, 1);
  CHECK(ts[0].positive == 1);
  CHECK(ts[1].positive == 2);
  CHECK(ts[2].positive == 3);
}

TEST_CASE("triplet selection is seed-deterministic and validates N") {
  const auto m = line_matrix({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  const auto a = select_triplets(m, m.ids(), 3, 0.1, 42);
  const auto b = select_triplets(m, m.ids(), 3, 0.1, 42);
  CHECK(a == b);
  std::ostringstream oa, ob;
  write_triplets(a, oa);
  write_triplets(b, ob);
  CHECK(oa.str() == ob.str());
  std::istringstream in(oa.str());
  CHECK(read_triplets(in) == a);
  CHECK_THROWS_AS(select_triplets(m, m.ids(), 0, 0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(select_triplets(m, m.ids(), 6, 0.1, 1), std::invalid_argument);  // 12 <= 2*6+1
  CHECK_NOTHROW(select_triplets(m, m.ids(), 5, 0.1, 1));
}

TEST_CASE("curriculum order") {
  auto make = [](TrajId a, double dap) {
    Triplet t;
    t.anchor = a;
    t.d_ap_norm = dap;
    t.d_an_norm = 0.1;
    return t;
  };
  SUBCASE("sorted ascending within an anchor") {
    const std::vector<Triplet> in{make(1, 0.9), make(1, 0.2), make(1, 0.5)};
    const auto out = curriculum_order(in);
    CHECK(out[0].d_ap_norm == 0.2);
    CHECK(out[1].d_ap_norm == 0.5);
    CHECK(out[2].d_ap_norm == 0.9);
    CHECK(out[2].hardness_rank == 2);
  }
  SUBCASE("ties keep input order") {
    std::vector<Triplet> in{make(1, 0.5), make(1, 0.5), make(1, 0.5)};
    in[0].positive = 10;
    in[1].positive = 11;
    in[2].positive = 12;
    const auto out = curriculum_order(in);
    CHECK(out[0].positive == 10);
    CHECK(out[1].positive == 11);
    CHECK(out[2].positive == 12);
  }
  SUBCASE("anchors interleave round-robin by rank") {
    std::vector<Triplet> in;
    for (TrajId a = 0; a < 5; ++a)
      for (int r = 0; r < 3; ++r) in.push_back(make(a, 0.1 * (3 - r)));
    const auto out = curriculum_order(in);
    REQUIRE(out.size() == 15);
    for (std::size_t i = 0; i < 15; ++i) CHECK(out[i].hardness_rank == int(i / 5));
  }
}

TEST_CASE("dataset split") {
  std::vector<TrajId> ids;
  for (TrajId i = 0; i < 100; ++i) ids.push_back(i);
  SUBCASE("ratios with largest-remainder rounding") {
    auto sizes = [&](std::size_t n) {
      const auto s = split_dataset(std::span<const TrajId>(ids).first(n), 1);
      return std::vector<std::size_t>{s.train.size(), s.validation.size(), s.test.size()};
    };
    CHECK(sizes(10) == std::vector<std::size_t>{3, 1, 6});
    CHECK(sizes(97) == std::vector<std::size_t>{29, 10, 58});
    CHECK(sizes(100) == std::vector<std::size_t>{30, 10, 60});
    CHECK_THROWS_AS(split_dataset(std::span<const TrajId>(ids).first(9), 1), std::invalid_argument);
  }
  SUBCASE("disjoint cover, deterministic, round trip") {
    const auto a = split_dataset(ids, 5);
    const auto b = split_dataset(ids, 5);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    std::set<TrajId> all;
    for (const auto* part : {&a.train, &a.validation, &a.test}) all.insert(part->begin(), part->end());
    CHECK(all.size() == 100);
    std::ostringstream out;
    write_split(a, out);
    std::istringstream in(out.str());
    const auto back = read_split(in);
    CHECK(back.validation == a.validation);
  }
}

TEST_CASE("training-submatrix triplets never touch held-out ids") {
  auto c = corpus(40, 6);
  ShortestPathCache cache(c.net);
  const auto m = ground_truth_matrix(c.trajs, SimilarityConfig{}, c.net, cache);
  const auto split = split_dataset(m.ids(), 3);
  const auto ts = select_triplets(m.subset(split.train), split.train, 2, 1e-4, 3);
  const std::set<TrajId> train(split.train.begin(), split.train.end());
  for (const Triplet& t : ts) {
    CHECK(train.count(t.anchor));
    CHECK(train.count(t.positive));
    CHECK(train.count(t.negative));
  }
}
