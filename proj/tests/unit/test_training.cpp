#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "trajsim/training.hpp"

using namespace trajsim;
using ad::Tensor;

namespace {

struct Setup {
  Rng rng{23};
  RoadNetwork net = testing::grid(5, 5, rng);
  Tensor table = testing::random_tensor(rng, 25, 2);
  std::vector<MatchedTrajectory> trajs;
  DistanceMatrix truth;
  std::vector<Triplet> triplets;
  TrajectoryIndex index;

  Setup() {
    for (int i = 0; i < 24; ++i)
      trajs.push_back(testing::random_walk(net, TrajId(i), 3 + rng.below(4), rng, rng.uniform(0, 40000)));
    ShortestPathCache cache(net);
    SimilarityConfig sim;
    truth = ground_truth_matrix(trajs, sim, net, cache);
    triplets = curriculum_order(select_triplets(truth, truth.ids(), 2, sim.alpha, 5));
    index = index_trajectories(trajs);
  }

  Model model(std::uint64_t seed = 2) const {
    ModelConfig cfg;
    cfg.hidden = 4;
    cfg.location_dim = 2;
    cfg.time_terms = 3;
    cfg.seed = seed;
    return Model(cfg, net, table);
  }
};

TrainConfig quick(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  return cfg;
}

std::string log_text(const TrainLog& log) {
  std::ostringstream out;
  write_train_log(log, out);
  return out.str();
}

}  // namespace

TEST_CASE("config validation and ordering names") {
  CHECK(parse_ordering(to_string(Ordering::Random)) == Ordering::Random);
  CHECK(parse_ordering("curriculum") == Ordering::Curriculum);
  CHECK_THROWS_AS(parse_ordering("sorted"), std::invalid_argument);
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.epochs = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.batch_size = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.learning_rate = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.beta1 = 1.0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.divergence_factor = 1.0; }).validate(), std::invalid_argument);
}

TEST_CASE("Adam matches a loop transcription with bias correction") {
  Rng rng(3);
  ModelParams params;
  params.add("w", testing::random_tensor(rng, 2, 3));
  params.add("b", testing::random_tensor(rng, 4, 0));
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.beta1 = 0.8;
  cfg.beta2 = 0.95;
  AdamState state;

  std::vector<double> p, m, v;
  for (const auto& [n, t] : params.entries())
    for (double x : t.data()) p.push_back(x), m.push_back(0), v.push_back(0);

  for (int step = 1; step <= 6; ++step) {
    ModelParams grads = params.zeros_like();
    std::vector<double> g;
    for (auto& [n, t] : grads.entries())
      for (double& x : t.data()) g.push_back(x = rng.uniform(-2, 2));
    adam_step(params, grads, state, cfg);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = 0.8 * m[i] + 0.2 * g[i];
      v[i] = 0.95 * v[i] + 0.05 * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(0.8, step));
      const double vhat = v[i] / (1 - std::pow(0.95, step));
      p[i] -= 0.05 * mhat / (std::sqrt(vhat) + 1e-8);
    }
    std::size_t k = 0;
    for (const auto& [n, t] : params.entries())
      for (double x : t.data()) CHECK(x == doctest::Approx(p[k++]).epsilon(1e-14));
  }
  CHECK(state.step == 6);
}

TEST_CASE("first Adam step moves each coordinate by the learning rate") {
  ModelParams params;
  params.add("x", Tensor::vector({1.0, -2.0, 0.5}));
  ModelParams grads;
  grads.add("x", Tensor::vector({3.0, -0.01, 0.0}));
  AdamState state;
  TrainConfig cfg;
  adam_step(params, grads, state, cfg);
  CHECK(params.at("x")[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(params.at("x")[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
  CHECK(params.at("x")[2] == 0.5);
}

TEST_CASE("Adam minimizes a quadratic") {
  ModelParams params;
  params.add("x", Tensor::vector({4.0, -3.0}));
  AdamState state;
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  for (int i = 0; i < 2000; ++i) {
    ModelParams g = params.zeros_like();
    for (std::size_t k = 0; k < 2; ++k) g.at("x")[k] = 2 * (params.at("x")[k] - double(k + 1));
    adam_step(params, g, state, cfg);
  }
  CHECK(params.at("x")[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(params.at("x")[1] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("non-finite gradients are reported and leave parameters untouched") {
  ModelParams params;
  params.add("a", Tensor::vector({1.0, 2.0}));
  params.add("b", Tensor::vector(std::vector<double>{3.0}));
  ModelParams grads = params.zeros_like();
  grads.at("b")[0] = std::nan("");
  AdamState state;
  const ModelParams before = params;
  try {
    adam_step(params, grads, state, TrainConfig{});
    FAIL("expected NonFiniteGradient");
  } catch (const NonFiniteGradient& e) {
    CHECK(std::string(e.what()).find("b(1 non-finite)") != std::string::npos);
  }
  CHECK(params.at("a") == before.at("a"));
  CHECK(params.at("b") == before.at("b"));
  CHECK(state.step == 0);

  ModelParams stray;
  stray.add("c", Tensor::vector(std::vector<double>{1.0}));
  CHECK_THROWS_AS(adam_step(params, stray, state, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("batch loss is the mean of per-triplet losses") {
  const Setup s;
  const Model model = s.model();
  const std::span<const Triplet> all(s.triplets);
  const auto batch = all.first(5);
  double sum = 0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    sum += batch_loss_and_gradient(model, batch.subspan(i, 1), s.index, nullptr);
  CHECK(batch_loss_and_gradient(model, batch, s.index, nullptr) == doctest::Approx(sum / 5).epsilon(1e-13));

  Triplet ghost = s.triplets[0];
  ghost.negative = 999;
  CHECK_THROWS_AS(batch_loss_and_gradient(model, std::span<const Triplet>(&ghost, 1), s.index, nullptr),
                  std::out_of_range);
  CHECK_THROWS_AS(batch_loss_and_gradient(model, {}, s.index, nullptr), std::invalid_argument);
}

TEST_CASE("training lowers the loss and is deterministic") {
  const Setup s;
  Model a = s.model(), b = s.model();
  const auto la = train(a, s.triplets, s.index, quick(8));
  const auto lb = train(b, s.triplets, s.index, quick(8));
  REQUIRE(la.epochs.size() == 8);
  CHECK(la.epochs.back().loss < la.epochs.front().loss);
  CHECK(log_text(la) == log_text(lb));
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params().entries()[i].second == b.params().entries()[i].second);
  for (const auto& e : la.epochs) CHECK(e.seconds == 0.0);
  CHECK(log_text(la).rfind("epoch,loss,hr10,hr50,r10at50,seconds\n1,", 0) == 0);
}

TEST_CASE("random ordering depends only on the seed") {
  const Setup s;
  TrainConfig cfg = quick(3);
  cfg.ordering = Ordering::Random;
  Model a = s.model(), b = s.model(), c = s.model();
  const auto la = train(a, s.triplets, s.index, cfg);
  const auto lb = train(b, s.triplets, s.index, cfg);
  cfg.seed = 99;
  const auto lc = train(c, s.triplets, s.index, cfg);
  CHECK(log_text(la) == log_text(lb));
  CHECK(log_text(la) != log_text(lc));
}

TEST_CASE("validation keeps the best epoch's parameters") {
  const Setup s;
  const auto split = split_dataset(s.truth.ids(), 4);
  std::vector<TrajId> val = split.validation;
  val.insert(val.end(), split.test.begin(), split.test.end());
  const DistanceMatrix sub = s.truth.subset(val);
  const ValidationSet vs{val, &sub};
  TrainConfig cfg = quick(6);
  cfg.patience = 0;
  Model m = s.model();
  const auto log = train(m, s.triplets, s.index, cfg, &vs);
  REQUIRE(log.epochs.size() == 6);
  CHECK_FALSE(log.early_stopped);
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& e : log.epochs) {
    CHECK(e.hr10 >= 0.0);
    CHECK(e.hr10 <= 1.0);
    if (e.hr10 > best) best = e.hr10, best_epoch = e.epoch;
  }
  CHECK(log.best_epoch == best_epoch);

  // Validation only observes, so a run cut at the best epoch reproduces the kept parameters.
  Model replay = s.model();
  train(replay, s.triplets, s.index, quick(log.best_epoch));
  for (std::size_t i = 0; i < m.params().size(); ++i)
    CHECK(m.params().entries()[i].second == replay.params().entries()[i].second);
}

TEST_CASE("early stopping after `patience` epochs without improvement") {
  const Setup s;
  const auto split = split_dataset(s.truth.ids(), 4);
  const DistanceMatrix sub = s.truth.subset(split.test);
  const ValidationSet vs{split.test, &sub};
  TrainConfig cfg = quick(40);
  cfg.patience = 2;
  Model m = s.model();
  const auto log = train(m, s.triplets, s.index, cfg, &vs);
  if (log.early_stopped) {
    CHECK(log.epochs.size() == log.best_epoch + 2);
  } else {
    CHECK(log.epochs.size() == 40);
  }
  for (std::size_t i = log.best_epoch; i < log.epochs.size(); ++i)
    CHECK(log.epochs[i].hr10 <= log.epochs[log.best_epoch - 1].hr10);
}

TEST_CASE("training rejects bad corpora and flags divergence") {
  const Setup s;
  Model m = s.model();
  CHECK_THROWS_AS(train(m, {}, s.index, quick(1)), std::invalid_argument);
  TrainConfig big = quick(1);
  big.batch_size = s.triplets.size() + 1;
  CHECK_THROWS_AS(train(m, s.triplets, s.index, big), std::invalid_argument);

  // Easiest triplets first, then a huge step size: later epochs overshoot.
  TrainConfig wild = quick(20);
  wild.learning_rate = 5.0;
  wild.divergence_factor = 1.01;
  Model w = s.model();
  CHECK_THROWS_AS(train(w, s.triplets, s.index, wild), TrainingDiverged);
}
