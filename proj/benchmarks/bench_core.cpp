#include <benchmark/benchmark.h>

#include "trajsim/evaluation.hpp"
#include "trajsim/synthetic.hpp"

using namespace trajsim;

namespace {

const SyntheticCorpus& corpus() {
  static const SyntheticCorpus c = [] {
    SyntheticConfig cfg;
    cfg.trajectories = 1000;
    return generate_synthetic(cfg);
  }();
  return c;
}

void BM_DijkstraRow(benchmark::State& state) {
  const auto& net = corpus().network;
  ShortestPathCache cache(net);
  VertexId v = 0;
  for (auto _ : state) {
    cache.clear();
    benchmark::DoNotOptimize(cache.row(v));
    v = VertexId((v + 37) % net.num_vertices());
  }
}
BENCHMARK(BM_DijkstraRow);

void BM_PairDistance(benchmark::State& state) {
  const auto& c = corpus();
  SimilarityConfig cfg;
  cfg.kind = MeasureKind(state.range(0));
  ShortestPathCache cache(c.network);
  for (VertexId v = 0; v < c.network.num_vertices(); ++v) cache.row(v);  // warm
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& a = c.trajectories[i % 1000];
    const auto& b = c.trajectories[(i * 7 + 1) % 1000];
    benchmark::DoNotOptimize(combined_distance(cfg, c.network, cache, a, b));
    ++i;
  }
  state.SetLabel(std::string(to_string(cfg.kind)));
}
BENCHMARK(BM_PairDistance)->DenseRange(0, 3);

void BM_TopK(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  Rng rng(1);
  EmbeddingTable table(128);
  std::vector<double> v(128);
  for (std::size_t id = 0; id < n; ++id) {
    for (double& x : v) x = rng.normal();
    table.add(TrajId(id), v);
  }
  TrajId q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(topk_query(table, q, 50));
    q = TrajId((q + 1) % n);
  }
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
