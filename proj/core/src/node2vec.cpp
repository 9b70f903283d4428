#include "trajsim/node2vec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "trajsim/rng.hpp"

namespace trajsim {

namespace {

bool has_arc(const RoadNetwork& net, VertexId u, VertexId v) {
  const auto arcs = net.out_arcs(u);
  return std::any_of(arcs.begin(), arcs.end(), [&](const Arc& a) { return a.dst == v; });
}

// Draws from unnormalized weights.
std::size_t draw(Rng& rng, const std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) total += x;
  double r = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    r -= w[i];
    if (r < 0.0) return i;
  }
  return w.size() - 1;
}

double sigmoid(double x) {
  if (x > 30.0) return 1.0;
  if (x < -30.0) return 0.0;
  return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

std::vector<std::vector<VertexId>> node2vec_walks(const RoadNetwork& net,
                                                  const Node2VecConfig& cfg) {
  if (!(cfg.return_p > 0.0) || !(cfg.inout_q > 0.0)) {
    throw std::invalid_argument("node2vec p and q must be > 0");
  }
  Rng rng(cfg.seed);
  std::vector<std::vector<VertexId>> walks;
  std::vector<VertexId> starts(net.num_vertices());
  for (std::size_t v = 0; v < starts.size(); ++v) starts[v] = static_cast<VertexId>(v);
  std::vector<double> weights;
  for (std::size_t rep = 0; rep < cfg.walks_per_vertex; ++rep) {
    rng.shuffle(std::span<VertexId>(starts));
    for (VertexId s : starts) {
      std::vector<VertexId> walk{s};
      while (walk.size() < cfg.walk_length) {
        const VertexId cur = walk.back();
        const auto arcs = net.out_arcs(cur);
        if (arcs.empty()) break;
        weights.assign(arcs.size(), 1.0);
        if (walk.size() > 1) {
          const VertexId prev = walk[walk.size() - 2];
          for (std::size_t i = 0; i < arcs.size(); ++i) {
            if (arcs[i].dst == prev) {
              weights[i] = 1.0 / cfg.return_p;
            } else if (!has_arc(net, prev, arcs[i].dst)) {
              weights[i] = 1.0 / cfg.inout_q;
            }
          }
        }
        walk.push_back(arcs[draw(rng, weights)].dst);
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

ad::Tensor train_node2vec(const RoadNetwork& net, const Node2VecConfig& cfg) {
  const std::size_t n = net.num_vertices();
  const std::size_t d = cfg.dim;
  if (n == 0 || d == 0) throw std::invalid_argument("node2vec needs vertices and dim > 0");
  const auto walks = node2vec_walks(net, cfg);

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  ad::Tensor in = ad::Tensor::matrix(n, d);
  for (double& x : in.data()) x = (rng.uniform() - 0.5) / static_cast<double>(d);
  std::vector<double> out(n * d, 0.0);

  // Unigram^0.75 noise distribution over walk occurrences.
  std::vector<double> freq(n, 0.0);
  for (const auto& w : walks)
    for (VertexId v : w) freq[v] += 1.0;
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t v = 0; v < n; ++v) cdf[v] = (acc += std::pow(freq[v], 0.75));
  auto noise = [&]() {
    const double r = rng.uniform() * acc;
    return static_cast<VertexId>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
  };

  std::size_t total_pairs = 0;
  for (const auto& w : walks) total_pairs += w.size();
  total_pairs *= cfg.epochs;
  std::size_t seen = 0;
  std::vector<double> grad_in(d);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& walk : walks) {
      for (std::size_t i = 0; i < walk.size(); ++i, ++seen) {
        const double lr = std::max(cfg.learning_rate * 1e-4,
                                   cfg.learning_rate * (1.0 - static_cast<double>(seen) /
                                                                  static_cast<double>(total_pairs)));
        const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
        const std::size_t hi = std::min(walk.size() - 1, i + cfg.window);
        double* center = &in(static_cast<std::size_t>(walk[i]), 0);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          for (std::size_t k = 0; k <= cfg.negatives; ++k) {
            VertexId target;
            double label;
            if (k == 0) {
              target = walk[j];
              label = 1.0;
            } else {
              target = noise();
              if (target == walk[j]) continue;
              label = 0.0;
            }
            double* ctx = &out[static_cast<std::size_t>(target) * d];
            double dotp = 0.0;
            for (std::size_t c = 0; c < d; ++c) dotp += center[c] * ctx[c];
            const double g = lr * (label - sigmoid(dotp));
            for (std::size_t c = 0; c < d; ++c) {
              grad_in[c] += g * ctx[c];
              ctx[c] += g * center[c];
            }
          }
          for (std::size_t c = 0; c < d; ++c) center[c] += grad_in[c];
        }
      }
    }
  }
  return in;
}

}  // namespace trajsim
