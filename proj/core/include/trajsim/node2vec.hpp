#pragma once

#include <cstdint>
#include <vector>

#include "trajsim/autodiff.hpp"
#include "trajsim/road_network.hpp"

namespace trajsim {

struct Node2VecConfig {
  std::size_t walks_per_vertex = 10;
  std::size_t walk_length = 20;
  double return_p = 1.0;
  double inout_q = 1.0;
  std::size_t window = 5;
  std::size_t dim = 64;
  std::size_t negatives = 5;
  std::size_t epochs = 1;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

/// Second-order biased random walks over out-arcs. A walk stops early at a
/// vertex without out-arcs.
std::vector<std::vector<VertexId>> node2vec_walks(const RoadNetwork& net,
                                                  const Node2VecConfig& cfg);

/// Skip-gram with negative sampling over the walks. Returns a |L| x dim table.
ad::Tensor train_node2vec(const RoadNetwork& net, const Node2VecConfig& cfg);

}  // namespace trajsim
