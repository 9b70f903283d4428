#include "trajsim/sampling.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "csv_util.hpp"

namespace trajsim {

DistanceMatrix::DistanceMatrix(std::vector<TrajId> ids)
    : ids_(std::move(ids)), cells_(ids_.size() * ids_.size()) {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw std::invalid_argument("duplicate trajectory id " + std::to_string(ids_[i]));
    }
  }
}

std::size_t DistanceMatrix::index_of(TrajId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown trajectory id " + std::to_string(id));
  return it->second;
}

const PairDistance& DistanceMatrix::at(TrajId a, TrajId b) const {
  return cells_[index_of(a) * ids_.size() + index_of(b)];
}

void DistanceMatrix::set(TrajId a, TrajId b, const PairDistance& d) {
  const std::size_t i = index_of(a), j = index_of(b);
  cells_[i * ids_.size() + j] = d;
  cells_[j * ids_.size() + i] = d;
}

DistanceMatrix DistanceMatrix::subset(std::span<const TrajId> ids) const {
  DistanceMatrix out(std::vector<TrajId>(ids.begin(), ids.end()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) out.set(ids[i], ids[j], at(ids[i], ids[j]));
  }
  return out;
}

DistanceMatrix ground_truth_matrix(std::span<const MatchedTrajectory> trajs,
                                   const SimilarityConfig& cfg, const RoadNetwork& net,
                                   ShortestPathCache& cache, unsigned workers) {
  if (trajs.size() < 2) throw std::invalid_argument("ground truth needs at least 2 trajectories");
  cfg.validate();
  std::vector<TrajId> ids;
  for (const auto& t : trajs) ids.push_back(t.id());
  DistanceMatrix m(ids);

  const std::size_t n = trajs.size();
  std::vector<std::vector<PairDistance>> rows(n);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      rows[i].resize(n - i - 1);
      for (std::size_t j = i + 1; j < n; ++j) {
        rows[i][j - i - 1] = pair_distance(cfg, net, cache, trajs[i], trajs[j]);
      }
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) m.set(ids[i], ids[j], rows[i][j - i - 1]);
  }
  return m;
}

void write_ground_truth(const DistanceMatrix& m, std::ostream& out) {
  out << "traj_i,traj_j,d_spatial,d_temporal,d_combined\n";
  std::vector<TrajId> sorted = m.ids();
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      const PairDistance& d = m.at(sorted[i], sorted[j]);
      out << sorted[i] << ',' << sorted[j] << ',' << csv::format_double(d.spatial) << ','
          << csv::format_double(d.temporal) << ',' << csv::format_double(d.combined) << '\n';
    }
  }
}

DistanceMatrix read_ground_truth(std::istream& in) {
  struct Row {
    TrajId i, j;
    PairDistance d;
  };
  std::vector<Row> rows;
  std::set<TrajId> ids;
  csv::for_each_row(in, {"traj_i", "traj_j", "d_spatial", "d_temporal", "d_combined"},
                    [&](const std::vector<std::string_view>& f, std::size_t line) {
                      Row r{csv::parse_int<TrajId>(f[0], line), csv::parse_int<TrajId>(f[1], line),
                            {csv::parse_double(f[2], line), csv::parse_double(f[3], line),
                             csv::parse_double(f[4], line)}};
                      if (r.i >= r.j) throw InputError("rows must satisfy traj_i < traj_j", line);
                      ids.insert(r.i);
                      ids.insert(r.j);
                      rows.push_back(r);
                    });
  const std::size_t n = ids.size();
  if (rows.size() != n * (n - 1) / 2) {
    throw InputError("ground truth is incomplete: " + std::to_string(rows.size()) +
                     " rows for " + std::to_string(n) + " trajectories");
  }
  DistanceMatrix m(std::vector<TrajId>(ids.begin(), ids.end()));
  for (const Row& r : rows) m.set(r.i, r.j, r.d);
  return m;
}

std::vector<Triplet> select_triplets(const DistanceMatrix& matrix,
                                     std::span<const TrajId> anchors, std::size_t n,
                                     double alpha, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("N must be at least 1");
  if (matrix.size() <= 2 * n + 1) {
    throw std::invalid_argument("corpus of " + std::to_string(matrix.size()) +
                                " is too small for N = " + std::to_string(n));
  }
  Rng rng(seed);
  std::vector<Triplet> out;
  out.reserve(anchors.size() * n);
  for (TrajId a : anchors) {
    std::vector<TrajId> others;
    for (TrajId id : matrix.ids()) {
      if (id != a) others.push_back(id);
    }
    std::sort(others.begin(), others.end(), [&](TrajId x, TrajId y) {
      const double dx = matrix.combined(a, x), dy = matrix.combined(a, y);
      return dx != dy ? dx < dy : x < y;
    });
    // others[0, n) are positives; draw negatives from the remainder by a
    // partial Fisher-Yates over the tail.
    std::vector<TrajId> pool(others.begin() + static_cast<std::ptrdiff_t>(n), others.end());
    std::sort(pool.begin(), pool.end());
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t pick = k + rng.below(pool.size() - k);
      std::swap(pool[k], pool[pick]);
    }
    for (std::size_t k = 0; k < n; ++k) {
      Triplet t;
      t.anchor = a;
      t.positive = others[k];
      t.negative = pool[k];
      t.d_ap_norm = normalize_similarity(matrix.combined(a, t.positive), alpha);
      t.d_an_norm = normalize_similarity(matrix.combined(a, t.negative), alpha);
      t.hardness_rank = static_cast<std::int32_t>(k);
      out.push_back(t);
    }
  }
  return out;
}

std::vector<Triplet> curriculum_order(std::span<const Triplet> triplets) {
  std::vector<TrajId> anchor_order;
  std::map<TrajId, std::vector<Triplet>> groups;
  for (const Triplet& t : triplets) {
    auto [it, inserted] = groups.try_emplace(t.anchor);
    if (inserted) anchor_order.push_back(t.anchor);
    it->second.push_back(t);
  }
  std::size_t max_rank = 0;
  for (auto& [a, group] : groups) {
    std::stable_sort(group.begin(), group.end(), [](const Triplet& x, const Triplet& y) {
      return x.d_ap_norm < y.d_ap_norm;
    });
    for (std::size_t r = 0; r < group.size(); ++r) {
      group[r].hardness_rank = static_cast<std::int32_t>(r);
    }
    max_rank = std::max(max_rank, group.size());
  }
  std::vector<Triplet> out;
  out.reserve(triplets.size());
  for (std::size_t r = 0; r < max_rank; ++r) {
    for (TrajId a : anchor_order) {
      const auto& group = groups[a];
      if (r < group.size()) out.push_back(group[r]);
    }
  }
  return out;
}

void write_triplets(std::span<const Triplet> triplets, std::ostream& out) {
  for (const Triplet& t : triplets) {
    nlohmann::json j{{"a", t.anchor},        {"p", t.positive},        {"n", t.negative},
                     {"dap", t.d_ap_norm},   {"dan", t.d_an_norm},     {"rank", t.hardness_rank}};
    out << j.dump() << '\n';
  }
}

std::vector<Triplet> read_triplets(std::istream& in) {
  std::vector<Triplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("a").get<TrajId>(), j.at("p").get<TrajId>(), j.at("n").get<TrajId>(),
                     j.at("dap").get<double>(), j.at("dan").get<double>(),
                     j.at("rank").get<std::int32_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw InputError(e.what(), lineno);
    }
  }
  return out;
}

DatasetSplit split_dataset(std::span<const TrajId> ids, std::uint64_t seed) {
  if (ids.size() < 10) throw std::invalid_argument("split needs at least 10 ids");
  std::vector<TrajId> shuffled(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(std::span<TrajId>(shuffled));

  // Largest-remainder apportionment of 3:1:6; ties favour the earlier part.
  const std::size_t n = shuffled.size();
  const std::size_t weights[3] = {3, 1, 6};
  std::size_t sizes[3];
  std::size_t rem[3];
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    sizes[k] = n * weights[k] / 10;
    rem[k] = n * weights[k] % 10;
    assigned += sizes[k];
  }
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3, [&](int x, int y) { return rem[x] > rem[y]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k]];

  DatasetSplit split;
  auto first = shuffled.begin();
  split.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes[0]));
  first += static_cast<std::ptrdiff_t>(sizes[0]);
  split.validation.assign(first, first + static_cast<std::ptrdiff_t>(sizes[1]));
  first += static_cast<std::ptrdiff_t>(sizes[1]);
  split.test.assign(first, shuffled.end());
  return split;
}

void write_split(const DatasetSplit& split, std::ostream& out) {
  nlohmann::json j{{"train", split.train}, {"validation", split.validation}, {"test", split.test}};
  out << j.dump() << '\n';
}

DatasetSplit read_split(std::istream& in) {
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("train").get<std::vector<TrajId>>(),
            j.at("validation").get<std::vector<TrajId>>(),
            j.at("test").get<std::vector<TrajId>>()};
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("split file: ") + e.what());
  }
}

}  // namespace trajsim
