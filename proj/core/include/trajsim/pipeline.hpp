#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "trajsim/distance_oracles.hpp"
#include "trajsim/model.hpp"
#include "trajsim/node2vec.hpp"
#include "trajsim/synthetic.hpp"
#include "trajsim/training.hpp"

namespace trajsim {

/// Everything a pipeline command needs. Built from a JSON document plus
/// dotted-key overrides, see parse_config.
struct PipelineConfig {
  std::filesystem::path workdir = "trajsim-work";
  // Inputs; empty means the file gen-synthetic writes into the workdir.
  std::filesystem::path vertices;
  std::filesystem::path edges;
  std::filesystem::path trajectories;

  std::uint64_t seed = 7;
  std::size_t workers = 1;

  SyntheticConfig synthetic;
  bool raw_gps = false;  // gen-synthetic also writes jittered GPS points
  SimilarityConfig similarity;
  ModelConfig model;
  Node2VecConfig node2vec;
  std::size_t triplets_per_anchor = 10;
  TrainConfig train;

  // query / cluster / bench
  std::optional<TrajId> query_id;
  std::size_t k = 50;
  std::size_t min_pts = 10;
  std::vector<double> eps_quantiles = {0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3};
  std::vector<std::size_t> bench_sizes = {100, 200, 500, 1000};
  std::size_t bench_queries = 5;

  std::filesystem::path vertices_path() const;
  std::filesystem::path edges_path() const;
  std::filesystem::path trajectories_path() const;
  std::filesystem::path artifact(const std::string& name) const { return workdir / name; }
};

/// Parses a JSON config document (empty text means all defaults) and applies
/// overrides given as ("section.key", value) pairs. Values are read as JSON
/// when they parse as JSON and as plain strings otherwise.
PipelineConfig parse_config(const std::string& json_text,
                            const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Canonical JSON of the resolved config; hashed into every manifest.
std::string config_json(const PipelineConfig& cfg);

/// Hex SHA-256 of a file's bytes or of a string.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

/// A failed command. `kind` and `stage` are single tokens; what() is the
/// human-readable reason.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string kind, std::string stage, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)), stage_(std::move(stage)) {}
  const std::string& kind() const { return kind_; }
  const std::string& stage() const { return stage_; }

 private:
  std::string kind_;
  std::string stage_;
};

/// Single-line `error kind=... stage=... message="..."` rendering.
std::string format_error(const PipelineError& e);

// Stage artifact names inside the workdir.
namespace artifacts {
inline constexpr const char* kVertices = "vertices.csv";
inline constexpr const char* kEdges = "edges.csv";
inline constexpr const char* kTrajectories = "trajectories.jsonl";
inline constexpr const char* kRawTrajectories = "raw_trajectories.jsonl";
inline constexpr const char* kGroundTruth = "ground_truth.csv";
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kTriplets = "triplets.jsonl";
inline constexpr const char* kCheckpoint = "model.json";
inline constexpr const char* kTrainLog = "train_log.csv";
inline constexpr const char* kEmbeddings = "embeddings.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kClusters = "clusters.csv";
inline constexpr const char* kTimings = "timings.csv";
}  // namespace artifacts

// Commands. Each reads its upstream artifacts, writes its outputs plus
// `<command>.manifest.json`, and reports progress on `out`.
void run_gen_synthetic(const PipelineConfig& cfg, std::ostream& out);
void run_ground_truth(const PipelineConfig& cfg, std::ostream& out);
void run_triplets(const PipelineConfig& cfg, std::ostream& out);
void run_train(const PipelineConfig& cfg, std::ostream& out);
void run_evaluate(const PipelineConfig& cfg, std::ostream& out);
void run_query(const PipelineConfig& cfg, std::ostream& out);
void run_cluster(const PipelineConfig& cfg, std::ostream& out);
void run_bench(const PipelineConfig& cfg, std::ostream& out);

/// Dispatches by command name; throws PipelineError for unknown names.
void run_command(const std::string& command, const PipelineConfig& cfg, std::ostream& out);

const std::vector<std::string>& command_names();

}  // namespace trajsim
