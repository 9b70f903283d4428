#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trajsim/evaluation.hpp"
#include "trajsim/model.hpp"
#include "trajsim/sampling.hpp"

namespace trajsim {

enum class Ordering { Curriculum, Random };

std::string_view to_string(Ordering o);
Ordering parse_ordering(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Ordering ordering = Ordering::Curriculum;
  std::uint64_t seed = 1;
  /// Epochs without a validation HR@10 improvement before stopping; 0 disables.
  std::size_t patience = 10;
  /// Abort when an epoch's loss exceeds this multiple of the first epoch's.
  double divergence_factor = 10.0;
  /// Fill the TrainLog `seconds` column; off keeps logs byte-reproducible.
  bool record_wall_clock = false;

  void validate() const;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::int64_t step = 0;
};

/// Thrown by adam_step when a gradient holds NaN or infinity; what()
/// names the offending tensors.
class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected Adam update. Parameters are untouched if any gradient
/// is non-finite.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double hr10 = 0.0;
  double hr50 = 0.0;
  double r10at50 = 0.0;
  double seconds = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

/// `epoch,loss,hr10,hr50,r10at50,seconds`.
void write_train_log(const TrainLog& log, std::ostream& out);

using TrajectoryIndex = std::unordered_map<TrajId, const MatchedTrajectory*>;
TrajectoryIndex index_trajectories(std::span<const MatchedTrajectory> trajs);

struct ValidationSet {
  std::vector<TrajId> ids;
  const DistanceMatrix* truth = nullptr;
};

/// Mean triplet loss of one batch and its gradient, on a fresh tape.
double batch_loss_and_gradient(const Model& model, std::span<const Triplet> batch,
                               const TrajectoryIndex& trajs, ModelParams* grads);

/// Runs the epoch loop over `corpus` (already in curriculum order when
/// cfg.ordering is Curriculum). With a validation set, the model ends up
/// holding the parameters of the best validation HR@10 epoch.
TrainLog train(Model& model, std::span<const Triplet> corpus, const TrajectoryIndex& trajs,
               const TrainConfig& cfg, const ValidationSet* validation = nullptr);

}  // namespace trajsim
