#include "trajsim/training.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>

#include "csv_util.hpp"
#include "trajsim/rng.hpp"

namespace trajsim {

std::string_view to_string(Ordering o) { return o == Ordering::Curriculum ? "curriculum" : "random"; }

Ordering parse_ordering(std::string_view name) {
  if (name == "curriculum") return Ordering::Curriculum;
  if (name == "random") return Ordering::Random;
  throw std::invalid_argument("unknown ordering '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("epochs and batch_size must be > 0");
  if (!(learning_rate > 0.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("learning_rate and epsilon must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(divergence_factor > 1.0)) throw std::invalid_argument("divergence_factor must be > 1");
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg) {
  std::string bad;
  for (const auto& [name, g] : grads.entries()) {
    if (!params.contains(name) || !params.at(name).same_shape(g)) {
      throw std::invalid_argument("gradient " + name + " does not match any parameter");
    }
    if (!g.all_finite()) {
      std::size_t count = 0;
      for (double x : g.data()) count += std::isfinite(x) ? 0 : 1;
      bad += " " + name + "(" + std::to_string(count) + " non-finite)";
    }
  }
  if (!bad.empty()) {
    throw NonFiniteGradient("non-finite gradient at step " + std::to_string(state.step + 1) + ":" + bad);
  }
  if (state.m.size() == 0) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, g] : grads.entries()) {
    ad::Tensor& p = params.at(name);
    ad::Tensor& m = state.m.at(name);
    ad::Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

void write_train_log(const TrainLog& log, std::ostream& out) {
  out << "epoch,loss,hr10,hr50,r10at50,seconds\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << csv::format_double(e.loss) << ',' << csv::format_double(e.hr10) << ','
        << csv::format_double(e.hr50) << ',' << csv::format_double(e.r10at50) << ','
        << csv::format_double(e.seconds) << '\n';
  }
}

TrajectoryIndex index_trajectories(std::span<const MatchedTrajectory> trajs) {
  TrajectoryIndex idx;
  for (const auto& t : trajs) idx[t.id()] = &t;
  return idx;
}

double batch_loss_and_gradient(const Model& model, std::span<const Triplet> batch,
                               const TrajectoryIndex& trajs, ModelParams* grads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  ad::Tape tape;
  BoundParams bound(tape, model.params(), grads != nullptr);
  TapeEncoder enc(tape, model, bound);
  std::unordered_map<TrajId, ad::Var> cache;
  auto embed = [&](TrajId id) {
    const auto hit = cache.find(id);
    if (hit != cache.end()) return hit->second;
    const auto it = trajs.find(id);
    if (it == trajs.end()) throw std::out_of_range("triplet references unknown trajectory " + std::to_string(id));
    const ad::Var v = enc.embed(*it->second);
    cache.emplace(id, v);
    return v;
  };
  ad::Var total{};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Triplet& t = batch[i];
    const ad::Var va = embed(t.anchor);
    const ad::Var vp = embed(t.positive);
    const ad::Var vn = embed(t.negative);
    const ad::Var l = triplet_loss(tape, va, vp, vn, t.d_ap_norm, t.d_an_norm);
    total = i == 0 ? l : tape.add(total, l);
  }
  const ad::Var mean = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  const double loss = tape.value(mean).item();
  if (grads) {
    tape.backward(mean);
    bound.accumulate_gradients(tape, *grads);
  }
  return loss;
}

TrainLog train(Model& model, std::span<const Triplet> corpus, const TrajectoryIndex& trajs,
               const TrainConfig& cfg, const ValidationSet* validation) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("empty training corpus");
  if (cfg.batch_size > corpus.size()) {
    throw std::invalid_argument("batch_size exceeds corpus size");
  }
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();

  std::vector<Triplet> order(corpus.begin(), corpus.end());
  Rng rng(cfg.seed);
  AdamState adam;
  TrainLog log;
  double first_loss = 0.0;
  double best_hr10 = -1.0;
  ModelParams best = model.params();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.ordering == Ordering::Random) rng.shuffle(std::span<Triplet>(order));
    double loss_sum = 0.0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const auto batch = std::span<const Triplet>(order).subspan(
          at, std::min(cfg.batch_size, order.size() - at));
      ModelParams grads = model.params().zeros_like();
      const double loss = batch_loss_and_gradient(model, batch, trajs, &grads);
      loss_sum += loss * static_cast<double>(batch.size());
      adam_step(model.params(), grads, adam, cfg);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(order.size());
    if (epoch == 1) first_loss = rec.loss;
    if (validation && validation->truth && validation->ids.size() >= 2) {
      std::vector<MatchedTrajectory> val;
      for (TrajId id : validation->ids) val.push_back(*trajs.at(id));
      const auto report = evaluate_retrieval(embed_corpus(val, model), *validation->truth,
                                             validation->ids);
      rec.hr10 = report.hr10;
      rec.hr50 = report.hr50;
      rec.r10at50 = report.r10at50;
    }
    if (cfg.record_wall_clock) rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    log.epochs.push_back(rec);

    if (rec.loss > cfg.divergence_factor * first_loss) {
      throw TrainingDiverged("epoch " + std::to_string(epoch) + " loss " + std::to_string(rec.loss) +
                             " exceeds " + std::to_string(cfg.divergence_factor) +
                             "x the first epoch's " + std::to_string(first_loss));
    }
    if (!validation) {
      log.best_epoch = epoch;
      continue;
    }
    if (rec.hr10 > best_hr10) {
      best_hr10 = rec.hr10;
      best = model.params();
      log.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      log.early_stopped = true;
      break;
    }
  }
  if (validation) model.params() = std::move(best);
  return log;
}

}  // namespace trajsim
