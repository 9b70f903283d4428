#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trajsim/autodiff.hpp"
#include "trajsim/road_network.hpp"

namespace trajsim {

/// SF sums two independently encoded branches; UF co-attends the step
/// embeddings and encodes them with a single LSTM.
enum class FusionMode { SF, UF };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion(std::string_view name);

struct ModelConfig {
  /// LSTM hidden units; also the embedding dimension.
  std::size_t hidden = 128;
  /// Number of periodic time2vec terms; the time embedding has width q + 1.
  std::size_t time_terms = 127;
  /// Node2Vec dimension; the GCN step embedding has width 2 * location_dim.
  std::size_t location_dim = 64;
  FusionMode fusion = FusionMode::UF;
  /// false: att = alpha / sum(exp(alpha)) as written; true: plain softmax.
  bool attention_softmax = false;
  /// time2vec sees (t - time_origin) / time_scale.
  double time_origin = 0.0;
  double time_scale = 3600.0;
  std::uint64_t seed = 1;

  std::size_t time_width() const { return time_terms + 1; }
  std::size_t location_width() const { return 2 * location_dim; }
  /// Throws std::invalid_argument; UF needs equal time and location widths.
  void validate() const;
};

/// Named learnable tensors in registration order.
class ModelParams {
 public:
  void add(std::string name, ad::Tensor value);
  bool contains(std::string_view name) const;
  ad::Tensor& at(std::string_view name);
  const ad::Tensor& at(std::string_view name) const;

  std::vector<std::pair<std::string, ad::Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, ad::Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool all_finite() const;
  /// Same names with zero-filled tensors.
  ModelParams zeros_like() const;

 private:
  std::vector<std::pair<std::string, ad::Tensor>> entries_;
};

/// Fresh parameters for `cfg`: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// weights, uniform(0, 1) time2vec frequencies and phases, forget-gate bias 1.
ModelParams init_params(const ModelConfig& cfg);

/// Parameters registered on one tape.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ModelParams& params, bool trainable = true);
  ad::Var operator[](std::string_view name) const;
  /// After tape.backward(): adds each parameter's gradient into `out`.
  void accumulate_gradients(const ad::Tape& tape, ModelParams& out) const;

 private:
  std::vector<std::pair<std::string, ad::Var>> vars_;
};

struct LstmVars {
  ad::Var wx;  // in x 4h, gate blocks ordered input, forget, output, candidate
  ad::Var wh;  // 4h x h
  ad::Var b;   // 4h
};

struct AttentionVars {
  ad::Var w1;  // h
  ad::Var W1;  // h x h, applied to the attended state h_k
  ad::Var W2;  // h x h, applied to the query state h_i
};

struct FusionVars {
  ad::Var wf, wq, wk;      // w x w
  ad::Var ffn_w1, ffn_b1;  // hidden x w, hidden
  ad::Var ffn_w2, ffn_b2;  // w x hidden, w
  ad::Var ln_gain, ln_bias;
};

LstmVars lstm_vars(const BoundParams& p, std::string_view prefix);
AttentionVars attention_vars(const BoundParams& p, std::string_view prefix);
FusionVars fusion_vars(const BoundParams& p);

/// (omega_0 t + phi_0, cos(omega_i t + phi_i) for i = 1..q).
ad::Var time2vec(ad::Tape& tape, ad::Var omega, ad::Var phi, double t);

/// Per-vertex mean of out-neighbor rows of `table` (zero for vertices
/// without out-arcs).
ad::Tensor neighbor_means(const RoadNetwork& net, const ad::Tensor& table);

/// relu(Ws * mean_{j in N(v)} n_j) || n_v.
ad::Var gcn_embed(ad::Tape& tape, const ad::Tensor& means, const ad::Tensor& table, ad::Var ws,
                  VertexId v);

/// Zero-initialized LSTM over `seq`; returns every hidden state.
std::vector<ad::Var> lstm_encode(ad::Tape& tape, const LstmVars& lstm,
                                 std::span<const ad::Var> seq);

struct AttentionOutput {
  ad::Var state;
  std::vector<ad::Var> weights;  // att(h_i, h_k) for k = 1..i
};

/// Causal attention for query step i (0-based) over states 0..i.
AttentionOutput attend(ad::Tape& tape, const AttentionVars& att, std::span<const ad::Var> hs,
                       std::size_t i, bool softmax);

/// Attended states for every step.
std::vector<ad::Var> decoupled_attention(ad::Tape& tape, const AttentionVars& att,
                                         std::span<const ad::Var> hs, bool softmax);

struct CoAttentionStep {
  ad::Var temporal;
  ad::Var spatial;
  double beta[2][2];
};

/// One step of the co-attention fusion for a (time, location) pair of
/// equal-width step embeddings.
CoAttentionStep co_attention_step(ad::Tape& tape, const FusionVars& f, ad::Var tau_t,
                                  ad::Var tau_s);

/// Whole-sequence fusion; throws std::invalid_argument on length mismatch.
std::pair<std::vector<ad::Var>, std::vector<ad::Var>> co_attention_fuse(
    ad::Tape& tape, const FusionVars& f, std::span<const ad::Var> tau_t,
    std::span<const ad::Var> tau_s);

/// exp(-||a - b||_2) on tape, with a 1e-12 floor inside the norm.
ad::Var embedding_similarity(ad::Tape& tape, ad::Var a, ad::Var b);
double embedding_similarity(std::span<const double> a, std::span<const double> b);

/// dap (dap - G(a, p))^2 + dan (dan - G(a, n))^2. Targets must lie in (0, 1].
ad::Var triplet_loss(ad::Tape& tape, ad::Var va, ad::Var vp, ad::Var vn, double d_ap_norm,
                     double d_an_norm);

/// Trajectory encoder: config, learnable parameters and the frozen
/// Node2Vec table for one road network.
class Model {
 public:
  Model(ModelConfig cfg, const RoadNetwork& net, ad::Tensor node2vec_table, ModelParams params);
  /// Fresh parameters from cfg.seed.
  Model(ModelConfig cfg, const RoadNetwork& net, ad::Tensor node2vec_table);

  const ModelConfig& config() const { return cfg_; }
  const RoadNetwork& network() const { return *net_; }
  const ad::Tensor& node2vec_table() const { return table_; }
  const ad::Tensor& neighbor_means() const { return means_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// Forward pass on a private tape.
  std::vector<double> embed(const MatchedTrajectory& traj) const;

 private:
  ModelConfig cfg_;
  const RoadNetwork* net_;
  ad::Tensor table_;
  ad::Tensor means_;
  ModelParams params_;
};

/// Embeds trajectories on a shared tape, reusing per-vertex GCN outputs.
class TapeEncoder {
 public:
  TapeEncoder(ad::Tape& tape, const Model& model, const BoundParams& params);

  ad::Var embed(const MatchedTrajectory& traj);
  ad::Var location(VertexId v);
  ad::Var time(double t);

 private:
  ad::Tape* tape_;
  const Model* model_;
  const BoundParams* params_;
  std::unordered_map<VertexId, ad::Var> locations_;
};

/// Checkpoint: one JSON document with the config, seed, every named tensor
/// (shape plus row-major data) and the Node2Vec table. Doubles are written in
/// shortest round-trip form, so load(save(m)) is bit-exact.
void save_checkpoint(const Model& model, std::ostream& out);
Model load_checkpoint(std::istream& in, const RoadNetwork& net);

}  // namespace trajsim
