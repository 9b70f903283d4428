#include "trajsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "trajsim/rng.hpp"

namespace trajsim {

using ad::Tape;
using ad::Tensor;
using ad::Var;

std::string_view to_string(FusionMode mode) { return mode == FusionMode::SF ? "SF" : "UF"; }

FusionMode parse_fusion(std::string_view name) {
  if (name == "SF") return FusionMode::SF;
  if (name == "UF") return FusionMode::UF;
  throw std::invalid_argument("unknown fusion mode '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (hidden == 0 || location_dim == 0) throw std::invalid_argument("model widths must be > 0");
  if (!(time_scale > 0.0)) throw std::invalid_argument("time_scale must be > 0");
  if (fusion == FusionMode::UF && time_width() != location_width()) {
    throw std::invalid_argument("UF fusion needs time_terms + 1 == 2 * location_dim (" +
                                std::to_string(time_width()) + " vs " +
                                std::to_string(location_width()) + ")");
  }
}

// ---------------------------------------------------------------------------
// ModelParams

void ModelParams::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ModelParams::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

Tensor& ModelParams::at(std::string_view name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Tensor& ModelParams::at(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("no parameter named " + std::string(name));
}

bool ModelParams::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const auto& e) { return e.second.all_finite(); });
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  for (const auto& [n, t] : entries_) out.add(n, Tensor::zeros_like(t));
  return out;
}

namespace {

Tensor uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::matrix(rows, cols);
  for (double& x : t.data()) x = rng.uniform(-bound, bound);
  return t;
}

Tensor uniform_vector(Rng& rng, std::size_t n, double lo, double hi) {
  Tensor t = Tensor::vector(n);
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

void add_lstm(ModelParams& p, Rng& rng, const std::string& prefix, std::size_t in,
              std::size_t h) {
  p.add(prefix + ".wx", uniform_matrix(rng, in, 4 * h, in));
  p.add(prefix + ".wh", uniform_matrix(rng, 4 * h, h, h));
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  Tensor b = uniform_vector(rng, 4 * h, -bound, bound);
  for (std::size_t i = h; i < 2 * h; ++i) b[i] = 1.0;
  p.add(prefix + ".b", std::move(b));
}

void add_attention(ModelParams& p, Rng& rng, const std::string& prefix, std::size_t h) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  p.add(prefix + ".w1", uniform_vector(rng, h, -bound, bound));
  p.add(prefix + ".W1", uniform_matrix(rng, h, h, h));
  p.add(prefix + ".W2", uniform_matrix(rng, h, h, h));
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ModelParams p;
  const std::size_t h = cfg.hidden;
  const std::size_t tw = cfg.time_width();
  const std::size_t lw = cfg.location_width();
  p.add("t2v.omega", uniform_vector(rng, tw, 0.0, 1.0));
  p.add("t2v.phi", uniform_vector(rng, tw, 0.0, 1.0));
  p.add("gcn.ws", uniform_matrix(rng, cfg.location_dim, cfg.location_dim, cfg.location_dim));
  if (cfg.fusion == FusionMode::SF) {
    add_lstm(p, rng, "lstm_t", tw, h);
    add_attention(p, rng, "att_t", h);
    add_lstm(p, rng, "lstm_s", lw, h);
    add_attention(p, rng, "att_s", h);
  } else {
    const std::size_t w = tw;
    p.add("fuse.wf", uniform_matrix(rng, w, w, w));
    p.add("fuse.wq", uniform_matrix(rng, w, w, w));
    p.add("fuse.wk", uniform_matrix(rng, w, w, w));
    p.add("fuse.ffn_w1", uniform_matrix(rng, h, w, w));
    p.add("fuse.ffn_b1", uniform_vector(rng, h, -1.0 / std::sqrt(double(w)), 1.0 / std::sqrt(double(w))));
    p.add("fuse.ffn_w2", uniform_matrix(rng, w, h, h));
    p.add("fuse.ffn_b2", uniform_vector(rng, w, -1.0 / std::sqrt(double(h)), 1.0 / std::sqrt(double(h))));
    p.add("fuse.ln_gain", Tensor::vector(w, 1.0));
    p.add("fuse.ln_bias", Tensor::vector(w, 0.0));
    add_lstm(p, rng, "lstm_u", 2 * w, h);
    add_attention(p, rng, "att_u", h);
  }
  return p;
}

// ---------------------------------------------------------------------------
// BoundParams

BoundParams::BoundParams(Tape& tape, const ModelParams& params, bool trainable) {
  for (const auto& [name, value] : params.entries()) {
    vars_.emplace_back(name, trainable ? tape.parameter(value) : tape.constant(value));
  }
}

Var BoundParams::operator[](std::string_view name) const {
  for (const auto& [n, v] : vars_)
    if (n == name) return v;
  throw std::out_of_range("no bound parameter named " + std::string(name));
}

void BoundParams::accumulate_gradients(const Tape& tape, ModelParams& out) const {
  for (const auto& [name, var] : vars_) {
    const Tensor& g = tape.grad(var);
    Tensor& dst = out.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

LstmVars lstm_vars(const BoundParams& p, std::string_view prefix) {
  const std::string s(prefix);
  return {p[s + ".wx"], p[s + ".wh"], p[s + ".b"]};
}

AttentionVars attention_vars(const BoundParams& p, std::string_view prefix) {
  const std::string s(prefix);
  return {p[s + ".w1"], p[s + ".W1"], p[s + ".W2"]};
}

FusionVars fusion_vars(const BoundParams& p) {
  return {p["fuse.wf"],     p["fuse.wq"],     p["fuse.wk"],      p["fuse.ffn_w1"], p["fuse.ffn_b1"],
          p["fuse.ffn_w2"], p["fuse.ffn_b2"], p["fuse.ln_gain"], p["fuse.ln_bias"]};
}

// ---------------------------------------------------------------------------
// Building blocks

Var time2vec(Tape& tape, Var omega, Var phi, double t) {
  const std::size_t n = tape.value(omega).size();
  if (tape.value(phi).size() != n || n == 0) {
    throw ad::ShapeError("time2vec: omega and phi must be equal-length vectors");
  }
  const Var affine = tape.add(tape.scale(omega, t), phi);
  const Var linear = tape.slice(affine, 0, 1);
  if (n == 1) return linear;
  const Var periodic = tape.cos(tape.slice(affine, 1, n - 1));
  return tape.concat({linear, periodic});
}

Tensor neighbor_means(const RoadNetwork& net, const Tensor& table) {
  if (table.rank() != 2 || table.rows() != net.num_vertices()) {
    throw ad::ShapeError("node2vec table must have one row per vertex");
  }
  const std::size_t d = table.cols();
  Tensor means = Tensor::matrix(net.num_vertices(), d);
  for (std::size_t v = 0; v < net.num_vertices(); ++v) {
    const auto arcs = net.out_arcs(static_cast<VertexId>(v));
    if (arcs.empty()) continue;
    const double c = 1.0 / static_cast<double>(arcs.size());
    for (const Arc& a : arcs) {
      for (std::size_t k = 0; k < d; ++k) means(v, k) += c * table(a.dst, k);
    }
  }
  return means;
}

namespace {

Tensor table_row(const Tensor& table, VertexId v) {
  const std::size_t d = table.cols();
  const auto first = table.data().begin() + static_cast<std::ptrdiff_t>(v) * static_cast<std::ptrdiff_t>(d);
  return Tensor::vector(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(d)));
}

}  // namespace

Var gcn_embed(Tape& tape, const Tensor& means, const Tensor& table, Var ws, VertexId v) {
  if (v < 0 || static_cast<std::size_t>(v) >= table.rows()) {
    throw std::out_of_range("gcn_embed: invalid vertex " + std::to_string(v));
  }
  const Var agg = tape.relu(tape.matmul(ws, tape.constant(table_row(means, v))));
  return tape.concat({agg, tape.constant(table_row(table, v))});
}

std::vector<Var> lstm_encode(Tape& tape, const LstmVars& lstm, std::span<const Var> seq) {
  if (seq.empty()) throw std::invalid_argument("lstm_encode: empty sequence");
  const std::size_t in = tape.value(lstm.wx).rows();
  for (Var x : seq) {
    if (tape.value(x).size() != in) {
      throw ad::ShapeError("lstm_encode: input width " + std::to_string(tape.value(x).size()) +
                           " does not match " + std::to_string(in));
    }
  }
  const std::size_t h = tape.value(lstm.wh).cols();
  // Input projections for every step in one product: (m x in)(in x 4h).
  const Var projected = tape.matmul(tape.stack(seq), lstm.wx);
  std::vector<Var> states;
  states.reserve(seq.size());
  Var hprev{}, cprev{};
  for (std::size_t i = 0; i < seq.size(); ++i) {
    Var z = tape.add(tape.row(projected, i), lstm.b);
    if (i > 0) z = tape.add(z, tape.matmul(lstm.wh, hprev));
    const Var ig = tape.sigmoid(tape.slice(z, 0, h));
    const Var fg = tape.sigmoid(tape.slice(z, h, h));
    const Var og = tape.sigmoid(tape.slice(z, 2 * h, h));
    const Var cand = tape.tanh(tape.slice(z, 3 * h, h));
    Var c = tape.hadamard(ig, cand);
    if (i > 0) c = tape.add(tape.hadamard(fg, cprev), c);
    const Var hs = tape.hadamard(og, tape.tanh(c));
    states.push_back(hs);
    hprev = hs;
    cprev = c;
  }
  return states;
}

namespace {

AttentionOutput attend_projected(Tape& tape, const AttentionVars& att, std::span<const Var> hs,
                                 std::span<const Var> keys, std::size_t i, bool softmax) {
  const Var query = tape.matmul(att.W2, hs[i]);
  std::vector<Var> scores;
  scores.reserve(i + 1);
  for (std::size_t k = 0; k <= i; ++k) {
    scores.push_back(tape.dot(att.w1, tape.tanh(tape.add(keys[k], query))));
  }
  AttentionOutput out;
  const Var alpha = tape.concat(scores);
  Var weights;
  if (softmax) {
    weights = tape.softmax(alpha);
  } else {
    const Var denom = tape.sum(tape.exp(alpha));
    weights = tape.scale_by(tape.reciprocal(denom), alpha);
  }
  Var state{};
  for (std::size_t k = 0; k <= i; ++k) {
    const Var w = tape.element(weights, k);
    out.weights.push_back(w);
    const Var term = tape.scale_by(w, hs[k]);
    state = k == 0 ? term : tape.add(state, term);
  }
  out.state = state;
  return out;
}

}  // namespace

AttentionOutput attend(Tape& tape, const AttentionVars& att, std::span<const Var> hs,
                       std::size_t i, bool softmax) {
  if (i >= hs.size()) throw std::out_of_range("attend: step out of range");
  std::vector<Var> keys;
  for (std::size_t k = 0; k <= i; ++k) keys.push_back(tape.matmul(att.W1, hs[k]));
  return attend_projected(tape, att, hs, keys, i, softmax);
}

std::vector<Var> decoupled_attention(Tape& tape, const AttentionVars& att,
                                     std::span<const Var> hs, bool softmax) {
  std::vector<Var> keys;
  for (Var h : hs) keys.push_back(tape.matmul(att.W1, h));
  std::vector<Var> out;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    out.push_back(attend_projected(tape, att, hs, keys, i, softmax).state);
  }
  return out;
}

CoAttentionStep co_attention_step(Tape& tape, const FusionVars& f, Var tau_t, Var tau_s) {
  if (!tape.value(tau_t).same_shape(tape.value(tau_s))) {
    throw ad::ShapeError("co-attention inputs must share a shape");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(tape.value(f.wq).rows()));
  const Var z[2] = {tape.matmul(f.wf, tau_t), tape.matmul(f.wf, tau_s)};
  const Var q[2] = {tape.matmul(f.wq, z[0]), tape.matmul(f.wq, z[1])};
  const Var k[2] = {tape.matmul(f.wk, z[0]), tape.matmul(f.wk, z[1])};
  const Var residual[2] = {tau_t, tau_s};
  CoAttentionStep out{};
  Var fused[2];
  for (int i = 0; i < 2; ++i) {
    const Var logits = tape.scale(
        tape.concat({tape.dot(q[i], k[0]), tape.dot(q[i], k[1])}), inv_sqrt);
    const Var beta = tape.softmax(logits);
    out.beta[i][0] = tape.value(beta)[0];
    out.beta[i][1] = tape.value(beta)[1];
    const Var mix = tape.add(tape.scale_by(tape.element(beta, 0), z[0]),
                             tape.scale_by(tape.element(beta, 1), z[1]));
    const Var hidden = tape.relu(tape.add(tape.matmul(f.ffn_w1, mix), f.ffn_b1));
    const Var ffn = tape.add(tape.matmul(f.ffn_w2, hidden), f.ffn_b2);
    fused[i] = tape.layer_norm(tape.add(ffn, residual[i]), f.ln_gain, f.ln_bias);
  }
  out.temporal = fused[0];
  out.spatial = fused[1];
  return out;
}

std::pair<std::vector<Var>, std::vector<Var>> co_attention_fuse(Tape& tape, const FusionVars& f,
                                                                std::span<const Var> tau_t,
                                                                std::span<const Var> tau_s) {
  if (tau_t.size() != tau_s.size()) {
    throw std::invalid_argument("co_attention_fuse: sequences differ in length");
  }
  std::pair<std::vector<Var>, std::vector<Var>> out;
  for (std::size_t i = 0; i < tau_t.size(); ++i) {
    const auto step = co_attention_step(tape, f, tau_t[i], tau_s[i]);
    out.first.push_back(step.temporal);
    out.second.push_back(step.spatial);
  }
  return out;
}

Var embedding_similarity(Tape& tape, Var a, Var b) {
  return tape.exp(tape.neg(tape.l2_norm(tape.sub(a, b), 1e-12)));
}

double embedding_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("embedding dimensions differ");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-std::sqrt(sq));
}

Var triplet_loss(Tape& tape, Var va, Var vp, Var vn, double d_ap_norm, double d_an_norm) {
  for (double d : {d_ap_norm, d_an_norm}) {
    if (!(d > 0.0 && d <= 1.0)) throw std::invalid_argument("triplet targets must lie in (0, 1]");
  }
  auto term = [&](Var other, double target) {
    const Var err = tape.add_scalar(tape.neg(embedding_similarity(tape, va, other)), target);
    return tape.scale(tape.hadamard(err, err), target);
  };
  return tape.add(term(vp, d_ap_norm), term(vn, d_an_norm));
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig cfg, const RoadNetwork& net, Tensor node2vec_table, ModelParams params)
    : cfg_(cfg), net_(&net), table_(std::move(node2vec_table)), params_(std::move(params)) {
  cfg_.validate();
  if (table_.cols() != cfg_.location_dim) {
    throw ad::ShapeError("node2vec table width " + std::to_string(table_.cols()) +
                         " does not match location_dim " + std::to_string(cfg_.location_dim));
  }
  means_ = trajsim::neighbor_means(net, table_);
}

Model::Model(ModelConfig cfg, const RoadNetwork& net, Tensor node2vec_table)
    : Model(cfg, net, std::move(node2vec_table), init_params(cfg)) {}

std::vector<double> Model::embed(const MatchedTrajectory& traj) const {
  Tape tape;
  BoundParams bound(tape, params_, false);
  TapeEncoder enc(tape, *this, bound);
  const Var v = enc.embed(traj);
  const auto& data = tape.value(v).storage();
  return data;
}

TapeEncoder::TapeEncoder(Tape& tape, const Model& model, const BoundParams& params)
    : tape_(&tape), model_(&model), params_(&params) {}

Var TapeEncoder::location(VertexId v) {
  if (!model_->network().contains(v)) {
    throw std::out_of_range("trajectory vertex " + std::to_string(v) + " is not in the network");
  }
  const auto it = locations_.find(v);
  if (it != locations_.end()) return it->second;
  const Var out = gcn_embed(*tape_, model_->neighbor_means(), model_->node2vec_table(),
                            (*params_)["gcn.ws"], v);
  locations_.emplace(v, out);
  return out;
}

Var TapeEncoder::time(double t) {
  const auto& cfg = model_->config();
  return time2vec(*tape_, (*params_)["t2v.omega"], (*params_)["t2v.phi"],
                  (t - cfg.time_origin) / cfg.time_scale);
}

Var TapeEncoder::embed(const MatchedTrajectory& traj) {
  if (traj.size() < 2) throw std::invalid_argument("embedding needs at least 2 steps");
  const auto& cfg = model_->config();
  std::vector<Var> tau_t, tau_s;
  for (const Step& s : traj.steps()) {
    tau_t.push_back(time(s.t));
    tau_s.push_back(location(s.vertex));
  }
  const std::size_t last = traj.size() - 1;
  if (cfg.fusion == FusionMode::SF) {
    const auto ht = lstm_encode(*tape_, lstm_vars(*params_, "lstm_t"), tau_t);
    const auto hs = lstm_encode(*tape_, lstm_vars(*params_, "lstm_s"), tau_s);
    const Var vt = attend(*tape_, attention_vars(*params_, "att_t"), ht, last,
                          cfg.attention_softmax).state;
    const Var vs = attend(*tape_, attention_vars(*params_, "att_s"), hs, last,
                          cfg.attention_softmax).state;
    return tape_->add(vt, vs);
  }
  const auto [fused_t, fused_s] = co_attention_fuse(*tape_, fusion_vars(*params_), tau_t, tau_s);
  std::vector<Var> joint;
  for (std::size_t i = 0; i < fused_t.size(); ++i) {
    joint.push_back(tape_->concat({fused_t[i], fused_s[i]}));
  }
  const auto hu = lstm_encode(*tape_, lstm_vars(*params_, "lstm_u"), joint);
  return attend(*tape_, attention_vars(*params_, "att_u"), hu, last, cfg.attention_softmax).state;
}

}  // namespace trajsim
