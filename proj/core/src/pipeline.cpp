#include "trajsim/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "csv_util.hpp"
#include "trajsim/evaluation.hpp"
#include "trajsim/sampling.hpp"

namespace trajsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads `key` from object `j` if present, keeping `dflt` otherwise.
template <typename T>
void read(const json& j, const char* key, T& dflt) {
  if (j.contains(key)) dflt = j.at(key).get<T>();
}

json section(const json& doc, const char* name) {
  if (!doc.contains(name)) return json::object();
  if (!doc.at(name).is_object()) throw PipelineError("bad_config", "config", std::string(name) + " must be an object");
  return doc.at(name);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The stage that produces each workdir artifact, for error hints.
const std::map<std::string, std::string>& producers() {
  static const std::map<std::string, std::string> m{
      {artifacts::kVertices, "gen-synthetic"},   {artifacts::kEdges, "gen-synthetic"},
      {artifacts::kTrajectories, "gen-synthetic"}, {artifacts::kGroundTruth, "ground-truth"},
      {artifacts::kSplit, "ground-truth"},        {artifacts::kTriplets, "triplets"},
      {artifacts::kCheckpoint, "train"},          {artifacts::kEmbeddings, "evaluate"},
  };
  return m;
}

fs::path require(const fs::path& path, const std::string& stage) {
  if (fs::exists(path)) return path;
  const auto it = producers().find(path.filename().string());
  std::string msg = "missing input " + path.string();
  if (it != producers().end()) msg += "; run '" + it->second + "' first";
  throw PipelineError("missing_artifact", stage, msg);
}

std::ifstream open_in(const fs::path& path, const std::string& stage) {
  std::ifstream in(require(path, stage), std::ios::binary);
  if (!in) throw PipelineError("io", stage, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, const std::string& stage) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PipelineError("io", stage, "cannot write " + path.string());
  return out;
}

void write_manifest(const PipelineConfig& cfg, const std::string& stage,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  json in = json::object();
  for (const auto& p : inputs) in[p.string()] = sha256_file(p);
  json outj = json::object();
  for (const auto& p : outputs) outj[p.string()] = sha256_file(p);
  const json doc{{"stage", stage},
                 {"seed", cfg.seed},
                 {"config_sha256", sha256_hex(config_json(cfg))},
                 {"inputs", in},
                 {"outputs", outj}};
  auto f = open_out(cfg.artifact(stage + ".manifest.json"), stage);
  f << doc.dump(2) << '\n';
}

struct Corpus {
  RoadNetwork net;
  std::vector<MatchedTrajectory> trajs;
};

Corpus load_corpus(const PipelineConfig& cfg, const std::string& stage) {
  require(cfg.vertices_path(), stage);
  require(cfg.edges_path(), stage);
  require(cfg.trajectories_path(), stage);
  try {
    RoadNetwork net = load_network(cfg.vertices_path(), cfg.edges_path());
    auto trajs = filter_short(load_trajectories(cfg.trajectories_path(), net));
    return {std::move(net), std::move(trajs)};
  } catch (const InputError& e) {
    std::string msg = e.what();
    if (e.line() > 0) msg += " (line " + std::to_string(e.line()) + ")";
    throw PipelineError("bad_input", stage, msg);
  }
}

DistanceMatrix load_truth(const PipelineConfig& cfg, const std::string& stage) {
  auto in = open_in(cfg.artifact(artifacts::kGroundTruth), stage);
  return read_ground_truth(in);
}

DatasetSplit load_split(const PipelineConfig& cfg, const std::string& stage) {
  auto in = open_in(cfg.artifact(artifacts::kSplit), stage);
  return read_split(in);
}

Model load_model(const PipelineConfig& cfg, const RoadNetwork& net, const std::string& stage) {
  auto in = open_in(cfg.artifact(artifacts::kCheckpoint), stage);
  return load_checkpoint(in, net);
}

// q-quantile of the values (nearest rank on the sorted copy).
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto i = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1));
  return v[i];
}

}  // namespace

fs::path PipelineConfig::vertices_path() const {
  return vertices.empty() ? artifact(artifacts::kVertices) : vertices;
}
fs::path PipelineConfig::edges_path() const {
  return edges.empty() ? artifact(artifacts::kEdges) : edges;
}
fs::path PipelineConfig::trajectories_path() const {
  return trajectories.empty() ? artifact(artifacts::kTrajectories) : trajectories;
}

PipelineConfig parse_config(const std::string& json_text,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
  json doc;
  try {
    doc = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::exception& e) {
    throw PipelineError("bad_config", "config", e.what());
  }
  if (!doc.is_object()) throw PipelineError("bad_config", "config", "config must be a JSON object");
  for (const auto& [key, raw] : overrides) {
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    doc[json::json_pointer(pointer)] = value;
  }
  // The canonical dump of the defaults doubles as the schema of known keys.
  json schema = json::parse(config_json(PipelineConfig{}));
  schema["eval"]["id"] = 0;
  for (const auto& [key, value] : doc.items()) {
    if (!schema.contains(key)) throw PipelineError("bad_config", "config", "unknown key '" + key + "'");
    if (!schema.at(key).is_object() || !value.is_object()) continue;
    for (const auto& [sub, unused] : value.items()) {
      if (!schema.at(key).contains(sub)) {
        throw PipelineError("bad_config", "config", "unknown key '" + key + "." + sub + "'");
      }
    }
  }

  PipelineConfig c;
  try {
    if (doc.contains("workdir")) c.workdir = doc.at("workdir").get<std::string>();
    if (doc.contains("vertices")) c.vertices = doc.at("vertices").get<std::string>();
    if (doc.contains("edges")) c.edges = doc.at("edges").get<std::string>();
    if (doc.contains("trajectories")) c.trajectories = doc.at("trajectories").get<std::string>();
    read(doc, "seed", c.seed);
    read(doc, "workers", c.workers);

    const json syn = section(doc, "synthetic");
    read(syn, "grid", c.synthetic.grid);
    read(syn, "trajs", c.synthetic.trajectories);
    read(syn, "cell_m", c.synthetic.cell_m);
    read(syn, "length_jitter", c.synthetic.length_jitter);
    read(syn, "departure_hours", c.synthetic.departure_hours);
    read(syn, "departure_sigma_s", c.synthetic.departure_sigma_s);
    read(syn, "speed_mps", c.synthetic.speed_mps);
    read(syn, "min_steps", c.synthetic.min_steps);
    read(syn, "max_steps", c.synthetic.max_steps);
    read(syn, "gps_noise_m", c.synthetic.gps_noise_m);
    read(syn, "raw_gps", c.raw_gps);
    c.synthetic.seed = c.seed;

    const json sim = section(doc, "similarity");
    if (sim.contains("measure")) c.similarity.kind = parse_measure(sim.at("measure").get<std::string>());
    read(sim, "lambda", c.similarity.lambda);
    read(sim, "alpha", c.similarity.alpha);
    read(sim, "lcrs_time_threshold", c.similarity.lcrs_time_threshold);
    read(sim, "lcrs_temporal_scale", c.similarity.lcrs_temporal_scale);
    read(sim, "erp_gap_vertex", c.similarity.erp_gap_vertex);
    read(sim, "erp_gap_time", c.similarity.erp_gap_time);
    if (sim.contains("unreachable_penalty") && !sim.at("unreachable_penalty").is_null()) {
      c.similarity.unreachable_penalty = sim.at("unreachable_penalty").get<double>();
    }

    const json mod = section(doc, "model");
    read(mod, "d", c.model.hidden);
    read(mod, "q", c.model.time_terms);
    read(mod, "d0", c.model.location_dim);
    if (mod.contains("fusion")) c.model.fusion = parse_fusion(mod.at("fusion").get<std::string>());
    read(mod, "attention_softmax", c.model.attention_softmax);
    read(mod, "time_origin", c.model.time_origin);
    read(mod, "time_scale", c.model.time_scale);
    c.model.seed = c.seed;

    const json n2v = section(doc, "node2vec");
    read(n2v, "walks_per_vertex", c.node2vec.walks_per_vertex);
    read(n2v, "walk_length", c.node2vec.walk_length);
    read(n2v, "p", c.node2vec.return_p);
    read(n2v, "q", c.node2vec.inout_q);
    read(n2v, "window", c.node2vec.window);
    read(n2v, "negatives", c.node2vec.negatives);
    read(n2v, "epochs", c.node2vec.epochs);
    read(n2v, "learning_rate", c.node2vec.learning_rate);
    c.node2vec.dim = c.model.location_dim;
    c.node2vec.seed = c.seed;

    const json smp = section(doc, "sampling");
    read(smp, "N", c.triplets_per_anchor);

    const json tr = section(doc, "train");
    read(tr, "epochs", c.train.epochs);
    read(tr, "batch_size", c.train.batch_size);
    read(tr, "lr", c.train.learning_rate);
    read(tr, "beta1", c.train.beta1);
    read(tr, "beta2", c.train.beta2);
    read(tr, "epsilon", c.train.epsilon);
    if (tr.contains("ordering")) c.train.ordering = parse_ordering(tr.at("ordering").get<std::string>());
    read(tr, "patience", c.train.patience);
    read(tr, "divergence_factor", c.train.divergence_factor);
    read(tr, "wall_clock", c.train.record_wall_clock);
    c.train.seed = c.seed;

    const json ev = section(doc, "eval");
    if (ev.contains("id")) c.query_id = ev.at("id").get<TrajId>();
    read(ev, "k", c.k);
    read(ev, "min_pts", c.min_pts);
    read(ev, "eps_quantiles", c.eps_quantiles);
    read(ev, "bench_sizes", c.bench_sizes);
    read(ev, "bench_queries", c.bench_queries);

    c.similarity.validate();
    c.model.validate();
    c.train.validate();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError("bad_config", "config", e.what());
  }
  if (c.workers == 0) throw PipelineError("bad_config", "config", "workers must be >= 1");
  if (c.triplets_per_anchor == 0) throw PipelineError("bad_config", "config", "sampling.N must be >= 1");
  return c;
}

std::string config_json(const PipelineConfig& c) {
  json doc{
      {"workdir", c.workdir.string()},
      {"vertices", c.vertices.string()},
      {"edges", c.edges.string()},
      {"trajectories", c.trajectories.string()},
      {"seed", c.seed},
      {"workers", c.workers},
      {"synthetic",
       {{"grid", c.synthetic.grid},
        {"trajs", c.synthetic.trajectories},
        {"cell_m", c.synthetic.cell_m},
        {"length_jitter", c.synthetic.length_jitter},
        {"departure_hours", c.synthetic.departure_hours},
        {"departure_sigma_s", c.synthetic.departure_sigma_s},
        {"speed_mps", c.synthetic.speed_mps},
        {"min_steps", c.synthetic.min_steps},
        {"max_steps", c.synthetic.max_steps},
        {"gps_noise_m", c.synthetic.gps_noise_m},
        {"raw_gps", c.raw_gps}}},
      {"similarity",
       {{"measure", std::string(to_string(c.similarity.kind))},
        {"lambda", c.similarity.lambda},
        {"alpha", c.similarity.alpha},
        {"lcrs_time_threshold", c.similarity.lcrs_time_threshold},
        {"lcrs_temporal_scale", c.similarity.lcrs_temporal_scale},
        {"erp_gap_vertex", c.similarity.erp_gap_vertex},
        {"erp_gap_time", c.similarity.erp_gap_time},
        {"unreachable_penalty", c.similarity.unreachable_penalty ? json(*c.similarity.unreachable_penalty)
                                                                 : json(nullptr)}}},
      {"model",
       {{"d", c.model.hidden},
        {"q", c.model.time_terms},
        {"d0", c.model.location_dim},
        {"fusion", std::string(to_string(c.model.fusion))},
        {"attention_softmax", c.model.attention_softmax},
        {"time_origin", c.model.time_origin},
        {"time_scale", c.model.time_scale}}},
      {"node2vec",
       {{"walks_per_vertex", c.node2vec.walks_per_vertex},
        {"walk_length", c.node2vec.walk_length},
        {"p", c.node2vec.return_p},
        {"q", c.node2vec.inout_q},
        {"window", c.node2vec.window},
        {"negatives", c.node2vec.negatives},
        {"epochs", c.node2vec.epochs},
        {"learning_rate", c.node2vec.learning_rate}}},
      {"sampling", {{"N", c.triplets_per_anchor}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.learning_rate},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"epsilon", c.train.epsilon},
        {"ordering", std::string(to_string(c.train.ordering))},
        {"patience", c.train.patience},
        {"divergence_factor", c.train.divergence_factor},
        {"wall_clock", c.train.record_wall_clock}}},
      {"eval",
       {{"k", c.k},
        {"min_pts", c.min_pts},
        {"eps_quantiles", c.eps_quantiles},
        {"bench_sizes", c.bench_sizes},
        {"bench_queries", c.bench_queries}}},
  };
  if (c.query_id) doc["eval"]["id"] = *c.query_id;
  return doc.dump();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) {
    ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

std::string format_error(const PipelineError& e) {
  std::string msg = e.what();
  for (char& ch : msg) {
    if (ch == '\n' || ch == '\r') ch = ' ';
    if (ch == '"') ch = '\'';
  }
  return "error kind=" + e.kind() + " stage=" + e.stage() + " message=\"" + msg + "\"";
}

void run_gen_synthetic(const PipelineConfig& cfg, std::ostream& out) {
  const std::string stage = "gen-synthetic";
  SyntheticCorpus corpus = [&] {
    try {
      return generate_synthetic(cfg.synthetic);
    } catch (const std::invalid_argument& e) {
      throw PipelineError("bad_config", stage, e.what());
    }
  }();
  const auto vpath = cfg.artifact(artifacts::kVertices);
  const auto epath = cfg.artifact(artifacts::kEdges);
  const auto tpath = cfg.artifact(artifacts::kTrajectories);
  {
    auto v = open_out(vpath, stage);
    auto e = open_out(epath, stage);
    write_network(corpus.network, v, e);
    auto t = open_out(tpath, stage);
    write_matched_trajectories(corpus.trajectories, t);
  }
  std::vector<fs::path> outputs{vpath, epath, tpath};
  if (cfg.raw_gps) {
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    const auto raw = to_raw(corpus.network, corpus.trajectories, cfg.synthetic.gps_noise_m, rng);
    const auto rpath = cfg.artifact(artifacts::kRawTrajectories);
    {
      auto r = open_out(rpath, stage);
      write_raw_trajectories(raw, r);
    }
    outputs.push_back(rpath);
  }
  write_manifest(cfg, stage, {}, outputs);
  out << "gen-synthetic: " << corpus.network.num_vertices() << " vertices, "
      << corpus.network.num_edges() << " edges, " << corpus.trajectories.size()
      << " trajectories -> " << cfg.workdir.string() << '\n';
}

void run_ground_truth(const PipelineConfig& cfg, std::ostream& out) {
  const std::string stage = "ground-truth";
  const Corpus corpus = load_corpus(cfg, stage);
  if (corpus.trajs.size() < 10) {
    throw PipelineError("bad_input", stage, "need at least 10 trajectories after filtering");
  }
  ShortestPathCache cache(corpus.net);
  const auto matrix = ground_truth_matrix(corpus.trajs, cfg.similarity, corpus.net, cache,
                                          static_cast<unsigned>(cfg.workers));
  const auto split = split_dataset(matrix.ids(), cfg.seed);
  const auto gpath = cfg.artifact(artifacts::kGroundTruth);
  const auto spath = cfg.artifact(artifacts::kSplit);
  {
    auto g = open_out(gpath, stage);
    write_ground_truth(matrix, g);
    auto s = open_out(spath, stage);
    write_split(split, s);
  }
  write_manifest(cfg, stage, {cfg.vertices_path(), cfg.edges_path(), cfg.trajectories_path()},
                 {gpath, spath});
  out << "ground-truth: " << matrix.size() << " trajectories, split " << split.train.size() << '/'
      << split.validation.size() << '/' << split.test.size() << '\n';
}

void run_triplets(const PipelineConfig& cfg, std::ostream& out) {
  const std::string stage = "triplets";
  const auto truth = load_truth(cfg, stage);
  const auto split = load_split(cfg, stage);
  const auto train = truth.subset(split.train);
  std::vector<Triplet> triplets;
  try {
    triplets = select_triplets(train, split.train, cfg.triplets_per_anchor, cfg.similarity.alpha, cfg.seed);
  } catch (const std::invalid_argument& e) {
    throw PipelineError("bad_config", stage, e.what());
  }
  const auto tpath = cfg.artifact(artifacts::kTriplets);
  {
    auto t = open_out(tpath, stage);
    write_triplets(triplets, t);
  }
  write_manifest(cfg, stage, {cfg.artifact(artifacts::kGroundTruth), cfg.artifact(artifacts::kSplit)},
                 {tpath});
  out << "triplets: " << triplets.size() << " from " << split.train.size() << " anchors\n";
}

void run_train(const PipelineConfig& cfg, std::ostream& out) {
  const std::string stage = "train";
  const Corpus corpus = load_corpus(cfg, stage);
  const auto truth = load_truth(cfg, stage);
  const auto split = load_split(cfg, stage);
  std::vector<Triplet> triplets;
  {
    auto in = open_in(cfg.artifact(artifacts::kTriplets), stage);
    triplets = read_triplets(in);
  }
  if (cfg.train.ordering == Ordering::Curriculum) triplets = curriculum_order(triplets);

  Model model(cfg.model, corpus.net, train_node2vec(corpus.net, cfg.node2vec));
  const TrajectoryIndex index = index_trajectories(corpus.trajs);
  const DistanceMatrix val_truth = truth.subset(split.validation);
  const ValidationSet validation{split.validation, &val_truth};
  TrainLog log;
  try {
    log = train(model, triplets, index, cfg.train, &validation);
  } catch (const NonFiniteGradient& e) {
    throw PipelineError("non_finite_gradient", stage, e.what());
  } catch (const TrainingDiverged& e) {
    throw PipelineError("diverged", stage, e.what());
  } catch (const std::invalid_argument& e) {
    throw PipelineError("bad_config", stage, e.what());
  }
  const auto cpath = cfg.artifact(artifacts::kCheckpoint);
  const auto lpath = cfg.artifact(artifacts::kTrainLog);
  {
    auto c = open_out(cpath, stage);
    save_checkpoint(model, c);
    auto l = open_out(lpath, stage);
    write_train_log(log, l);
  }
  write_manifest(cfg, stage,
                 {cfg.vertices_path(), cfg.edges_path(), cfg.trajectories_path(),
                  cfg.artifact(artifacts::kGroundTruth), cfg.artifact(artifacts::kSplit),
                  cfg.artifact(artifacts::kTriplets)},
                 {cpath, lpath});
  const auto& last = log.epochs.back();
  out << "train: " << log.epochs.size() << " epochs, final loss " << last.loss << ", best epoch "
      << log.best_epoch << (log.early_stopped ? " (early stop)" : "") << '\n';
}

void run_evaluate(const PipelineConfig& cfg, std::ostream& out) {
  const std::string stage = "evaluate";
  const Corpus corpus = load_corpus(cfg, stage);
  const auto truth = load_truth(cfg, stage);
  const auto split = load_split(cfg, stage);
  const Model model = load_model(cfg, corpus.net, stage);
  const EmbeddingTable table = embed_corpus(corpus.trajs, model);
  const MetricReport report = evaluate_retrieval(table, truth.subset(split.test), split.test);
  const auto epath = cfg.artifact(artifacts::kEmbeddings);
  const auto mpath = cfg.artifact(artifacts::kMetrics);
  {
    auto e = open_out(epath, stage);
    write_embeddings(table, e);
    auto m = open_out(mpath, stage);
    write_metrics(report, m);
  }
  write_manifest(cfg, stage,
                 {cfg.vertices_path(), cfg.edges_path(), cfg.trajectories_path(),
                  cfg.artifact(artifacts::kGroundTruth), cfg.artifact(artifacts::kSplit),
                  cfg.artifact(artifacts::kCheckpoint)},
                 {epath, mpath});
  write_metrics(report, out);
}

void run_query(const PipelineConfig& cfg, std::ostream& out) {
  const std::string stage = "query";
  if (!cfg.query_id) throw PipelineError("bad_config", stage, "query needs a trajectory id (--id)");
  EmbeddingTable table;
  {
    auto in = open_in(cfg.artifact(artifacts::kEmbeddings), stage);
    table = read_embeddings(in);
  }
  if (!table.contains(*cfg.query_id)) {
    throw PipelineError("unknown_id", stage, "trajectory " + std::to_string(*cfg.query_id) + " not in embeddings");
  }
  if (cfg.k == 0 || cfg.k >= table.size()) {
    throw PipelineError("bad_config", stage, "k must lie in [1, corpus size)");
  }
  const auto result = topk_query(table, *cfg.query_id, cfg.k);
  std::optional<DistanceMatrix> truth;
  if (fs::exists(cfg.artifact(artifacts::kGroundTruth))) truth = load_truth(cfg, stage);
  out << "rank,traj_id,similarity" << (truth ? ",oracle_distance" : "") << '\n';
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    out << i + 1 << ',' << c.id << ',' << csv::format_double(c.score);
    if (truth && truth->contains(c.id) && truth->contains(*cfg.query_id)) {
      out << ',' << csv::format_double(truth->combined(*cfg.query_id, c.id));
    }
    out << '\n';
  }
}

void run_cluster(const PipelineConfig& cfg, std::ostream& out) {
  const std::string stage = "cluster";
  const auto truth = load_truth(cfg, stage);
  const auto split = load_split(cfg, stage);
  EmbeddingTable table;
  {
    auto in = open_in(cfg.artifact(artifacts::kEmbeddings), stage);
    table = read_embeddings(in);
  }
  const std::vector<TrajId>& ids = split.test;
  const std::size_t n = ids.size();
  auto oracle = [&](std::size_t i, std::size_t j) { return i == j ? 0.0 : truth.combined(ids[i], ids[j]); };
  auto embedded = [&](std::size_t i, std::size_t j) {
    const auto a = table.row(ids[i]);
    const auto b = table.row(ids[j]);
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return std::sqrt(s);
  };
  // The two distance sources live on different scales, so eps is swept
  // over matching quantiles of each pairwise distribution.
  std::vector<double> od, ed;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      od.push_back(oracle(i, j));
      ed.push_back(embedded(i, j));
    }
  }
  if (od.empty()) throw PipelineError("bad_input", stage, "test split too small to cluster");
  std::vector<double> oc, ec;
  const auto cpath = cfg.artifact(artifacts::kClusters);
  {
    auto f = open_out(cpath, stage);
    f << "quantile,eps_oracle,eps_embedding,clusters_oracle,clusters_embedding\n";
    for (double q : cfg.eps_quantiles) {
      const double eo = std::max(quantile(od, q), 1e-12);
      const double ee = std::max(quantile(ed, q), 1e-12);
      const auto lo = dbscan(n, oracle, eo, cfg.min_pts);
      const auto le = dbscan(n, embedded, ee, cfg.min_pts);
      oc.push_back(static_cast<double>(cluster_count(lo)));
      ec.push_back(static_cast<double>(cluster_count(le)));
      f << csv::format_double(q) << ',' << csv::format_double(eo) << ',' << csv::format_double(ee) << ','
        << oc.back() << ',' << ec.back() << '\n';
    }
  }
  write_manifest(cfg, stage,
                 {cfg.artifact(artifacts::kGroundTruth), cfg.artifact(artifacts::kSplit),
                  cfg.artifact(artifacts::kEmbeddings)},
                 {cpath});
  out << "cluster: spearman(count curves) = " << csv::format_double(spearman(oc, ec)) << '\n';
}

void run_bench(const PipelineConfig& cfg, std::ostream& out) {
  const std::string stage = "bench";
  const Corpus corpus = load_corpus(cfg, stage);
  const Model model = load_model(cfg, corpus.net, stage);
  std::vector<std::size_t> sizes;
  for (std::size_t s : cfg.bench_sizes) {
    if (s > cfg.k && s <= corpus.trajs.size()) sizes.push_back(s);
  }
  if (sizes.empty()) {
    throw PipelineError("bad_config", stage,
                        "no bench size fits the corpus of " + std::to_string(corpus.trajs.size()) +
                            " trajectories with k = " + std::to_string(cfg.k));
  }
  const EmbeddingTable table = embed_corpus(corpus.trajs, model);
  const auto rows = speedup_benchmark(corpus.trajs, table, corpus.net, cfg.similarity, sizes,
                                      cfg.bench_queries, cfg.k);
  const auto tpath = cfg.artifact(artifacts::kTimings);
  {
    auto f = open_out(tpath, stage);
    write_timings(rows, f);
  }
  write_manifest(cfg, stage,
                 {cfg.vertices_path(), cfg.edges_path(), cfg.trajectories_path(),
                  cfg.artifact(artifacts::kCheckpoint)},
                 {tpath});
  write_timings(rows, out);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen-synthetic", "ground-truth", "triplets", "train",
                                              "evaluate",      "query",        "cluster",  "bench"};
  return names;
}

void run_command(const std::string& command, const PipelineConfig& cfg, std::ostream& out) {
  try {
    if (command == "gen-synthetic") return run_gen_synthetic(cfg, out);
    if (command == "ground-truth") return run_ground_truth(cfg, out);
    if (command == "triplets") return run_triplets(cfg, out);
    if (command == "train") return run_train(cfg, out);
    if (command == "evaluate") return run_evaluate(cfg, out);
    if (command == "query") return run_query(cfg, out);
    if (command == "cluster") return run_cluster(cfg, out);
    if (command == "bench") return run_bench(cfg, out);
  } catch (const PipelineError&) {
    throw;
  } catch (const InputError& e) {
    std::string msg = e.what();
    if (e.line() > 0) msg += " (line " + std::to_string(e.line()) + ")";
    throw PipelineError("bad_input", command, msg);
  } catch (const std::exception& e) {
    throw PipelineError("failed", command, e.what());
  }
  throw PipelineError("unknown_command", command, "unknown command '" + command + "'");
}

}  // namespace trajsim
