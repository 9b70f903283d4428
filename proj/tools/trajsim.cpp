// trajsim: pipeline driver. Every flag maps onto a key of the JSON config and
// overrides it; `--set section.key=value` reaches keys without a flag.

#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trajsim/pipeline.hpp"

namespace {

const std::map<std::string, std::string> kDescriptions{
    {"gen-synthetic", "generate a grid road network and timed trajectories"},
    {"ground-truth", "pairwise oracle distances and the train/validation/test split"},
    {"triplets", "select and order training triplets"},
    {"train", "train the encoder and write the checkpoint and log"},
    {"evaluate", "embed the corpus and score test retrieval"},
    {"query", "print the top-k most similar trajectories to one id"},
    {"cluster", "compare DBSCAN on oracle and embedding distances"},
    {"bench", "time embedding search against the oracle"},
};

struct FlagBinding {
  std::string key;
  std::string value;
  CLI::Option* opt = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal trajectory similarity learning on road networks"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::deque<FlagBinding> flags;  // stable addresses for CLI11

  auto bind = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    flags.push_back({key, {}, nullptr});
    flags.back().opt = sub->add_option(name, flags.back().value, help);
  };

  for (const std::string& name : trajsim::command_names()) {
    CLI::App* sub = app.add_subcommand(name, kDescriptions.at(name));
    sub->add_option("--config", config_path, "JSON config file");
    bind(sub, "--seed", "seed", "master seed");
    bind(sub, "--workdir", "workdir", "artifact directory");
    bind(sub, "--vertices", "vertices", "vertex CSV (defaults to the workdir's)");
    bind(sub, "--edges", "edges", "edge CSV (defaults to the workdir's)");
    bind(sub, "--trajectories", "trajectories", "trajectory JSONL (defaults to the workdir's)");
    sub->add_option("--set", sets, "override any config key: section.key=value");
    if (name == "gen-synthetic") {
      bind(sub, "--grid", "synthetic.grid", "grid side length in vertices");
      bind(sub, "--trajs", "synthetic.trajs", "number of trajectories");
    } else if (name == "ground-truth") {
      bind(sub, "--workers", "workers", "worker threads");
      bind(sub, "--measure", "similarity.measure", "TP, DITA, LCRS or NetERP");
      bind(sub, "--lambda", "similarity.lambda", "spatial weight in [0, 1]");
    } else if (name == "triplets") {
      bind(sub, "--n", "sampling.N", "positives and negatives per anchor");
      bind(sub, "--alpha", "similarity.alpha", "normalization scale");
    } else if (name == "train") {
      bind(sub, "--epochs", "train.epochs", "training epochs");
      bind(sub, "--ordering", "train.ordering", "curriculum or random");
      bind(sub, "--fusion", "model.fusion", "SF or UF");
      bind(sub, "--lr", "train.lr", "Adam learning rate");
      bind(sub, "--wall-clock", "train.wall_clock", "record elapsed seconds in the log (true/false)");
    } else if (name == "query") {
      bind(sub, "--id", "eval.id", "query trajectory id");
      bind(sub, "--k", "eval.k", "result count");
    } else if (name == "cluster") {
      bind(sub, "--min-pts", "eval.min_pts", "DBSCAN minPts");
    } else if (name == "bench") {
      bind(sub, "--k", "eval.k", "result count");
      bind(sub, "--queries", "eval.bench_queries", "queries per corpus size");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    std::string text;
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw trajsim::PipelineError("missing_config", command, "cannot read config " + config_path);
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw trajsim::PipelineError("bad_config", command, "--set expects key=value, got '" + s + "'");
      }
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& f : flags) {
      if (f.opt->count() == 0) continue;
      // Paths and names stay strings even when they would parse as JSON.
      const bool is_text = f.key == "workdir" || f.key == "vertices" || f.key == "edges" ||
                           f.key == "trajectories" || f.key.ends_with("measure") ||
                           f.key.ends_with("ordering") || f.key.ends_with("fusion");
      overrides.emplace_back(f.key, is_text ? nlohmann::json(f.value).dump() : f.value);
    }
    const trajsim::PipelineConfig cfg = trajsim::parse_config(text, overrides);
    trajsim::run_command(command, cfg, std::cout);
  } catch (const trajsim::PipelineError& e) {
    std::cerr << trajsim::format_error(e) << '\n';
    return 1;
  }
  return 0;
}
