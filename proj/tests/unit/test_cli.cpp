#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trajsim/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("trajsim-cli-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Result run(const std::string& args) {
  static const fs::path io = scratch("io");
  const std::string cmd = std::string("'") + TRAJSIM_CLI + "' " + args + " > '" + (io / "out").string() +
                          "' 2> '" + (io / "err").string() + "'";
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(io / "out");
  r.err = slurp(io / "err");
  return r;
}

std::string wd(const fs::path& p) { return " --workdir '" + p.string() + "'"; }

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help").status == 0);
  const auto help = run("train --help");
  CHECK(help.status == 0);
  CHECK(help.out.find("--epochs") != std::string::npos);
  CHECK(run("").status != 0);
  CHECK(run("frobnicate").status != 0);
  CHECK(run("train --epochs").status != 0);
}

TEST_CASE("gen-synthetic is reproducible from the seed") {
  const auto a = scratch("gen-a"), b = scratch("gen-b"), c = scratch("gen-c");
  REQUIRE(run("gen-synthetic --grid 6 --trajs 20 --seed 9" + wd(a)).status == 0);
  REQUIRE(run("gen-synthetic --grid 6 --trajs 20 --seed 9" + wd(b)).status == 0);
  REQUIRE(run("gen-synthetic --grid 6 --trajs 20 --seed 10" + wd(c)).status == 0);
  for (const char* f : {trajsim::artifacts::kVertices, trajsim::artifacts::kEdges, trajsim::artifacts::kTrajectories}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / trajsim::artifacts::kTrajectories) != slurp(c / trajsim::artifacts::kTrajectories));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("errors name the failing stage and the missing step") {
  const auto dir = scratch("errors");
  auto r = run("train" + wd(dir));
  CHECK(r.status == 1);
  CHECK(r.err.rfind("error kind=missing_artifact stage=train message=", 0) == 0);
  CHECK(r.err.find("run 'gen-synthetic' first") != std::string::npos);
  CHECK(r.out.empty());

  r = run("gen-synthetic --set synthetic.bogus=1" + wd(dir));
  CHECK(r.status == 1);
  CHECK(r.err.find("kind=bad_config") != std::string::npos);
  r = run("gen-synthetic --set novalue" + wd(dir));
  CHECK(r.err.find("kind=bad_config") != std::string::npos);
  r = run("gen-synthetic --config '" + (dir / "absent.json").string() + "'" + wd(dir));
  CHECK(r.err.find("kind=missing_config") != std::string::npos);
  r = run("query" + wd(dir));
  CHECK(r.err.find("stage=query") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("a small pipeline runs end to end") {
  const auto dir = scratch("e2e");
  {
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"model": {"d": 8, "q": 7, "d0": 4}, "node2vec": {"walks_per_vertex": 2, "walk_length": 8},
               "train": {"batch_size": 12}, "eval": {"bench_sizes": [10, 30], "bench_queries": 2}})";
  }
  const std::string common = " --config '" + (dir / "config.json").string() + "'" + wd(dir / "work");
  REQUIRE(run("gen-synthetic --grid 8 --trajs 40" + common).status == 0);
  REQUIRE(run("ground-truth --workers 2" + common).status == 0);
  REQUIRE(run("triplets --n 3" + common).status == 0);
  const auto train = run("train --epochs 2 --ordering random" + common);
  REQUIRE(train.status == 0);
  CHECK(train.out.find("train: 2 epochs") != std::string::npos);
  const auto log = slurp(dir / "work" / trajsim::artifacts::kTrainLog);
  CHECK(std::count(log.begin(), log.end(), '\n') == 3);

  const auto eval = run("evaluate" + common);
  REQUIRE(eval.status == 0);
  std::istringstream metrics(slurp(dir / "work" / trajsim::artifacts::kMetrics));
  std::string header, row;
  std::getline(metrics, header);
  std::getline(metrics, row);
  CHECK(header == "hr10,hr50,r10at50");
  std::istringstream fields(row);
  for (std::string f; std::getline(fields, f, ',');) {
    const double v = std::stod(f);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  const auto query = run("query --id 3 --k 5" + common);
  REQUIRE(query.status == 0);
  CHECK(query.out.rfind("rank,traj_id,similarity", 0) == 0);
  CHECK(std::count(query.out.begin(), query.out.end(), '\n') == 6);
  CHECK(query.out.find("\n1,3,") == std::string::npos);  // the query itself is excluded

  CHECK(run("cluster --min-pts 3" + common).status == 0);
  CHECK(fs::exists(dir / "work" / trajsim::artifacts::kClusters));
  CHECK(run("bench --k 5 --queries 1" + common).status == 0);
  const auto timings = slurp(dir / "work" / trajsim::artifacts::kTimings);
  CHECK(std::count(timings.begin(), timings.end(), '\n') == 3);
  fs::remove_all(dir);
}
