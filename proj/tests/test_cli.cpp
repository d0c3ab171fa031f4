#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "grpolab/cli.hpp"
#include "grpolab/harness.hpp"
#include "grpolab/io.hpp"

using namespace grpolab;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const fs::path kDir = "cli_scratch";

std::string path(const std::string& rel) { return (kDir / rel).string(); }

std::string tiny_config() {
  ExperimentConfig c = default_experiment_config();
  c.pool.train = {{50, 2, 5, 3, 4}, {30, 6, 10, 4, 5}};
  c.pool.test = {{20, 2, 5, 3, 4}, {20, 6, 10, 4, 5}};
  c.pool.ood = {{10, 16, 20, 4, 5}};
  c.grpo.total_steps = 20;
  c.grpo.batch_prompts = 4;
  c.grpo.eval_every = 10;
  c.seeds = {1};
  c.policies = {SelectionPolicy::hardest, SelectionPolicy::random};
  const std::string p = path("tiny.json");
  write_file(p, nlohmann::json(c).dump(2));
  return p;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == kExitConfigError);
  CHECK(run({"bogus"}).code == kExitConfigError);
  CHECK(run({"select"}).code == kExitConfigError);  // --estimates is required
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("bad configs exit with the config code") {
  fs::create_directories(kDir);
  write_file(path("broken.json"), "{ nope");
  write_file(path("unknown.json"), R"({"fractoin": 0.1})");
  write_file(path("typed.json"), R"({"fraction": "lots"})");
  write_file(path("invalid.json"), R"({"fraction": 2.0})");
  for (const char* f : {"broken.json", "unknown.json", "typed.json", "invalid.json"}) {
    INFO(f);
    const auto r = run({"experiment", "--config", path(f), "--out", path("never")});
    CHECK(r.code == kExitConfigError);
    CHECK(r.err.find("config error") != std::string::npos);
  }
  CHECK(run({"genpool", "--config", path("missing.json")}).code == kExitConfigError);
  CHECK(run({"probe", "--profile", "medium", "--out", path("p.jsonl")}).code == kExitConfigError);
}

TEST_CASE("verify") {
  const auto r = run({"verify", "--seed", "3"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS dp_vs_enumeration") != std::string::npos);
}

TEST_CASE("stage-by-stage pipeline") {
  fs::create_directories(kDir);
  const std::string cfg = tiny_config();
  auto r = run({"genpool", "--config", cfg, "--out", path("pool.pool.json")});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("train=80 test=40 ood=10") != std::string::npos);

  r = run({"probe", "--config", cfg, "--pool", path("pool.pool.json"), "--out", path("probe.difficulty.jsonl")});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.rfind("wrote", 0) == 0);
  r = run({"probe", "--config", cfg, "--pool", path("pool.pool.json"), "--out", path("probe.difficulty.jsonl")});
  CHECK(r.out.rfind("reused", 0) == 0);

  r = run({"select", "--config", cfg, "--estimates", path("probe.difficulty.jsonl"), "--policy", "hardest",
           "--out", path("hardest.selection.json")});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("selected 8") != std::string::npos);

  r = run({"train", "--config", cfg, "--pool", path("pool.pool.json"), "--selection",
           path("hardest.selection.json"), "--out", path("run")});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(path("run/metrics.jsonl")));
  CHECK(fs::exists(path("run/ckpt_20.json")));

  r = run({"eval", "--config", cfg, "--pool", path("pool.pool.json"), "--params", path("run/ckpt_20.json"),
           "--split", "ood", "--k", "4", "--out", path("eval.json")});
  REQUIRE(r.code == kExitOk);
  const auto ev = nlohmann::json::parse(read_file(path("eval.json")));
  CHECK(ev.at("pass_at_k_curve").size() == 4);
  CHECK(run({"eval", "--config", cfg, "--params", path("run/ckpt_20.json"), "--split", "dev"}).code ==
        kExitConfigError);
}

TEST_CASE("experiment and report") {
  fs::create_directories(kDir);
  const std::string cfg = tiny_config();
  auto r = run({"experiment", "--config", cfg, "--out", path("exp")});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("parity ok") != std::string::npos);
  CHECK(r.out.find("mean hardest") != std::string::npos);

  r = run({"report", "--in", path("exp"), "--format", "csv", "--out", path("rep")});
  REQUIRE(r.code == kExitOk);
  CHECK(read_file(path("rep/summary.csv")) == read_file(path("exp/summary.csv")));
  r = run({"report", "--in", path("exp"), "--format", "plotdata", "--out", path("rep")});
  CHECK(r.code == kExitOk);
  CHECK(read_file(path("rep/plotdata.json")) == read_file(path("exp/plotdata.json")));
  CHECK(run({"report", "--in", path("exp"), "--format", "xml"}).code == kExitConfigError);
  fs::remove_all(kDir);
}
