#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lccn/dataset.hpp"
#include "lccn/metrics.hpp"

namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("lccn_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

// Runs the CLI with output captured to a file; returns the exit status.
int cli(const std::string& args, const Sandbox& box, std::string* output = nullptr) {
  const auto log = box.path("last_output.txt");
  const std::string cmd = std::string(LCCN_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli gen") {
  Sandbox box;
  const std::string args = "gen --kind pairwise --r 0.3 --k 4 --n 4000 --seed 7 --out ";
  REQUIRE(cli(args + box.path("a.bin"), box) == 0);
  REQUIRE(cli(args + box.path("b.bin"), box) == 0);
  CHECK(slurp(box.path("a.bin")) == slurp(box.path("b.bin")));
  CHECK(slurp(box.path("a.bin.test")) == slurp(box.path("b.bin.test")));
  const auto manifest = nlohmann::json::parse(slurp(box.path("a.bin.json")));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["true_transition"].size() == 4);
  CHECK(lccn::read_dataset(box.path("a.bin")).num_samples == 4000);

  CHECK(cli("gen --r 1.5 --out " + box.path("c.bin"), box) == 64);
  REQUIRE(cli("gen --kind circular --groups '0,1,2;3,4' --k 5 --n 1000 --r 1 --out " +
                   box.path("c.bin"),
               box) == 0);
  const auto phi = lccn::true_transition(lccn::read_dataset(box.path("c.bin")));
  CHECK(phi(2, 0) == 1.0);
  CHECK(phi(4, 3) == 1.0);
}

TEST_CASE("cli train, eval and report") {
  Sandbox box;
  REQUIRE(cli("gen --kind pairwise --r 0.3 --k 2 --n 2000 --seed 1 --out " + box.path("d.bin"),
               box) == 0);
  {
    std::ofstream cfg(box.path("run.cfg"));
    cfg << "method = lccn\nepochs = 3\npretrain_epochs = 2\nanneal = false\n";
  }
  std::string out;
  const std::string train = "train --config " + box.path("run.cfg") + " --data " + box.path("d.bin");
  REQUIRE(cli(train + " --seed 3 --out-dir " + box.path("r1"), box, &out) == 0);
  CHECK(out.find("accuracy=") != std::string::npos);
  for (const char* f : {"model.bin", "report.jsonl", "transition.csv", "trace.csv", "assignment.csv"}) {
    CHECK(fs::exists(box.dir / "r1" / f));
  }
  REQUIRE(cli(train + " --seed 3 --out-dir " + box.path("r2"), box) == 0);
  CHECK(slurp(box.path("r1/report.jsonl")) == slurp(box.path("r2/report.jsonl")));
  CHECK(slurp(box.path("r1/model.bin")) == slurp(box.path("r2/model.bin")));

  // Flags override the file.
  REQUIRE(cli(train + " --epochs 1 --seed 3 --out-dir " + box.path("r3"), box) == 0);
  CHECK(lccn::load_report(box.path("r3/report.jsonl")).of_type("epoch").size() == 1);

  CHECK(cli(train + " --mode lccn_semi --out-dir " + box.path("r4"), box, &out) == 64);
  CHECK(out.find("clean") != std::string::npos);
  CHECK(cli(train + " --no_such_key 1", box) == 64);
  CHECK(cli(train + " --epochs banana", box) == 64);

  REQUIRE(cli("eval --model " + box.path("r1/model.bin") + " --data " + box.path("d.bin.test"), box,
               &out) == 0);
  CHECK(out.rfind("accuracy=", 0) == 0);

  REQUIRE(cli("report " + box.path("r1/report.jsonl") + " " + box.path("r2/report.jsonl") +
                   " --histogram " + box.path("h.csv"),
               box, &out) == 0);
  CHECK(slurp(box.path("h.csv")).rfind("edge_lo,edge_hi,count\n", 0) == 0);
  CHECK(cli("report " + box.path("r1/report.jsonl") + " " + box.path("r3/report.jsonl"), box) == 64);
}

TEST_CASE("cli oracle") {
  Sandbox box;
  std::string out;
  CHECK(cli("oracle --tv-sweeps 100000", box, &out) == 0);
  CHECK(out.find("max TV") != std::string::npos);
  CHECK(cli("oracle --corrupt --tv-sweeps 0", box, &out) == 1);
  CHECK(out.find("FAIL") != std::string::npos);
  CHECK(cli("oracle --max-n 20", box) == 64);
}

TEST_CASE("cli sweep") {
  Sandbox box;
  REQUIRE(cli("gen --kind pairwise --r 0.3 --k 2 --n 1000 --seed 2 --out " + box.path("d.bin"),
               box) == 0);
  const std::string base = "sweep --method ce --epochs 2 --pretrain_epochs 1 --data " + box.path("d.bin");
  CHECK(cli(base + " --seeds 1 --out-dir " + box.path("s0"), box) == 64);
  std::string out;
  REQUIRE(cli(base + " --seeds 1,2,3 --out-dir " + box.path("s1"), box, &out) == 0);
  CHECK(out.find("test_accuracy") != std::string::npos);
  REQUIRE(cli(base + " --seeds 4,4 --out-dir " + box.path("s2"), box) == 0);
  const auto summary = nlohmann::json::parse(slurp(box.path("s2/summary.json")));
  CHECK(summary["metrics"]["test_accuracy"]["std"] == 0.0);
}
