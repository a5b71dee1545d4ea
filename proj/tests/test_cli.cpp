#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "doctest.h"
#include "hbf/experiments.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kSmall =
    " --set scenario.N_m=8 --set model.D=8 --set model.message_hidden=8 --set model.combine_hidden=8"
    " --set model.rf_hidden=8 --set model.bb_hidden=8 --set mlp.hidden=8 --set training.epochs=2"
    " --set training.train_samples=30 --set training.test_samples=10 --set experiment.baseline_samples=2";

struct Run {
  int status;
  std::string out;
};

Run hbf_cli(const fs::path& dir, const std::string& args) {
  const auto log = dir / "last.log";
  const std::string cmd = "cd '" + dir.string() + "' && '" HBF_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream f(log);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, {std::istreambuf_iterator<char>(f), {}}};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

fs::path only_run_dir(const fs::path& root) {
  fs::path found;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && e.path().filename() != "report") found = e.path();
  return found;
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("gen-data is byte-for-byte reproducible") {
  Scratch s("hbf_cli_gen");
  REQUIRE(hbf_cli(s.dir, "gen-data --out a --seed 3" + kSmall).status == 0);
  REQUIRE(hbf_cli(s.dir, "gen-data --out b --seed 3" + kSmall).status == 0);
  const auto a = only_run_dir(s.dir / "a"), b = only_run_dir(s.dir / "b");
  CHECK(a.filename() == b.filename());
  for (const char* f : {"train.bin", "train.json", "test.bin", "test.json", "config.ini"})
    CHECK(slurp(a / f) == slurp(b / f));
  CHECK(a.filename().string().ends_with("-s3"));
}

TEST_CASE("train then eval reproduces the final learning-curve entry") {
  Scratch s("hbf_cli_train");
  REQUIRE(hbf_cli(s.dir, "train --out runs" + kSmall).status == 0);
  const auto run = only_run_dir(s.dir / "runs");
  std::istringstream curve(slurp(run / "curve.csv"));
  std::string line, last;
  while (std::getline(curve, line))
    if (!line.empty()) last = line;
  const double final_se = std::stod(last.substr(last.rfind(',') + 1));

  REQUIRE(hbf_cli(s.dir, "eval --out runs --set experiment.kind=timing" + kSmall).status == 0);
  const auto rows = hbf::read_csv((run / "metrics-timing.csv").string());
  REQUIRE(!rows.empty());
  CHECK(std::abs(rows.front().mean_sum_se - final_se) < 1e-9);

  // The canonical config written next to the run reproduces its name.
  REQUIRE(hbf_cli(s.dir, "eval --out runs --config '" + (run / "config.ini").string() + "' --set experiment.kind=phase_robustness").status == 0);
  CHECK(fs::exists(run / "metrics-phase_robustness.csv"));

  const auto rep = hbf_cli(s.dir, "report --out runs");
  REQUIRE(rep.status == 0);
  const auto merged = hbf::read_csv((s.dir / "runs" / "report" / "merged.csv").string());
  CHECK(merged.size() >= rows.size());
  CHECK(fs::exists(s.dir / "runs" / "report" / "series.csv"));
}

TEST_CASE("ablate yields the 2x2 grid per structure") {
  Scratch s("hbf_cli_ablate");
  REQUIRE(hbf_cli(s.dir, "ablate --out runs --set training.epochs=1" + kSmall).status == 0);
  const auto rows = hbf::read_csv((only_run_dir(s.dir / "runs") / "ablation.csv").string());
  int fully = 0, partially = 0;
  for (const auto& r : rows) (r.structure == "fully" ? fully : partially) += 1;
  CHECK(fully == 4);
  CHECK(partially == 4);
}

TEST_CASE("baseline writes WMMSE, AltMin and MLP rows") {
  Scratch s("hbf_cli_baseline");
  REQUIRE(hbf_cli(s.dir, "baseline --out runs" + kSmall).status == 0);
  const auto rows = hbf::read_csv((only_run_dir(s.dir / "runs") / "baseline.csv").string());
  CHECK(rows.size() == 5);
}

TEST_CASE("diagnostics and exit codes") {
  Scratch s("hbf_cli_errors");
  const auto bad = hbf_cli(s.dir, "train --set scenario.N_bar=99 --set model.L=0");
  CHECK(bad.status == 2);
  CHECK(bad.out.find("error:") != std::string::npos);
  CHECK(bad.out.find("N_bar") != std::string::npos);
  CHECK(bad.out.find("model.L") != std::string::npos);

  const auto missing = hbf_cli(s.dir, "eval --out nowhere" + kSmall);
  CHECK(missing.status == 3);
  CHECK(missing.out.find("checkpoint") != std::string::npos);

  CHECK(hbf_cli(s.dir, "report --out nowhere").status == 3);
  CHECK(hbf_cli(s.dir, "train --set io.dataset=/no/such/dir" + kSmall).status == 3);
  CHECK(hbf_cli(s.dir, "frobnicate").status != 0);
}
