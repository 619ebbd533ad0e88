// Drives the installed CLI binary end to end; the path arrives via the
// QMI_INFO_CLI environment variable set by CMake.

#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string cli() {
  const char* p = std::getenv("QMI_INFO_CLI");
  REQUIRE(p != nullptr);
  return p;
}

fs::path tmp_dir() {
  const char* p = std::getenv("QMI_INFO_TMP");
  REQUIRE(p != nullptr);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args, const fs::path& stdout_file) {
  const std::string cmd = cli() + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void put(const fs::path& p, const std::string& body) {
  std::ofstream os(p, std::ios::binary);
  os << body;
}

}  // namespace

TEST_CASE("synth: certified run exits 0 and reruns byte-identically") {
  const fs::path dir = tmp_dir();
  put(dir / "synth.json", R"({
    "task": "qstab",
    "system": {"preset": "scalar-1d"},
    "model": {"type": "measurement", "eps": 0.3},
    "data": {"t": 20},
    "seed": 11
  })");
  const int rc1 = run("synth --config " + (dir / "synth.json").string() +
                          " --out " + (dir / "run1").string(),
                      dir / "out1.json");
  const int rc2 = run("synth --config " + (dir / "synth.json").string() +
                          " --out " + (dir / "run2").string(),
                      dir / "out2.json");
  CHECK(rc1 == 0);
  CHECK(rc2 == 0);
  CHECK(slurp(dir / "run1" / "synth.json") == slurp(dir / "run2" / "synth.json"));
  CHECK(slurp(dir / "run1" / "synth.json").size() > 100);
}

TEST_CASE("synth: --seed overrides the config and changes the dataset") {
  const fs::path dir = tmp_dir();
  put(dir / "seeded.json", R"({
    "task": "qstab",
    "system": {"preset": "scalar-1d"},
    "model": {"type": "measurement", "eps": 0.3},
    "data": {"t": 20},
    "seed": 11
  })");
  run("synth --config " + (dir / "seeded.json").string() + " --seed 12 --out " +
          (dir / "run3").string(),
      dir / "out3.json");
  CHECK(slurp(dir / "run1" / "synth.json") != slurp(dir / "run3" / "synth.json"));
}

TEST_CASE("synth feeds verify with zero violations") {
  const fs::path dir = tmp_dir();
  put(dir / "verify.json", std::string(R"({
    "kind": "stabilization",
    "n_samples": 150,
    "seed": 4,
    "input_file": ")") + (dir / "run1" / "synth.json").string() + "\"}");
  const int rc = run("verify --config " + (dir / "verify.json").string(), dir / "vout.json");
  CHECK(rc == 0);
  CHECK(slurp(dir / "vout.json").find("\"violations\": 0") != std::string::npos);
}

TEST_CASE("exit codes: not-certified is 2, malformed config is 4") {
  const fs::path dir = tmp_dir();
  put(dir / "big.json", R"({
    "task": "qstab",
    "system": {"preset": "scalar-1d"},
    "model": {"type": "measurement", "eps": 50.0},
    "data": {"t": 20},
    "seed": 11
  })");
  CHECK(run("synth --config " + (dir / "big.json").string(), dir / "big_out.json") == 2);
  put(dir / "bad.json", "{ this is not json");
  CHECK(run("synth --config " + (dir / "bad.json").string(), dir / "bad_out.json") == 4);
  CHECK(run("synth --config " + (dir / "missing.json").string(), dir / "m_out.json") == 4);
}

TEST_CASE("experiment-a writes schema-tagged artifacts") {
  const fs::path dir = tmp_dir() / "expa";
  put(tmp_dir() / "expa.json", R"({"t": 12, "eps": 0.25, "seed": 9, "samples": 60})");
  const int rc = run("experiment-a --config " + (tmp_dir() / "expa.json").string() +
                         " --out " + dir.string(),
                     tmp_dir() / "expa_out.json");
  CHECK(rc == 0);
  for (const char* name : {"sigma_ellipse.csv", "stab_band.csv", "sigma_samples.csv"}) {
    const std::string body = slurp(dir / name);
    CHECK(body.rfind("# qmi-info csv schema 1", 0) == 0);
  }
  const std::string summary = slurp(dir / "experiment_a.json");
  CHECK(summary.find("\"schema_version\": 1") != std::string::npos);
}
