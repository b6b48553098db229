#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "cryoscope/config.hpp"
#include "cryoscope/io.hpp"

using namespace cryoscope;
namespace fs = std::filesystem;

namespace {
const fs::path kDir = fs::temp_directory_path() / "cryoscope_cli_test";

// Runs the tool with stdout and stderr captured in <dir>/last.log.
int run(const std::string& args) {
  fs::create_directories(kDir);
  const std::string cmd = std::string(CRYOSCOPE_CLI) + " " + args + " > " + (kDir / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string last_log() { return read_file(kDir / "last.log"); }

fs::path write(const std::string& name, const std::string& text) {
  fs::create_directories(kDir);
  const auto p = kDir / name;
  std::ofstream(p) << text;
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

const char* kTypical = R"({
  "chain": [
    {"type": "awg_standin", "rate_per_ns": 38.4, "rise_ns": 0.5, "duration_ns": 5.0},
    {"type": "skin_effect", "alpha_db": 0.1},
    {"type": "exp_step", "A": 0.6, "tau_ns": 2.0}
  ],
  "pipeline": {"iir": [{"A": -0.3, "tau_ns": 2.5}]},
  "experiment": {"pulse": {"type": "step", "amplitude_phi0": 0.1, "duration_ns": 80},
                 "t_min_ns": 0, "t_max_ns": 40}
})";
}  // namespace

TEST_CASE("simulate matches the library bit for bit") {
  for (const char* text : {R"({"experiment": {"pulse": {"type": "step", "amplitude_phi0": 0.1, "duration_ns": 20},
                                              "t_min_ns": 0, "t_max_ns": 10}})",
                           kTypical}) {
    const auto cfg = write("sim.json", text);
    REQUIRE(run("simulate --config " + q(cfg) + " --out " + q(kDir / "sim.csv")) == 0);
    const auto doc = load_config(cfg);
    const auto expected = apply(doc.chain, apply_pipeline(doc.pipeline, build_experiment(doc).pulse));
    const auto got = waveform_from_table(read_with_sidecar(kDir / "sim.csv"));
    CHECK(got.samples == expected.samples);
  }
}

TEST_CASE("malformed config") {
  const auto cfg = write("bad.json", R"({"experiment": {"pulse": {"type": "step", "amplitude_phi0": 0.1,
                                         "duration_ns": 20}, "t_min_ns": 0, "t_max_ns": 10, "nosie_sigma": 0.1}})");
  CHECK(run("cryoscope --config " + q(cfg) + " --out " + q(kDir / "x.csv")) == 2);
  CHECK(last_log().find("experiment.nosie_sigma") != std::string::npos);
  CHECK(run("cryoscope --bogus") == 2);
  CHECK(run("reconstruct --trace " + q(kDir / "missing.csv") + " --out " + q(kDir / "y.csv")) == 2);
}

TEST_CASE("seeded runs are reproducible") {
  const auto sky = write("noisy.json", R"({
    "experiment": {"pulse": {"type": "skyline", "levels_phi0": [0.1, 0.15], "durations_ns": [20, 20]},
                   "t_min_ns": 0, "t_max_ns": 40, "noise_sigma": 0.02, "seed": 1}})");
  REQUIRE(run("cryoscope --config " + q(sky) + " --seed 42 --out " + q(kDir / "a.csv")) == 0);
  REQUIRE(run("cryoscope --config " + q(sky) + " --seed 42 --out " + q(kDir / "b.csv")) == 0);
  CHECK(read_file(kDir / "a.csv") == read_file(kDir / "b.csv"));
  Sidecar sc;
  read_with_sidecar(kDir / "a.csv", &sc);
  CHECK(sc.seed == 42);
  REQUIRE(run("cryoscope --config " + q(sky) + " --seed 43 --out " + q(kDir / "c.csv")) == 0);
  CHECK(read_file(kDir / "a.csv") != read_file(kDir / "c.csv"));
}

TEST_CASE("skyline end to end") {
  const auto sky = fs::path(CRYOSCOPE_DATA_DIR) / "skyline_demo.json";
  REQUIRE(run("cryoscope --config " + q(sky) + " --out " + q(kDir / "sky.csv")) == 0);
  REQUIRE(run("reconstruct --trace " + q(kDir / "sky.csv") + " --out " + q(kDir / "sky_rec.csv")) == 0);
  const auto baseline = parse_csv(read_file(fs::path(CRYOSCOPE_DATA_DIR) / "skyline_baseline.csv"));
  const auto got = read_with_sidecar(kDir / "sky_rec.csv");
  REQUIRE(got.columns == baseline.columns);
  CHECK(got.data == baseline.data);
  REQUIRE(run("plot-data --result " + q(kDir / "sky_rec.csv") + " --out " + q(kDir / "sky_plot.csv")) == 0);
  CHECK(read_with_sidecar(kDir / "sky_plot.csv").rows() == got.rows());
}

TEST_CASE("dead trace") {
  CryoscopeTrace t;
  for (int i = 0; i < 30; ++i) {
    t.tau.push_back(i / 2.4);
    t.x.push_back(0.0);
    t.y.push_back(0.0);
  }
  Sidecar sc;
  sc.kind = "trace";
  write_with_sidecar(kDir / "dead.csv", to_table(t), sc);
  CHECK(run("reconstruct --trace " + q(kDir / "dead.csv") + " --out " + q(kDir / "dead_rec.csv")) == 3);
}

TEST_CASE("calibration session and resume") {
  const auto cfg = write("cal.json", R"({
    "chain": [{"type": "exp_step", "A": 0.05, "tau_ns": 60.0}],
    "calibration": {"n_filters": 1, "cmaes_budget": 2000}})");
  const auto session = kDir / "session.json";
  fs::remove(session);
  REQUIRE(run("calibrate --config " + q(cfg) + " --out " + q(session)) == 0);
  const auto before = read_file(session);
  const auto pipeline = pipeline_from_json(read_file(kDir / "session.pipeline.json"));
  CHECK(pipeline.iir.size() == 1);
  CHECK(run("calibrate --resume --out " + q(session)) == 0);
  CHECK(last_log().find("already converged") != std::string::npos);
  CHECK(read_file(session) == before);
  CHECK(run("calibrate --resume --config " + q(cfg) + " --out " + q(session)) == 2);
  REQUIRE(run("plot-data --session " + q(session) + " --out " + q(kDir / "cal_plot.csv")) == 0);
}

TEST_CASE("calibration that cannot converge") {
  const auto cfg = write("cal_hard.json", R"({
    "chain": [{"type": "exp_step", "A": 0.6, "tau_ns": 2.0}, {"type": "exp_step", "A": 0.3, "tau_ns": 80.0}],
    "calibration": {"n_filters": 1, "cmaes_budget": 1000, "max_iterations": 1, "target": 1e-6}})");
  CHECK(run("calibrate --config " + q(cfg) + " --out " + q(kDir / "hard.json")) == 4);
  CHECK(fs::exists(kDir / "hard.json"));
}

TEST_CASE("SNR grid") {
  const auto cfg = write("snr.json", R"({
    "dephasing": {"gamma0_per_us": 0.0667, "gamma1_phi0": 0.000213},
    "snr": {"amplitudes_phi0": [0.1, 0.2], "windows_ns": [[100, 200], [600, 700]], "n_trials": 20, "seed": 1}})");
  REQUIRE(run("snr --config " + q(cfg) + " --out " + q(kDir / "snr.csv")) == 0);
  CHECK(last_log().find("fit:") != std::string::npos);
  const auto t = read_with_sidecar(kDir / "snr.csv");
  CHECK(t.rows() == 4);
  for (double v : t.column("snr")) CHECK(v > 0.0);
  REQUIRE(run("plot-data --snr " + q(kDir / "snr.csv") + " --out " + q(kDir / "snr_plot.csv")) == 0);
}
