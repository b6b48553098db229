#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "cryoscope/config.hpp"
#include "cryoscope/errors.hpp"
#include "cryoscope/io.hpp"

using namespace cryoscope;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cryoscope_io_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string schema_path(std::string_view text) {
  try {
    parse_config(text);
  } catch (const SchemaError& e) {
    return e.path();
  }
  return "<none>";
}

const char* kFull = R"({
  "flux_model": {"type": "power_law", "a_ghz": 16.9, "k": 2},
  "dephasing": {"gamma0_per_us": 0.0667, "gamma1_phi0": 0.000213, "alpha_exp": 1},
  "chain": [{"type": "low_pass", "tau_ns": 3.0}, {"type": "exp_step", "A": 0.1, "tau_ns": 40.0, "g": 1.0}],
  "pipeline": {"iir": [{"A": 0.1, "tau_ns": 40.0}]},
  "experiment": {"pulse": {"type": "step", "amplitude_phi0": 0.1, "duration_ns": 200},
                 "t_min_ns": 0, "t_max_ns": 50, "noise_sigma": 0.01, "seed": 3},
  "reconstruction": {"sg_window": 7, "sg_order": 2, "nyquist_order": "auto"},
  "calibration": {"cmaes_budget": 2000, "n_filters": 3},
  "snr": {"amplitudes_phi0": [0.1, 0.2], "windows_ns": [[100, 200]], "n_trials": 10}
})";
}  // namespace

TEST_CASE("CSV numbers round-trip exactly") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  CsvTable t{{"a", "b"}, {{}, {}}};
  for (int i = 0; i < 500; ++i) {
    t.data[0].push_back(u(gen));
    t.data[1].push_back(std::ldexp(u(gen), -40));
  }
  t.data[0].push_back(std::numeric_limits<double>::min());
  t.data[1].push_back(0.1);
  const auto back = parse_csv(to_csv(t));
  CHECK(back.columns == t.columns);
  CHECK(back.data == t.data);
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("sidecar hash guards the payload") {
  const auto p = scratch("wave.csv");
  const auto wf = make_step(0.3, 10.0);
  Sidecar sc;
  sc.kind = "waveform";
  sc.seed = 9;
  write_with_sidecar(p, to_table(wf), sc);
  Sidecar got;
  const auto table = read_with_sidecar(p, &got);
  CHECK(got.kind == "waveform");
  CHECK(got.seed == 9);
  CHECK(got.payload_sha256 == sha256_hex(read_file(p)));
  CHECK(waveform_from_table(table).samples == wf.samples);

  std::ofstream(p, std::ios::app) << "99,1\n";
  CHECK_THROWS_AS(read_with_sidecar(p), ConfigError);
}

TEST_CASE("hash of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("trace tables") {
  IdealSignal s;
  for (int i = 0; i < 20; ++i) {
    s.tau.push_back(i / 2.4);
    s.phase.push_back(0.1 * i);
    s.visibility.push_back(0.9);
  }
  const auto tr = sample_trace(s, 0.01, 4);
  const auto back = trace_from_table(parse_csv(to_csv(to_table(tr))));
  CHECK(back.tau == tr.tau);
  CHECK(back.x == tr.x);
  CHECK(back.y == tr.y);
}

TEST_CASE("uniform waveform CSV") {
  const auto p = scratch("plain.csv");
  std::ofstream(p) << "t_ns,value\n0,0\n0.5,1\n1,1\n";
  const auto w = load_waveform_csv(p);
  CHECK(w.sample_rate == doctest::Approx(2.0));
  CHECK(w.samples.size() == 3);
  std::ofstream(p) << "t_ns,value\n0,0\n0.5,1\n1.7,1\n";
  CHECK_THROWS_AS(load_waveform_csv(p), ConfigError);
}

TEST_CASE("schema errors name the offending key") {
  CHECK(schema_path(R"({"flux_modle": {}})") == "flux_modle");
  CHECK(schema_path(R"({"experiment": {"pulse": {"type": "step", "amplitude_phi0": 0.1, "duration_ns": -1},
                        "t_min_ns": 0, "t_max_ns": 10}})") == "experiment.pulse.duration_ns");
  CHECK(schema_path(R"({"chain": [{"type": "low_pass", "tau_ns": 3}, {"type": "exp_step", "A": "x", "tau_ns": 1}]})") ==
        "chain[1].A");
  CHECK(schema_path(R"({"reconstruction": {"sg_window": 4}})").rfind("reconstruction", 0) == 0);
  CHECK(schema_path("{") == "");
  CHECK(schema_path(R"({"pipeline": {"iir": [{"A": -1.5, "tau_ns": 3}]}})") == "pipeline.iir[0]");
}

TEST_CASE("documents round-trip through JSON") {
  const auto doc = parse_config(kFull);
  const auto text = to_json(doc);
  const auto again = parse_config(text);
  CHECK(to_json(again) == text);
  CHECK(doc.reconstruction.nyquist_auto);
  CHECK(doc.calibration.options.cmaes.budget == 2000);
  CHECK(doc.snr->windows.size() == 1);
  const auto a = build_experiment(doc);
  const auto b = build_experiment(again);
  CHECK(a.pulse.samples == b.pulse.samples);
  CHECK(a.truncations == b.truncations);
}

TEST_CASE("pipeline JSON") {
  FilterPipeline p;
  p.iir = {{0.13, 15000.0}, {-0.2, 3.5, IirMode::hardware}};
  FirSpec f = FirSpec::identity();
  f.params[3] = 0.125;
  f.params[39] = -1.0 / 3.0;
  p.fir = f;
  const auto back = pipeline_from_json(pipeline_to_json(p));
  REQUIRE(back.iir.size() == 2);
  CHECK(back.iir[1].A == -0.2);
  CHECK(back.iir[1].mode == IirMode::hardware);
  CHECK(back.fir->params == f.params);
  CHECK_THROWS_AS(pipeline_from_json(R"({"fir": {"params": [1, 0, 0]}})"), SchemaError);
}

TEST_CASE("nominal detuning scales the pulse") {
  auto doc = parse_config(R"({
    "chain": [{"type": "low_pass", "tau_ns": 2.0}],
    "experiment": {"pulse": {"type": "step", "amplitude_phi0": 1.0, "duration_ns": 100},
                   "t_min_ns": 0, "t_max_ns": 40, "nominal_detuning_ghz": 0.5}})");
  const auto cfg = build_experiment(doc);
  double peak = 0.0;
  for (double v : on_chip_flux(cfg, *cfg.t_sep_ns).samples) peak = std::max(peak, v);
  CHECK(detuning_from_flux(doc.flux_model, peak) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("skyline pulse") {
  const auto w = make_skyline({0.1, 0.2}, {1.0, 2.0});
  // 2.4 and 4.8 samples round to 2 and 5.
  REQUIRE(w.size() == 7);
  CHECK(w.samples[1] == 0.1);
  CHECK(w.samples[2] == 0.2);
}

TEST_CASE("session files") {
  const auto doc = parse_config(kFull);
  auto s = build_session(doc);
  IterationRecord r;
  r.stage = "iir";
  r.pipeline.iir = {{0.1, 40.0}};
  r.predicted = 1e-4;
  r.verified = 2e-4;
  r.window = {30.0, 200.0};
  s.log.push_back(r);
  s.pipeline = r.pipeline;
  const auto text = session_to_json(s, doc);
  const auto back = session_from_json(text);
  CHECK(session_to_json(back, session_config(text)) == text);
  CHECK(back.log.size() == 1);
  CHECK(back.log[0].verified == 2e-4);
  CHECK_THROWS_AS(session_config("{}"), SchemaError);
}
