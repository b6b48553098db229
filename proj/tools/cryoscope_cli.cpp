// cryoscope: command-line front end.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 configuration or schema error,
// 3 domain or physics error, 4 calibration not converged.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cryoscope/calibration.hpp"
#include "cryoscope/config.hpp"
#include "cryoscope/errors.hpp"
#include "cryoscope/io.hpp"
#include "cryoscope/lti.hpp"
#include "cryoscope/reconstruction.hpp"
#include "cryoscope/rt_filters.hpp"
#include "cryoscope/snr.hpp"
#include "cryoscope/virtual_cryoscope.hpp"

namespace fs = std::filesystem;
using namespace cryoscope;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPhysics = 3;
constexpr int kExitNotConverged = 4;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> mode;
};

IirMode parse_mode(const std::string& m) {
  if (m == "ideal") return IirMode::ideal;
  if (m == "hardware") return IirMode::hardware;
  throw ConfigError("--mode must be ideal or hardware");
}

ConfigDocument load(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  auto doc = load_config(c.config);
  if (c.mode) {
    doc.pipeline = with_mode(doc.pipeline, parse_mode(*c.mode));
    doc.calibration.options.mode = parse_mode(*c.mode);
  }
  if (c.seed) {
    if (doc.experiment) doc.experiment->seed = *c.seed;
    if (doc.snr) doc.snr->seed = *c.seed;
    doc.calibration.measurement.seed = *c.seed;
  }
  return doc;
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  return c.out;
}

// out.csv -> out.<index>.csv
fs::path indexed(const fs::path& out, std::size_t index) {
  auto p = out;
  p.replace_extension("." + std::to_string(index) + out.extension().string());
  return p;
}

double peak_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

int cmd_simulate(const Common& c, const std::string& input) {
  auto doc = load(c);
  Waveform wf;
  if (!input.empty()) {
    wf = load_waveform_csv(input);
    if (wf.t0 != 0.0) throw ConfigError("input waveform must start at t = 0");
    // Keep the input in the recorded document so the sidecar alone
    // reproduces the output.
    if (!doc.experiment) {
      doc.experiment.emplace();
      doc.experiment->t_max_ns = wf.time(wf.size() - 1);
    }
    doc.experiment->pulse = PulseSpec{};
    doc.experiment->pulse.kind = PulseSpec::Kind::samples;
    doc.experiment->pulse.samples = wf;
    doc.experiment->nominal_detuning_ghz.reset();
  } else {
    if (!doc.experiment) throw ConfigError("simulate needs --input or an experiment section");
    wf = build_experiment(doc).pulse;
  }
  const auto out = apply(doc.chain, apply_pipeline(doc.pipeline, wf));
  Sidecar sc;
  sc.kind = "waveform";
  sc.config_json = to_json(doc);
  write_with_sidecar(require_out(c), to_table(out, "phi_phi0"), sc);
  return kExitOk;
}

int cmd_cryoscope(const Common& c) {
  const auto doc = load(c);
  const auto cfg = build_experiment(doc);
  const auto trace = simulate_trace(cfg);
  Sidecar sc;
  sc.kind = "trace";
  sc.seed = cfg.seed;
  sc.config_json = to_json(doc);
  write_with_sidecar(require_out(c), to_table(trace), sc);
  return kExitOk;
}

int cmd_reconstruct(const Common& c, const std::vector<std::string>& trace_files) {
  if (trace_files.empty()) throw ConfigError("at least one --trace is required");
  std::vector<CryoscopeTrace> traces;
  std::vector<Sidecar> sidecars;
  for (const auto& f : trace_files) {
    Sidecar sc;
    auto t = trace_from_table(read_with_sidecar(f, &sc));
    t.seed = sc.seed;
    traces.push_back(std::move(t));
    sidecars.push_back(sc);
  }
  // Without --config the settings recorded with the first trace are used.
  ConfigDocument doc = c.config.empty() ? parse_config(sidecars.front().config_json) : load(c);
  auto rc = build_reconstruction(doc);
  std::vector<int> orders(traces.size(), rc.nyquist_order);
  if (doc.reconstruction.nyquist_auto) {
    if (traces.size() < 2) {
      throw ConfigError("reconstruction.nyquist_order \"auto\" needs traces at two or more amplitudes");
    }
    orders = nyquist_order_scan(traces, rc);
  }
  const auto out = require_out(c);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    auto r = rc;
    r.nyquist_order = orders[i];
    const auto result = reconstruct(traces[i], r);
    Sidecar sc;
    sc.kind = "reconstruction";
    sc.seed = traces[i].seed;
    // The trace's own document (experiment included) with the settings used.
    auto recorded = parse_config(sidecars[i].config_json);
    recorded.flux_model = doc.flux_model;
    recorded.reconstruction = doc.reconstruction;
    recorded.reconstruction.config.nyquist_order = orders[i];
    recorded.reconstruction.nyquist_auto = false;
    sc.config_json = to_json(recorded);
    const auto path = traces.size() == 1 ? out : indexed(out, i);
    write_with_sidecar(path, to_table(result), sc);
    if (result.clipped > 0) {
      std::cerr << path.string() << ": " << result.clipped << " sample(s) clipped to the model range\n";
    }
  }
  return kExitOk;
}

fs::path pipeline_path(const fs::path& session) {
  auto p = session;
  p.replace_extension(".pipeline.json");
  return p;
}

int cmd_calibrate(const Common& c, bool resume) {
  const auto out = require_out(c);
  CalibrationSession session;
  ConfigDocument doc;
  if (resume) {
    // A resumed session keeps the document it was started with.
    if (!c.config.empty()) throw ConfigError("--resume takes its settings from the session; drop --config");
    if (!fs::exists(out)) throw ConfigError("--resume: no session at " + out.string());
    const auto text = read_file(out);
    session = session_from_json(text);
    doc = session_config(text);
    if (session.converged) {
      std::cout << "session already converged; nothing to do\n";
      return kExitOk;
    }
  } else {
    doc = load(c);
    session = build_session(doc);
  }
  calibrate(session);
  write_file_atomic(out, session_to_json(session, doc) + "\n");
  write_file_atomic(pipeline_path(out), pipeline_to_json(session.pipeline) + "\n");
  const auto& last = session.log.back();
  std::cout << "stages: " << session.log.size() << ", last stage " << last.stage << ", verified max|s-1| "
            << last.verified << (session.converged ? " (converged)" : " (NOT converged)") << "\n";
  if (!session.converged) {
    std::cerr << "calibration did not reach the target " << session.options.target << " within "
              << session.options.max_iterations << " FIR iteration(s)\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_snr(const Common& c) {
  const auto doc = load(c);
  if (!doc.snr) throw ConfigError("snr needs an snr section");
  const auto& s = *doc.snr;
  const DephasingParams deph = doc.dephasing.value_or(DephasingParams{});
  auto rc = build_reconstruction(doc);
  std::vector<SnrMeasurement> grid;
  std::uint64_t index = 0;
  for (const auto& w : s.windows) {
    for (double amp : s.amplitudes_phi0) {
      const auto cfg = snr_experiment(amp, w, s.noise_sigma, s.seed + index++, doc.flux_model, deph);
      grid.push_back(measure_snr(cfg, rc, w, s.n_trials));
    }
  }
  CsvTable t{{"phi_phi0", "t_min_ns", "t_max_ns", "snr", "mean_phi0", "std_phi0", "capped"}, {}};
  t.data.resize(t.columns.size());
  for (const auto& m : grid) {
    t.data[0].push_back(m.amplitude);
    t.data[1].push_back(m.window.t_min_ns);
    t.data[2].push_back(m.window.t_max_ns);
    t.data[3].push_back(m.snr);
    t.data[4].push_back(m.mean);
    t.data[5].push_back(m.std);
    t.data[6].push_back(m.capped ? 1.0 : 0.0);
  }
  Sidecar sc;
  sc.kind = "snr";
  sc.seed = s.seed;
  sc.config_json = to_json(doc);
  write_with_sidecar(require_out(c), t, sc);
  try {
    SnrModelParams fixed;
    if (const auto* pl = std::get_if<PowerLawModel>(&doc.flux_model)) fixed.a = pl->a;
    fixed.gamma0 = deph.gamma0;
    const auto fit = fit_snr(grid, fixed);
    std::cout << "fit: a_snr = " << fit.a_snr << ", gamma1 = " << fit.gamma1 << " Phi0\n";
  } catch (const IdentifiabilityError& e) {
    std::cout << "no fit: " << e.what() << "\n";
  }
  return kExitOk;
}

// Normalised curves for external plotting.
int cmd_plot_data(const Common& c, const std::string& session_file, const std::string& result_file,
                  const std::string& snr_file) {
  const auto out = require_out(c);
  const int given = !session_file.empty() + !result_file.empty() + !snr_file.empty();
  if (given != 1) throw ConfigError("plot-data needs exactly one of --session, --result, --snr");
  CsvTable t;
  Sidecar sc;
  if (!session_file.empty()) {
    // Step responses per calibration stage.
    const auto s = session_from_json(read_file(session_file));
    for (const auto& r : s.log) {
      if (!r.measured) continue;
      if (t.columns.empty()) {
        t.columns.push_back("t_ns");
        t.data.push_back(time_axis(*r.measured));
      }
      t.columns.push_back(r.stage + "_" + std::to_string(t.columns.size() - 1));
      t.data.push_back(r.measured->samples);
    }
    if (t.columns.empty()) throw ConfigError("session has no measured step responses");
    sc.kind = "plot-step";
  } else if (!result_file.empty()) {
    // Reconstructed and true flux, both divided by the largest true flux.
    Sidecar rs;
    const auto r = read_with_sidecar(result_file, &rs);
    const auto doc = parse_config(rs.config_json);
    const auto& tt = r.column("t_ns");
    const auto& phi = r.column("phi_phi0");
    std::vector<double> truth(tt.size(), 0.0);
    if (doc.experiment) {
      const auto cfg = build_experiment(doc);
      const auto q = on_chip_flux(cfg, tt.back());
      for (std::size_t i = 0; i < truth.size() && i < q.size(); ++i) truth[i] = q.samples[i];
    }
    const double norm = peak_abs(truth) > 0.0 ? peak_abs(truth) : peak_abs(phi);
    std::vector<double> pr(phi.size()), pq(truth.size());
    for (std::size_t i = 0; i < phi.size(); ++i) pr[i] = phi[i] / norm;
    for (std::size_t i = 0; i < truth.size(); ++i) pq[i] = truth[i] / norm;
    t = CsvTable{{"t_ns", "phi_r_norm", "phi_q_norm"}, {tt, pr, pq}};
    sc.kind = "plot-flux";
    sc.seed = rs.seed;
    sc.config_json = rs.config_json;
  } else {
    // SNR grid, each window scaled by its largest value.
    Sidecar ss;
    const auto g = read_with_sidecar(snr_file, &ss);
    const auto& lo = g.column("t_min_ns");
    const auto& snr = g.column("snr");
    std::vector<double> norm(snr.size());
    for (std::size_t i = 0; i < snr.size(); ++i) {
      double m = 0.0;
      for (std::size_t j = 0; j < snr.size(); ++j) {
        if (lo[j] == lo[i]) m = std::max(m, snr[j]);
      }
      norm[i] = m > 0.0 ? snr[i] / m : 0.0;
    }
    t = CsvTable{{"phi_phi0", "t_min_ns", "t_max_ns", "snr", "snr_norm"},
                 {g.column("phi_phi0"), lo, g.column("t_max_ns"), snr, norm}};
    sc.kind = "plot-snr";
    sc.seed = ss.seed;
    sc.config_json = ss.config_json;
  }
  write_with_sidecar(out, t, sc);
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool seed, bool mode) {
  sub->add_option("--config", c.config, "JSON config document");
  sub->add_option("--out", c.out, "output path");
  if (seed) sub->add_option("--seed", c.seed, "overrides the seeds in the config");
  if (mode) sub->add_option("--mode", c.mode, "IIR evaluation mode (ideal|hardware)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual Cryoscope: simulate, reconstruct and calibrate flux pulses"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common c;
  std::string input;
  std::vector<std::string> traces;
  bool resume = false;
  std::string session_file, result_file, snr_file;

  auto* sim = app.add_subcommand("simulate", "pass a waveform through the pipeline and control line");
  add_common(sim, c, false, true);
  sim->add_option("--input", input, "two-column CSV (t_ns, value); default: the experiment pulse");

  auto* cry = app.add_subcommand("cryoscope", "run a virtual Cryoscope experiment");
  add_common(cry, c, true, true);

  auto* rec = app.add_subcommand("reconstruct", "reconstruct flux from trace files");
  add_common(rec, c, false, false);
  rec->add_option("--trace", traces, "trace CSV (repeat for a Nyquist scan)")->required();

  auto* cal = app.add_subcommand("calibrate", "fit IIR and FIR predistortion for the configured plant");
  add_common(cal, c, true, true);
  cal->add_flag("--resume", resume, "continue the session stored at --out");

  auto* snr = app.add_subcommand("snr", "SNR grid over amplitudes and windows");
  add_common(snr, c, true, false);

  auto* plot = app.add_subcommand("plot-data", "normalised curves for plotting");
  add_common(plot, c, false, false);
  plot->add_option("--session", session_file, "calibration session");
  plot->add_option("--result", result_file, "reconstruction file");
  plot->add_option("--snr", snr_file, "SNR grid file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  set_warning_handler([](std::string_view msg) { std::cerr << "warning: " << msg << "\n"; });
  try {
    if (*sim) return cmd_simulate(c, input);
    if (*cry) return cmd_cryoscope(c);
    if (*rec) return cmd_reconstruct(c, traces);
    if (*cal) return cmd_calibrate(c, resume);
    if (*snr) return cmd_snr(c);
    if (*plot) return cmd_plot_data(c, session_file, result_file, snr_file);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NotConvergedError& e) {
    std::cerr << "not converged: " << e.what() << "\n";
    return kExitNotConverged;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return kExitPhysics;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return kExitPhysics;
  } catch (const InstabilityError& e) {
    std::cerr << "unstable filter: " << e.what() << "\n";
    return kExitPhysics;
  } catch (const SignalTooWeakError& e) {
    std::cerr << "signal too weak: " << e.what() << "\n";
    return kExitPhysics;
  } catch (const IdentifiabilityError& e) {
    std::cerr << "not identifiable: " << e.what() << "\n";
    return kExitPhysics;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
