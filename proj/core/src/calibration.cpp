#include "cryoscope/calibration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "cryoscope/errors.hpp"
#include "cryoscope/virtual_cryoscope.hpp"

namespace cryoscope {
namespace {

constexpr double kMinA = -0.9;
constexpr double kMaxA = 5.0;
constexpr double kMaxTau = 1e6;

void require_awg_rate(const Waveform& wf) {
  if (std::abs(wf.sample_rate - kAwgSampleRate) > 1e-12 * kAwgSampleRate) {
    std::ostringstream os;
    os << "sample-rate mismatch: step response at " << wf.sample_rate << "/ns, filters run at " << kAwgSampleRate
       << "/ns";
    throw ConfigError(os.str());
  }
}

// Inclusive sample range of a window.
std::pair<std::size_t, std::size_t> window_range(const Waveform& wf, TimeWindow w) {
  if (!(w.t_max_ns > w.t_min_ns)) throw ConfigError("window must have t_max > t_min");
  const std::size_t lo = index_at_or_after(wf, w.t_min_ns);
  std::size_t hi = index_at_or_after(wf, w.t_max_ns);
  if (hi >= wf.size() || wf.time(hi) > w.t_max_ns + 1e-9) {
    if (hi == 0) throw ConfigError("window lies before the step response");
    --hi;
  }
  if (lo > hi || hi >= wf.size()) throw ConfigError("window lies outside the step response");
  return {lo, hi};
}

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LmResult {
  Eigen::VectorXd p;
  double cost = 0.0;
  bool converged = false;
};

// Levenberg-Marquardt on a box, forward-difference Jacobian.
LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd p, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi, int max_iter = 200) {
  auto clamp = [&](Eigen::VectorXd v) { return v.cwiseMax(lo).cwiseMin(hi); };
  p = clamp(p);
  Eigen::VectorXd r = fn(p);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  LmResult out{p, cost, false};
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd J(r.size(), p.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      Eigen::VectorXd q = p;
      double h = 1e-7 * std::max(1.0, std::abs(p(j)));
      if (q(j) + h > hi(j)) h = -h;
      q(j) += h;
      J.col(j) = (fn(q) - r) / h;
    }
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = a.ldlt().solve(-g);
      const Eigen::VectorXd cand = clamp(p + step);
      const Eigen::VectorXd rc = fn(cand);
      const double cc = rc.squaredNorm();
      if (std::isfinite(cc) && cc < cost) {
        const double gain = (cost - cc) / std::max(cost, 1e-300);
        const double move = (cand - p).norm() / (p.norm() + 1e-12);
        p = cand;
        r = rc;
        cost = cc;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (gain < 1e-12 || move < 1e-12) {
          out = {p, cost, true};
          return out;
        }
      } else {
        lambda *= 4.0;
      }
    }
    if (!improved) {
      out = {p, cost, true};
      return out;
    }
  }
  out = {p, cost, false};
  return out;
}

// Parameters laid out as (A_0, log tau_0, A_1, log tau_1, ...).
FilterPipeline pipeline_from(const Eigen::VectorXd& p, IirMode mode) {
  FilterPipeline fp;
  for (Eigen::Index i = 0; i + 1 < p.size(); i += 2) fp.iir.push_back({p(i), std::exp(p(i + 1)), mode});
  return fp;
}

struct IirProblem {
  Waveform step;  // cut after the window
  std::size_t lo = 0;
  std::size_t hi = 0;
  IirMode mode = IirMode::ideal;

  // Corrected step over the window and its least-squares gain.
  std::pair<Eigen::VectorXd, double> corrected(const Eigen::VectorXd& p) const {
    const auto c = predict_corrected_step(step, pipeline_from(p, mode));
    const auto n = static_cast<Eigen::Index>(hi - lo + 1);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = c.samples[lo + static_cast<std::size_t>(i)];
    const double den = v.squaredNorm();
    const double g = den > 0.0 ? v.sum() / den : 1.0;
    return {v, g};
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& p) const {
    auto [v, g] = corrected(p);
    return (g * v).array() - 1.0;
  }
};

double rms(const Eigen::VectorXd& r) { return r.size() ? std::sqrt(r.squaredNorm() / static_cast<double>(r.size())) : 0.0; }

}  // namespace

Waveform predict_corrected_step(const Waveform& step, const FilterPipeline& pipeline) {
  validate(step);
  require_awg_rate(step);
  if (pipeline.empty()) return step;
  return apply_pipeline(pipeline, step);
}

std::size_t step_edge(const Waveform& step) {
  validate(step);
  const std::size_t n = step.size();
  const std::size_t tail = std::max<std::size_t>(1, n / 4);
  double level = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) level += step.samples[i];
  level /= static_cast<double>(tail);
  const double half = 0.5 * level;
  for (std::size_t i = 0; i < n; ++i) {
    if (level >= 0.0 ? step.samples[i] >= half : step.samples[i] <= half) return i;
  }
  return 0;
}

Waveform normalize_step(const Waveform& step, TimeWindow window) {
  const auto [lo, hi] = window_range(step, window);
  double mean = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) mean += step.samples[i];
  mean /= static_cast<double>(hi - lo + 1);
  if (mean == 0.0 || !std::isfinite(mean)) throw SignalTooWeakError("step response has zero mean over the normalisation window");
  Waveform out = step;
  for (double& v : out.samples) v /= mean;
  return out;
}

double max_deviation(const Waveform& step, TimeWindow window) {
  const auto [lo, hi] = window_range(step, window);
  double m = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) m = std::max(m, std::abs(step.samples[i] - 1.0));
  return m;
}

double rms_deviation(const Waveform& step, TimeWindow window) {
  const auto [lo, hi] = window_range(step, window);
  double acc = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) acc += (step.samples[i] - 1.0) * (step.samples[i] - 1.0);
  return std::sqrt(acc / static_cast<double>(hi - lo + 1));
}

IirFitResult fit_iir(const Waveform& step, int n_filters, TimeWindow window, IirMode mode) {
  if (n_filters < 1 || n_filters > 8) throw ConfigError("n_filters must be between 1 and 8");
  validate(step);
  require_awg_rate(step);
  if (window.t_min_ns < step.t0) throw ConfigError("fit window starts before the step response");
  IirProblem prob;
  const auto [lo, hi] = window_range(step, window);
  prob.step = step;
  prob.step.samples.resize(hi + 1);
  prob.lo = lo;
  prob.hi = hi;
  prob.mode = mode;

  const double tau_min = std::max(1.0, 0.1 * window.t_min_ns);
  Eigen::VectorXd params(0);
  bool converged = true;
  double upper_tau = kMaxTau;

  for (int k = 0; k < n_filters; ++k) {
    const Eigen::Index m = params.size();
    Eigen::VectorXd trial(m + 2);
    trial.head(m) = params;

    // Scan time constants below the previous filter's; the best amplitude for
    // each comes from a one-parameter linearisation around A = 0.
    double best_cost = std::numeric_limits<double>::infinity();
    Eigen::Vector2d best(0.0, std::log(upper_tau));
    const int scan = 48;
    for (int s = 0; s < scan; ++s) {
      const double frac = static_cast<double>(s) / static_cast<double>(scan - 1);
      const double tau = std::exp(std::log(upper_tau) + frac * (std::log(tau_min) - std::log(upper_tau)));
      trial(m) = 0.0;
      trial(m + 1) = std::log(tau);
      const Eigen::VectorXd r0 = prob.residual(trial);
      const double h = 1e-4;
      trial(m) = h;
      const Eigen::VectorXd jac = (prob.residual(trial) - r0) / h;
      const double den = jac.squaredNorm();
      double a = den > 0.0 ? -jac.dot(r0) / den : 0.0;
      a = std::clamp(a, kMinA, kMaxA);
      trial(m) = a;
      const double cost = prob.residual(trial).squaredNorm();
      if (cost < best_cost) {
        best_cost = cost;
        best = {a, std::log(tau)};
      }
    }

    // Refine the new filter alone, then everything together.
    auto single = [&](const Eigen::VectorXd& q) {
      Eigen::VectorXd full(m + 2);
      full.head(m) = params;
      full.tail(2) = q;
      return prob.residual(full);
    };
    const Eigen::Vector2d lo2(kMinA, std::log(tau_min));
    const Eigen::Vector2d hi2(kMaxA, std::log(upper_tau));
    const auto one = levenberg_marquardt(single, best, lo2, hi2);
    trial.tail(2) = one.p;

    Eigen::VectorXd lo_all(m + 2), hi_all(m + 2);
    for (Eigen::Index i = 0; i < m + 2; i += 2) {
      lo_all(i) = kMinA;
      hi_all(i) = kMaxA;
      lo_all(i + 1) = std::log(tau_min);
      hi_all(i + 1) = std::log(kMaxTau);
    }
    const auto joint = levenberg_marquardt([&](const Eigen::VectorXd& q) { return prob.residual(q); }, trial, lo_all,
                                           hi_all);
    params = joint.p;
    converged = joint.converged && one.converged;
    upper_tau = kMaxTau;
    for (Eigen::Index i = 1; i < params.size(); i += 2) upper_tau = std::min(upper_tau, std::exp(params(i)));
    upper_tau = std::max(upper_tau * 0.999, tau_min * 1.001);
  }

  IirFitResult out;
  out.window = window;
  out.converged = converged;
  auto fp = pipeline_from(params, mode);
  std::sort(fp.iir.begin(), fp.iir.end(), [](const IirExpSpec& a, const IirExpSpec& b) { return a.tau_ns > b.tau_ns; });
  out.specs = fp.iir;
  const auto r = prob.residual(params);
  out.residual = rms(r);
  out.gain = prob.corrected(params).second;
  return out;
}

double fir_objective(const FirSpec& fir, const Waveform& step, const std::vector<double>& bias,
                     const FirObjectiveOptions& options) {
  if (!bias.empty() && bias.size() != step.size()) throw ShapeError("model-error term must match the step length");
  const std::size_t edge = step_edge(step);
  const double rate = step.sample_rate;
  const std::size_t a_end = std::min(step.size(), edge + static_cast<std::size_t>(std::floor(options.window_ns * rate)) + 1);
  const std::size_t b_end =
      std::min(step.size(), edge + static_cast<std::size_t>(std::floor(options.flat_until_ns * rate)) + 1);
  Waveform head = step;
  head.samples.resize(b_end);
  const auto pred = apply_fir(fir, head);
  double sa = 0.0;
  double sb = 0.0;
  for (std::size_t i = edge; i < b_end; ++i) {
    double e = pred.samples[i] - 1.0;
    if (!bias.empty()) e += bias[i];
    if (i < a_end) {
      sa += e * e;
    } else {
      sb += e * e;
    }
  }
  const double na = static_cast<double>(a_end - edge);
  const double nb = static_cast<double>(b_end - a_end);
  double obj = std::sqrt(sa / std::max(na, 1.0));
  if (nb > 0.0) obj += options.flat_weight * std::sqrt(sb / nb);
  return obj;
}

FirFitResult fit_fir_cmaes(const Waveform& step_after_iir, const FirObjectiveOptions& objective,
                           const CmaesOptions& optimizer, const std::vector<double>& bias, const FirSpec& start) {
  validate(step_after_iir);
  require_awg_rate(step_after_iir);
  if (optimizer.budget < 1000) throw ConfigError("CMA-ES budget must be at least 1000 evaluations");
  // The search runs in step-response coordinates: z[i] is the running sum of
  // the taps set by params 0..i, i.e. the corrected ideal step just after
  // that group of taps. Parameters act on a step as nearly collinear shifted
  // steps; their running sums are close to independent, so the sampler does
  // not have to learn that correlation first.
  auto weight = [](std::size_t i) { return i < kFirDirectTaps ? 1.0 : 2.0; };
  Eigen::VectorXd x0(static_cast<Eigen::Index>(kFirParamCount));
  double acc = 0.0;
  for (std::size_t i = 0; i < kFirParamCount; ++i) {
    acc += weight(i) * start.params[i];
    x0(static_cast<Eigen::Index>(i)) = acc;
  }
  auto to_spec = [&](const Eigen::VectorXd& z) {
    FirSpec s;
    double prev = 0.0;
    for (std::size_t i = 0; i < kFirParamCount; ++i) {
      const double zi = z(static_cast<Eigen::Index>(i));
      s.params[i] = (zi - prev) / weight(i);
      prev = zi;
    }
    return s;
  };
  const auto f = [&](const Eigen::VectorXd& x) { return fir_objective(to_spec(x), step_after_iir, bias, objective); };
  FirFitResult out;
  out.optimizer = cmaes_minimize(f, x0, optimizer);
  out.spec = to_spec(out.optimizer.best_x);
  out.history = out.optimizer.history;
  out.initial_objective = out.optimizer.initial_f;
  out.objective = out.optimizer.best_f;
  out.evaluations = out.optimizer.evaluations;
  out.converged = out.optimizer.converged;
  return out;
}

DistortionChain plant_chain(const Plant& plant) {
  if (const auto* chain = std::get_if<DistortionChain>(&plant)) return *chain;
  const auto& step = std::get<Waveform>(plant);
  validate(step);
  if (step.t0 != 0.0) throw ConfigError("plant step response must start at t0 = 0");
  std::vector<double> h(step.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < step.size(); ++i) {
    h[i] = step.samples[i] - prev;
    prev = step.samples[i];
  }
  DistortionChain c;
  c.models.emplace_back(MeasuredImpulse{Waveform{std::move(h), step.sample_rate, 0.0}});
  return c;
}

Waveform measure_step(const DistortionChain& plant, const FilterPipeline& pipeline, const MeasurementSetup& setup) {
  if (!(setup.amplitude_phi0 > 0.0)) throw ConfigError("measurement amplitude must be positive");
  if (!(setup.t_max_ns > setup.normalize.t_max_ns)) throw ConfigError("measurement must extend past the normalisation window");
  ExperimentConfig cfg;
  const auto n = static_cast<std::size_t>(std::floor(setup.t_max_ns * kAwgSampleRate)) + 1;
  cfg.truncations = truncation_grid(n);
  cfg.t_sep_ns = cfg.truncations.back() + 100.0;
  // The step is scaled so that the predistorted drive holds the nominal
  // amplitude over the normalisation window; a corrector with a slow rise
  // would otherwise shrink the detuning the experiment sees.
  double level = 1.0;
  if (!pipeline.empty()) {
    const auto driven = apply_pipeline(pipeline, make_step(1.0, *cfg.t_sep_ns + 1.0));
    const auto [lo, hi] = window_range(driven, setup.normalize);
    level = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) level += driven.samples[i];
    level /= static_cast<double>(hi - lo + 1);
    if (!(level > 0.0)) throw InstabilityError("pipeline inverts or cancels the calibration step");
  }
  cfg.pulse = make_step(setup.amplitude_phi0 / level, *cfg.t_sep_ns + 1.0);
  cfg.noise_sigma = setup.noise_sigma;
  cfg.seed = setup.seed;
  cfg.flux_model = setup.flux_model;
  cfg.chain = plant;
  cfg.predistortion = pipeline;
  if (setup.averages < 1) throw ConfigError("averages must be at least 1");
  const auto ideal = compute_ideal_signal(cfg);
  auto trace = sample_trace(ideal, setup.noise_sigma, setup.seed);
  // Repetitions draw from their own seed streams; their quadratures are
  // averaged before reconstruction.
  for (int r = 1; r < setup.averages; ++r) {
    const auto rep = sample_trace(ideal, setup.noise_sigma, setup.seed + (std::uint64_t{0x9E3779B97F4A7C15} * r));
    for (std::size_t i = 0; i < trace.x.size(); ++i) {
      trace.x[i] += rep.x[i];
      trace.y[i] += rep.y[i];
    }
  }
  if (setup.averages > 1) {
    for (std::size_t i = 0; i < trace.x.size(); ++i) {
      trace.x[i] /= setup.averages;
      trace.y[i] /= setup.averages;
    }
  }
  trace.config = cfg;

  ReconstructionConfig rc;
  rc.sg_window = setup.sg_window;
  rc.sg_order = setup.sg_order;
  rc.flux_model = setup.flux_model;
  rc.range_policy = RangePolicy::clip;
  const auto rec = reconstruct(trace, rc);
  Waveform s{rec.phi_r, kAwgSampleRate, 0.0};
  return normalize_step(s, setup.normalize);
}

FilterPipeline calibrate(CalibrationSession& session) {
  if (session.converged) return session.pipeline;
  const auto& opt = session.options;
  if (opt.max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  const auto chain = plant_chain(session.plant);
  auto setup_for = [&](std::size_t index) {
    MeasurementSetup s = session.measurement;
    s.seed = session.measurement.seed + index;
    return s;
  };
  auto find = [&](const std::string& stage) -> const IterationRecord* {
    for (const auto& r : session.log) {
      if (r.stage == stage) return &r;
    }
    return nullptr;
  };

  if (!find("measure")) {
    IterationRecord rec;
    rec.stage = "measure";
    rec.measured = measure_step(chain, {}, setup_for(session.log.size()));
    rec.window = opt.verify_window;
    rec.verified = max_deviation(*rec.measured, opt.verify_window);
    session.log.push_back(rec);
    if (rec.verified < opt.target) {
      session.pipeline = {};
      session.converged = true;
      return session.pipeline;
    }
  }

  if (!find("iir")) {
    const auto fit = fit_iir(*find("measure")->measured, opt.n_filters, opt.iir_window, opt.mode);
    FilterPipeline fp;
    fp.iir = fit.specs;
    IterationRecord rec;
    rec.stage = "iir";
    rec.pipeline = fp;
    rec.predicted = fit.residual;
    rec.fit_converged = fit.converged;
    rec.window = opt.iir_window;
    rec.measured = measure_step(chain, fp, setup_for(session.log.size()));
    rec.verified = max_deviation(*rec.measured, opt.iir_window);
    session.pipeline = fp;
    session.log.push_back(rec);
    if (max_deviation(*rec.measured, opt.verify_window) < opt.target) {
      session.converged = true;
      return session.pipeline;
    }
  }

  // At the cap the session keeps whichever pipeline measured best.
  auto keep_best = [&] {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : session.log) {
      const double v = max_deviation(*r.measured, opt.verify_window);
      if (v < best) {
        best = v;
        session.pipeline = r.pipeline;
      }
    }
  };

  const IterationRecord iir = *find("iir");
  const Waveform& after_iir = *iir.measured;
  while (true) {
    const IterationRecord* last = nullptr;
    int done = 0;
    for (const auto& r : session.log) {
      if (r.stage == "fir") {
        last = &r;
        ++done;
      }
    }
    if (last && last->verified < opt.target) {
      session.pipeline = last->pipeline;
      session.converged = true;
      break;
    }
    if (done >= opt.max_iterations) {
      keep_best();
      break;
    }

    // Model error of the previous FIR: what the experiment saw minus what
    // the filter predicted from the IIR-corrected step.
    std::vector<double> bias;
    FirSpec start = FirSpec::identity();
    if (last) {
      start = *last->pipeline.fir;
      const auto predicted = apply_fir(start, after_iir);
      bias.resize(after_iir.size());
      for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = last->measured->samples[i] - predicted.samples[i];
    }
    CmaesOptions co = opt.cmaes;
    co.seed = opt.cmaes.seed + static_cast<std::uint64_t>(done);
    const auto fit = fit_fir_cmaes(after_iir, opt.fir, co, bias, start);

    FilterPipeline fp = iir.pipeline;
    fp.fir = fit.spec;
    IterationRecord rec;
    rec.stage = "fir";
    rec.pipeline = fp;
    rec.predicted = fit.objective;
    rec.evaluations = fit.evaluations;
    rec.fit_converged = fit.converged;
    rec.history = fit.history;
    rec.window = opt.verify_window;
    rec.measured = measure_step(chain, fp, setup_for(session.log.size()));
    rec.verified = max_deviation(*rec.measured, opt.verify_window);
    session.pipeline = fp;
    session.log.push_back(rec);
  }
  return session.pipeline;
}

}  // namespace cryoscope
