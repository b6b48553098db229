#include "cryoscope/snr.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "cryoscope/errors.hpp"
#include "cryoscope/parallel.hpp"

namespace cryoscope {
namespace {

std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
  // splitmix64 of the pair keeps neighbouring seeds uncorrelated.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(trial) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

double predict_snr(const SnrModelParams& p, double phi, double t_ns) {
  const double rate_per_us = p.gamma0 + 2.0 * p.a * p.gamma1 * std::abs(phi) * 1e3;
  return p.a_snr * phi * phi * std::exp(-rate_per_us * t_ns * 1e-3);
}

double snr_optimal_flux(const SnrModelParams& p, double t_ns) {
  if (!(p.a * p.gamma1 * t_ns > 0.0)) throw DomainError("no interior SNR maximum without flux-noise dephasing");
  return 1.0 / (p.a * p.gamma1 * t_ns);
}

ExperimentConfig snr_experiment(double amplitude_phi0, TimeWindow window, double noise_sigma, std::uint64_t seed,
                                const FluxModel& model, const DephasingParams& dephasing) {
  if (!(window.t_max_ns > window.t_min_ns) || window.t_min_ns < 0.0) throw ConfigError("invalid SNR window");
  ExperimentConfig cfg;
  const double rate = kAwgSampleRate;
  const double margin = 8.0 / rate;
  const auto first = static_cast<std::size_t>(std::floor(std::max(0.0, window.t_min_ns - margin) * rate));
  const auto last = static_cast<std::size_t>(std::ceil((window.t_max_ns + margin) * rate));
  cfg.truncations = truncation_grid(last - first + 1, rate, first);
  cfg.t_sep_ns = cfg.truncations.back() + 100.0;
  cfg.pulse = make_step(amplitude_phi0, *cfg.t_sep_ns + 1.0, rate);
  cfg.noise_sigma = noise_sigma;
  cfg.seed = seed;
  cfg.flux_model = model;
  cfg.dephasing = dephasing;
  return cfg;
}

SnrMeasurement measure_snr(const ExperimentConfig& cfg, const ReconstructionConfig& rc, TimeWindow window,
                           std::size_t n_trials) {
  if (n_trials < 2) throw ConfigError("SNR needs at least two trials");
  validate(cfg);
  if (!(window.t_max_ns > window.t_min_ns)) throw ConfigError("SNR window must have t_max > t_min");
  if (window.t_min_ns < cfg.truncations.front() - 1e-9 || window.t_max_ns > cfg.truncations.back() + 1e-9) {
    throw ConfigError("SNR window lies outside the truncation range");
  }
  // The window must sit on a plateau of the pulse.
  const std::size_t lo = index_at_or_after(cfg.pulse, window.t_min_ns);
  const std::size_t hi = index_at_or_after(cfg.pulse, window.t_max_ns);
  if (hi >= cfg.pulse.size()) throw ConfigError("SNR window extends past the pulse");
  const double level = cfg.pulse.samples[lo];
  for (std::size_t i = lo; i <= hi; ++i) {
    if (cfg.pulse.samples[i] != level || level == 0.0) throw ConfigError("SNR window is not inside the pulse plateau");
  }

  const auto ideal = compute_ideal_signal(cfg);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ideal.tau.size(); ++i) {
    if (ideal.tau[i] >= window.t_min_ns - 1e-9 && ideal.tau[i] <= window.t_max_ns + 1e-9) idx.push_back(i);
  }
  ReconstructionConfig r = rc;
  r.range_policy = RangePolicy::clip;
  std::vector<std::vector<double>> samples(n_trials);
  parallel_for(n_trials, [&](std::size_t t) {
    const auto trace = sample_trace(ideal, cfg.noise_sigma, trial_seed(cfg.seed, t));
    const auto rec = reconstruct(trace, r);
    samples[t].reserve(idx.size());
    for (std::size_t i : idx) samples[t].push_back(rec.phi_r[i]);
  });

  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    for (double v : s) {
      sum += v;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& s : samples) {
    for (double v : s) ss += (v - mean) * (v - mean);
  }
  SnrMeasurement m;
  m.amplitude = std::abs(level);
  m.window = window;
  m.n_trials = n_trials;
  m.mean = mean;
  m.std = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  if (!(m.std * kSnrCap > std::abs(mean))) {
    m.snr = kSnrCap;
    m.capped = true;
  } else {
    m.snr = std::abs(mean) / m.std;
  }
  return m;
}

SnrModelParams fit_snr(std::span<const SnrMeasurement> measurements, const SnrModelParams& fixed) {
  std::set<double> amps;
  std::set<double> times;
  std::vector<const SnrMeasurement*> use;
  for (const auto& m : measurements) {
    if (!(m.snr > 0.0) || !(m.amplitude > 0.0)) continue;
    use.push_back(&m);
    amps.insert(m.amplitude);
    times.insert(0.5 * (m.window.t_min_ns + m.window.t_max_ns));
  }
  if (use.size() < 6 || amps.size() < 2 || times.size() < 2) {
    throw IdentifiabilityError("SNR fit needs at least 6 positive measurements over two amplitudes and two windows");
  }
  // log snr - 2 log phi + gamma0 t = log a_snr - (2 a phi t) gamma1
  const auto n = static_cast<Eigen::Index>(use.size());
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = *use[static_cast<std::size_t>(i)];
    const double t_us = 0.5 * (m.window.t_min_ns + m.window.t_max_ns) * 1e-3;
    a(i, 0) = 1.0;
    a(i, 1) = -2.0 * fixed.a * m.amplitude * t_us * 1e3;
    b(i) = std::log(m.snr) - 2.0 * std::log(m.amplitude) + fixed.gamma0 * t_us;
  }
  const Eigen::Vector2d x = a.colPivHouseholderQr().solve(b);
  SnrModelParams out = fixed;
  out.a_snr = std::exp(x(0));
  out.gamma1 = std::max(0.0, x(1));
  return out;
}

}  // namespace cryoscope
