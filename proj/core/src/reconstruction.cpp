#include "cryoscope/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "cryoscope/convolution.hpp"
#include "cryoscope/errors.hpp"
#include "cryoscope/savgol.hpp"

namespace cryoscope {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void unwrap(std::vector<double>& p) {
  double offset = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double raw = p[i] + offset;
    double d = raw - p[i - 1];
    const double k = std::round(d / kTwoPi);
    offset -= k * kTwoPi;
    p[i] = raw - k * kTwoPi;
  }
}

double dominant_frequency(const std::vector<std::complex<double>>& z, double dt) {
  const auto spectrum = dft(z);
  const std::size_t n = z.size();
  const double df = 1.0 / (static_cast<double>(n) * dt);
  const double nyq = nyquist_frequency(dt);
  double best = -1.0;
  double freq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double f = static_cast<double>(k) * df;
    if (f > nyq) f -= static_cast<double>(n) * df;
    const double mag = std::abs(spectrum[k]);
    if (mag > best) {
      best = mag;
      freq = f;
    }
  }
  return freq;
}

double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

void validate(const ReconstructionConfig& cfg) {
  if (cfg.sg_window < 3 || cfg.sg_window % 2 == 0) throw ConfigError("sg_window must be odd and >= 3");
  if (cfg.sg_order < 1 || cfg.sg_order >= cfg.sg_window) {
    throw ConfigError("sg_order must be at least 1 and below sg_window");
  }
  if (cfg.nyquist_order < 0) throw ConfigError("nyquist_order must be non-negative");
  if (cfg.demod_ghz && !std::isfinite(*cfg.demod_ghz)) throw ConfigError("demodulation frequency must be finite");
  if (!(cfg.negative_tolerance_ghz >= 0.0)) throw ConfigError("negative_tolerance_ghz must be non-negative");
  validate(cfg.flux_model);
}

double trace_spacing(std::span<const double> tau) {
  if (tau.size() < 2) throw ConfigError("trace needs at least two truncation times");
  const double dt = (tau.back() - tau.front()) / static_cast<double>(tau.size() - 1);
  if (!(dt > 0.0)) throw ConfigError("truncation times must be increasing");
  for (std::size_t i = 1; i < tau.size(); ++i) {
    if (std::abs(tau[i] - tau[i - 1] - dt) > 1e-6 * dt) throw ConfigError("truncation times must be uniformly spaced");
  }
  return dt;
}

PhaseData extract_phase(const CryoscopeTrace& trace, std::optional<double> demod_ghz) {
  const std::size_t n = trace.tau.size();
  if (n == 0 || trace.x.size() != n || trace.y.size() != n) throw ConfigError("trace arrays must be non-empty and equal length");
  const double dt = trace_spacing(trace.tau);
  std::vector<std::complex<double>> z(n);
  double power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = {trace.x[i], trace.y[i]};
    power += std::norm(z[i]);
  }
  if (!(power > 0.0)) throw SignalTooWeakError("trace carries no signal: <X> and <Y> are zero everywhere");

  PhaseData out;
  out.t = trace.tau;
  out.demod_freq = demod_ghz ? *demod_ghz : dominant_frequency(z, dt);
  out.residual.resize(n);
  out.phase.resize(n);
  const double t0 = trace.tau.front();
  for (std::size_t i = 0; i < n; ++i) {
    const double rot = -kTwoPi * out.demod_freq * (trace.tau[i] - t0);
    out.residual[i] = std::arg(z[i] * std::polar(1.0, rot));
  }
  unwrap(out.residual);
  for (std::size_t i = 0; i < n; ++i) {
    out.phase[i] = out.residual[i] + kTwoPi * out.demod_freq * (trace.tau[i] - t0);
  }
  return out;
}

double restore_nyquist(double f_ghz, int order, double nyquist_ghz) {
  const double period = 2.0 * nyquist_ghz;
  const double centre = (static_cast<double>(order) + 0.5) * nyquist_ghz;
  return f_ghz + period * std::round((centre - f_ghz) / period);
}

std::vector<double> detuning_estimate(const PhaseData& phase, const ReconstructionConfig& cfg) {
  validate(cfg);
  const double dt = trace_spacing(phase.t);
  auto df = savgol_filter(phase.residual, dt, cfg.sg_window, cfg.sg_order, 1);
  const double nyq = nyquist_frequency(dt);
  for (double& f : df) f = restore_nyquist(f / kTwoPi + phase.demod_freq, cfg.nyquist_order, nyq);
  return df;
}

ReconstructionResult reconstruct(const CryoscopeTrace& trace, const ReconstructionConfig& cfg) {
  validate(cfg);
  const auto phase = extract_phase(trace, cfg.demod_ghz);
  ReconstructionResult r;
  r.t = phase.t;
  r.df_r = detuning_estimate(phase, cfg);
  r.raw_phase = phase.phase;
  r.demod_freq = phase.demod_freq;
  r.nyquist_order = cfg.nyquist_order;
  const std::size_t n = r.t.size();
  const std::size_t h = static_cast<std::size_t>(cfg.sg_window / 2);
  r.edge.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) r.edge[i] = i < h || i + h >= n;

  const double top = max_detuning(cfg.flux_model);
  r.phi_r.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double f = r.df_r[i];
    if (f < 0.0 && f >= -cfg.negative_tolerance_ghz) f = 0.0;
    if (f < 0.0 || f > top) {
      if (cfg.range_policy == RangePolicy::error) {
        std::ostringstream os;
        os << "detuning " << r.df_r[i] << " GHz at sample " << i << " (t = " << r.t[i]
           << " ns) is outside the invertible range [0, " << top << "]";
        throw RangeError(os.str());
      }
      f = std::clamp(f, 0.0, top);
      ++r.clipped;
    }
    // The supremum of a transmon's range sits at half a flux quantum,
    // which is outside the model domain.
    r.phi_r[i] = f >= top ? flux_from_detuning(cfg.flux_model, std::nextafter(top, 0.0))
                          : flux_from_detuning(cfg.flux_model, f);
  }
  return r;
}

std::vector<int> nyquist_order_scan(std::span<const CryoscopeTrace> traces, const ReconstructionConfig& cfg) {
  if (traces.size() < 2) throw ConfigError("Nyquist scan needs traces at two or more amplitudes");
  ReconstructionConfig base = cfg;
  base.nyquist_order = 0;
  std::vector<int> orders;
  orders.reserve(traces.size());
  double previous = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const double dt = trace_spacing(traces[i].tau);
    const double nyq = nyquist_frequency(dt);
    const double period = 2.0 * nyq;
    const double guard = 0.05 * nyq;
    const auto phase = extract_phase(traces[i], cfg.demod_ghz);
    auto df = detuning_estimate(phase, base);
    // Back to the principal alias before taking the mean.
    for (double& f : df) f -= period * std::round(f / period);
    const double aliased = median(df);
    double f = restore_nyquist(aliased, 0, nyq);
    if (i > 0) {
      f = aliased + period * std::ceil((previous - guard - aliased) / period);
    }
    previous = f;
    const int order = std::max(0, static_cast<int>(std::floor(f / nyq)));
    orders.push_back(order);
    const double to_boundary = std::abs(f - nyq * std::round(f / nyq));
    if (to_boundary < guard) {
      std::ostringstream os;
      os << "trace " << i << " has mean frequency " << f << " GHz within " << guard
         << " GHz of a Nyquist zone boundary; its order assignment is ambiguous";
      warn(os.str());
    }
  }
  return orders;
}

}  // namespace cryoscope
