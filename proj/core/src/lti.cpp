#include "cryoscope/lti.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cryoscope/convolution.hpp"
#include "cryoscope/errors.hpp"

namespace cryoscope {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be positive and finite");
  }
}

// Running sum of a tabulated impulse.
std::vector<double> cumulative(const Waveform& imp) {
  std::vector<double> cum(imp.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < imp.size(); ++i) cum[i] = acc += imp.samples[i];
  return cum;
}

// Integrated step of a tabulated impulse, linear between grid points.
double measured_step(const Waveform& imp, const std::vector<double>& cum, double t) {
  if (t < imp.t0) return 0.0;
  const double x = (t - imp.t0) * imp.sample_rate;
  const std::size_t last = imp.size() - 1;
  if (x >= static_cast<double>(last)) return cum[last];
  const auto n = static_cast<std::size_t>(std::floor(x));
  const double frac = x - static_cast<double>(n);
  return cum[n] + frac * imp.samples[n + 1];
}

// Step differences sampled at (n + offset) dt for a sampled step.
std::vector<double> discretize_offset(const DistortionModel& model, double rate, std::size_t length,
                                      double offset) {
  std::vector<double> h(length, 0.0);
  const double dt = 1.0 / rate;
  const bool measured = std::holds_alternative<MeasuredImpulse>(model);
  std::vector<double> cum;
  if (measured) cum = cumulative(std::get<MeasuredImpulse>(model).impulse);
  auto step = [&](double t) {
    if (measured) return measured_step(std::get<MeasuredImpulse>(model).impulse, cum, t);
    return step_response(model, t);
  };
  double prev = 0.0;
  for (std::size_t n = 0; n < length; ++n) {
    const double s = step((static_cast<double>(n) + offset) * dt);
    h[n] = s - prev;
    prev = s;
  }
  return h;
}

std::vector<double> discretize(const DistortionModel& model, double rate, std::size_t length) {
  std::vector<double> h(length, 0.0);
  if (length == 0) return h;
  const double dt = 1.0 / rate;
  std::visit(overloaded{
                 [&](const ExpStep& m) {
                   const double x = dt / m.tau_ns;
                   const double drop = -std::expm1(-x);  // 1 - e^{-x}
                   h[0] = m.g * (1.0 + m.A);
                   for (std::size_t n = 1; n < length; ++n) {
                     h[n] = -m.g * m.A * std::exp(-static_cast<double>(n - 1) * x) * drop;
                   }
                 },
                 [&](const HighPass& m) {
                   const double x = dt / m.tau_ns;
                   const double drop = -std::expm1(-x);
                   h[0] = 1.0;
                   for (std::size_t n = 1; n < length; ++n) {
                     h[n] = -std::exp(-static_cast<double>(n - 1) * x) * drop;
                   }
                 },
                 [&](const LowPass& m) {
                   const double x = dt / m.tau_ns;
                   const double drop = -std::expm1(-x);
                   h[0] = 0.0;
                   for (std::size_t n = 1; n < length; ++n) {
                     h[n] = std::exp(-static_cast<double>(n - 1) * x) * drop;
                   }
                 },
                 [&](const SkinEffect& m) {
                   double prev = 0.0;
                   for (std::size_t n = 0; n < length; ++n) {
                     const double s = step_response(m, static_cast<double>(n) * dt);
                     h[n] = s - prev;
                     prev = s;
                   }
                 },
                 [&](const MeasuredImpulse& m) {
                   const Waveform& imp = m.impulse;
                   if (imp.sample_rate == rate && imp.t0 == 0.0) {
                     std::copy_n(imp.samples.begin(), std::min(length, imp.size()), h.begin());
                     return;
                   }
                   const auto cum = cumulative(imp);
                   double prev = 0.0;
                   for (std::size_t n = 0; n < length; ++n) {
                     const double s = measured_step(imp, cum, static_cast<double>(n) * dt);
                     h[n] = s - prev;
                     prev = s;
                   }
                 },
             },
             model);
  return h;
}

std::vector<double> chain_kernel(const DistortionChain& chain, double rate, std::size_t length) {
  std::vector<double> k(length, 0.0);
  if (length == 0) return k;
  k[0] = 1.0;
  for (const auto& m : chain.models) {
    const auto h = discretize(m, rate, length);
    k = convolve(k, h, length);
  }
  return k;
}

std::vector<double> chain_kernel_offset(const DistortionChain& chain, double rate, std::size_t length,
                                        double offset) {
  std::vector<double> k(length, 0.0);
  if (length == 0) return k;
  k[0] = 1.0;
  for (const auto& m : chain.models) {
    const auto h = offset == 0.0 ? discretize(m, rate, length) : discretize_offset(m, rate, length, offset);
    k = convolve(k, h, length);
  }
  return k;
}

void warn_if_truncated(const DistortionModel& model, double rate, std::size_t length) {
  const double tau = slowest_time_constant(model);
  const double span = static_cast<double>(length) / rate;
  if (tau > 0.0 && span < 5.0 * tau) {
    std::ostringstream os;
    os << "impulse response of " << describe(model) << " truncated at " << span
       << " ns, shorter than 5x its slowest time constant (" << tau << " ns)";
    warn(os.str());
  }
}

}  // namespace

void validate(const DistortionModel& model) {
  std::visit(overloaded{
                 [](const ExpStep& m) {
                   require_positive(m.tau_ns, "ExpStep tau_ns");
                   if (!std::isfinite(m.A) || !std::isfinite(m.g)) throw ConfigError("ExpStep A and g must be finite");
                 },
                 [](const HighPass& m) { require_positive(m.tau_ns, "HighPass tau_ns"); },
                 [](const LowPass& m) { require_positive(m.tau_ns, "LowPass tau_ns"); },
                 [](const SkinEffect& m) {
                   if (!(m.alpha_db >= 0.0) || !std::isfinite(m.alpha_db)) {
                     throw ConfigError("SkinEffect alpha_db must be non-negative");
                   }
                 },
                 [](const MeasuredImpulse& m) {
                   validate(m.impulse);
                   double sum = 0.0;
                   for (double v : m.impulse.samples) sum += v;
                   if (!std::isfinite(sum)) throw ConfigError("measured impulse has no finite DC gain");
                 },
             },
             model);
}

void validate(const DistortionChain& chain) {
  for (const auto& m : chain.models) validate(m);
}

std::string describe(const DistortionModel& model) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const ExpStep& m) { os << "ExpStep(A=" << m.A << ", tau=" << m.tau_ns << " ns, g=" << m.g << ")"; },
                 [&](const HighPass& m) { os << "HighPass(tau=" << m.tau_ns << " ns)"; },
                 [&](const LowPass& m) { os << "LowPass(tau=" << m.tau_ns << " ns)"; },
                 [&](const SkinEffect& m) { os << "SkinEffect(alpha=" << m.alpha_db << " dB)"; },
                 [&](const MeasuredImpulse& m) {
                   os << "MeasuredImpulse(" << m.impulse.size() << " samples @ " << m.impulse.sample_rate << "/ns)";
                 },
             },
             model);
  return os.str();
}

double step_response(const DistortionModel& model, double t) {
  if (t < 0.0) return 0.0;
  return std::visit(overloaded{
                        [&](const ExpStep& m) { return m.g * (1.0 + m.A * std::exp(-t / m.tau_ns)); },
                        [&](const HighPass& m) { return std::exp(-t / m.tau_ns); },
                        [&](const LowPass& m) { return -std::expm1(-t / m.tau_ns); },
                        [&](const SkinEffect& m) {
                          if (t == 0.0) return m.alpha_db == 0.0 ? 1.0 : 0.0;
                          return std::erfc(m.alpha_db / (21.0 * std::sqrt(t)));
                        },
                        [&](const MeasuredImpulse& m) { return measured_step(m.impulse, cumulative(m.impulse), t); },
                    },
                    model);
}

double dc_gain(const DistortionModel& model) {
  return std::visit(overloaded{
                        [](const ExpStep& m) { return m.g; },
                        [](const HighPass&) { return 0.0; },
                        [](const LowPass&) { return 1.0; },
                        [](const SkinEffect&) { return 1.0; },
                        [](const MeasuredImpulse& m) {
                          double s = 0.0;
                          for (double v : m.impulse.samples) s += v;
                          return s;
                        },
                    },
                    model);
}

double slowest_time_constant(const DistortionModel& model) {
  return std::visit(overloaded{
                        [](const ExpStep& m) { return m.tau_ns; },
                        [](const HighPass& m) { return m.tau_ns; },
                        [](const LowPass& m) { return m.tau_ns; },
                        [](const SkinEffect&) { return 0.0; },
                        [](const MeasuredImpulse& m) {
                          return static_cast<double>(m.impulse.size()) / m.impulse.sample_rate / 5.0;
                        },
                    },
                    model);
}

Waveform impulse_response(const DistortionModel& model, double sample_rate, std::size_t length) {
  require_positive(sample_rate, "sample_rate");
  validate(model);
  warn_if_truncated(model, sample_rate, length);
  return Waveform{discretize(model, sample_rate, length), sample_rate, 0.0};
}

Waveform impulse_response(const DistortionChain& chain, double sample_rate, std::size_t length) {
  require_positive(sample_rate, "sample_rate");
  validate(chain);
  for (const auto& m : chain.models) warn_if_truncated(m, sample_rate, length);
  return Waveform{chain_kernel(chain, sample_rate, length), sample_rate, 0.0};
}

Waveform impulse_response_window(const DistortionChain& chain, double sample_rate, std::size_t length) {
  require_positive(sample_rate, "sample_rate");
  validate(chain);
  return Waveform{chain_kernel(chain, sample_rate, length), sample_rate, 0.0};
}

Waveform impulse_response_offset(const DistortionChain& chain, double sample_rate, std::size_t length,
                                 double offset) {
  require_positive(sample_rate, "sample_rate");
  if (!(offset >= 0.0 && offset < 1.0)) throw ConfigError("kernel offset must lie in [0, 1)");
  validate(chain);
  return Waveform{chain_kernel_offset(chain, sample_rate, length, offset), sample_rate, 0.0};
}

Waveform apply(const DistortionChain& chain, const Waveform& wf) {
  validate(wf);
  validate(chain);
  Waveform out = wf;
  for (const auto& m : chain.models) {
    if (const auto* mi = std::get_if<MeasuredImpulse>(&m)) {
      if (mi->impulse.sample_rate < wf.sample_rate * (1.0 - 1e-12)) {
        std::ostringstream os;
        os << "sample-rate mismatch: measured impulse at " << mi->impulse.sample_rate
           << "/ns is coarser than the waveform at " << wf.sample_rate << "/ns";
        throw ConfigError(os.str());
      }
    }
    const auto h = discretize(m, wf.sample_rate, wf.size());
    out.samples = convolve(out.samples, h, wf.size());
  }
  return out;
}

MeasuredImpulse synthetic_awg_response(double sample_rate, double rise_10_90_ns, double duration_ns) {
  require_positive(sample_rate, "sample_rate");
  require_positive(rise_10_90_ns, "rise time");
  // 10-90 % rise of a Gaussian-filtered step is 2 * 1.2816 sigma.
  const double sigma = rise_10_90_ns / (2.0 * 1.2815515655446004);
  const double delay = 4.0 * sigma;
  const auto n = static_cast<std::size_t>(std::ceil(duration_ns * sample_rate));
  std::vector<double> imp(n, 0.0);
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double s = 0.5 * std::erfc(-(t - delay) / (sigma * std::numbers::sqrt2));
    imp[i] = s - prev;
    prev = s;
  }
  // Remaining tail mass goes into the last sample so the DC gain is exactly 1.
  imp.back() += 1.0 - prev;
  return MeasuredImpulse{Waveform{std::move(imp), sample_rate, 0.0}};
}

DistortionChain typical_control_line() {
  DistortionChain c;
  c.models.emplace_back(synthetic_awg_response());
  c.models.emplace_back(HighPass{41000.0});
  c.models.emplace_back(ExpStep{0.13, 15000.0, 1.0});
  c.models.emplace_back(ExpStep{0.99, 6400.0, 1.0});
  c.models.emplace_back(SkinEffect{2.1});
  c.models.emplace_back(ExpStep{0.6, 2.0, 1.0});
  return c;
}

}  // namespace cryoscope
