#include "cryoscope/rt_filters.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cryoscope/convolution.hpp"
#include "cryoscope/errors.hpp"

namespace cryoscope {

FirSpec FirSpec::identity() {
  FirSpec s;
  s.params[0] = 1.0;
  return s;
}

FirTaps FirSpec::taps() const { return fir_from_params(params); }

IirCoefficients iir_coefficients(const IirExpSpec& spec, double sample_rate) {
  if (!(spec.A > -1.0) || !std::isfinite(spec.A)) {
    std::ostringstream os;
    os << "IIR amplitude A = " << spec.A << " must exceed -1 for a stable corrector";
    throw InstabilityError(os.str());
  }
  if (!(spec.tau_ns > 0.0) || !std::isfinite(spec.tau_ns)) {
    throw InstabilityError("IIR time constant must be positive");
  }
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");

  const double A = spec.A;
  // alpha = 1 - exp(-1 / (fs tau (1 + A))); the negative exponent keeps
  // alpha in (0, 1).
  const double alpha = -std::expm1(-1.0 / (sample_rate * spec.tau_ns * (1.0 + A)));
  const double k = A < 0.0 ? A / ((1.0 + A) * (1.0 - alpha)) : A / (1.0 + A - alpha);

  IirCoefficients c;
  c.alpha = alpha;
  c.k = k;
  c.b0 = 1.0 - k + k * alpha;
  c.b1 = -(1.0 - k) * (1.0 - alpha);
  c.a0 = 1.0;
  c.a1 = -(1.0 - alpha);
  return c;
}

std::vector<double> iir_difference_equation(const IirCoefficients& c, std::span<const double> x) {
  std::vector<double> y(x.size());
  double x_prev = 0.0;
  double y_prev = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double v = (c.b0 * x[n] + c.b1 * x_prev - c.a1 * y_prev) / c.a0;
    y[n] = v;
    x_prev = x[n];
    y_prev = v;
  }
  return y;
}

std::vector<double> iir_state_form(const IirCoefficients& c, std::span<const double> x) {
  std::vector<double> y(x.size());
  double u = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    u += c.alpha * (x[n] - u);
    y[n] = (1.0 - c.k) * x[n] + c.k * u;
  }
  return y;
}

std::vector<double> iir_hardware_form(const IirCoefficients& c, std::span<const double> x) {
  std::vector<double> y(x.size());
  const double alpha_hw = -std::expm1(static_cast<double>(kIirUpdatePeriod) * std::log1p(-c.alpha));
  double u = 0.0;
  double window_sum = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    window_sum += x[n];
    if (n >= kIirAverageWindow) window_sum -= x[n - kIirAverageWindow];
    if (n % kIirUpdatePeriod == 0) {
      const double mean = window_sum / static_cast<double>(kIirAverageWindow);
      u += alpha_hw * (mean - u);
    }
    y[n] = (1.0 - c.k) * x[n] + c.k * u;
  }
  return y;
}

Waveform apply_iir(const IirExpSpec& spec, const Waveform& wf) {
  const auto c = iir_coefficients(spec, wf.sample_rate);
  Waveform out = wf;
  out.samples = spec.mode == IirMode::ideal ? iir_difference_equation(c, wf.samples)
                                            : iir_hardware_form(c, wf.samples);
  return out;
}

FirTaps fir_from_params(std::span<const double> params) {
  if (params.size() != kFirParamCount) {
    throw ShapeError("FIR needs exactly " + std::to_string(kFirParamCount) + " parameters, got " +
                     std::to_string(params.size()));
  }
  FirTaps taps{};
  for (std::size_t i = 0; i < kFirDirectTaps; ++i) taps[i] = params[i];
  for (std::size_t j = 0; j < kFirParamCount - kFirDirectTaps; ++j) {
    taps[kFirDirectTaps + 2 * j] = params[kFirDirectTaps + j];
    taps[kFirDirectTaps + 2 * j + 1] = params[kFirDirectTaps + j];
  }
  return taps;
}

Waveform apply_fir(const FirTaps& taps, const Waveform& wf) {
  Waveform out = wf;
  out.samples = convolve_direct(wf.samples, taps, wf.size());
  return out;
}

Waveform apply_fir(const FirSpec& spec, const Waveform& wf) { return apply_fir(spec.taps(), wf); }

Waveform apply_pipeline(const FilterPipeline& pipeline, const Waveform& wf) {
  Waveform out = wf;
  for (const auto& spec : pipeline.iir) out = apply_iir(spec, out);
  if (pipeline.fir) out = apply_fir(*pipeline.fir, out);
  return out;
}

FilterPipeline with_mode(FilterPipeline pipeline, IirMode mode) {
  for (auto& s : pipeline.iir) s.mode = mode;
  return pipeline;
}

bool is_time_invariant(const FilterPipeline& pipeline) {
  return std::none_of(pipeline.iir.begin(), pipeline.iir.end(),
                      [](const IirExpSpec& s) { return s.mode == IirMode::hardware; });
}

}  // namespace cryoscope
