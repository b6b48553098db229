#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "cryoscope/waveform.hpp"

namespace cryoscope {

/// Step response g (1 + A exp(-t/tau)).
struct ExpStep {
  double A = 0.0;
  double tau_ns = 1.0;
  double g = 1.0;
};

/// Step response exp(-t/tau) (bias-tee sag).
struct HighPass {
  double tau_ns = 1.0;
};

/// Step response 1 - exp(-t/tau).
struct LowPass {
  double tau_ns = 1.0;
};

/// Step response erfc(alpha / (21 sqrt(t))) with t in ns and alpha the
/// attenuation in dB at 1 GHz.
struct SkinEffect {
  double alpha_db = 0.0;
};

/// Tabulated impulse response, e.g. the derivative of a scope trace.
struct MeasuredImpulse {
  Waveform impulse;
};

using DistortionModel = std::variant<ExpStep, HighPass, LowPass, SkinEffect, MeasuredImpulse>;

/// Models applied in order. An empty chain is the identity.
struct DistortionChain {
  std::vector<DistortionModel> models;
};

void validate(const DistortionModel& model);
void validate(const DistortionChain& chain);

std::string describe(const DistortionModel& model);

/// Continuous step response; zero for t < 0.
double step_response(const DistortionModel& model, double t_ns);

/// DC gain (step response as t -> infinity).
double dc_gain(const DistortionModel& model);

/// Slowest time constant in ns, 0 for models without one.
double slowest_time_constant(const DistortionModel& model);

/// Discrete impulse response h[0] = s(0), h[n] = s(n dt) - s((n-1) dt).
/// The running sum reproduces the step response exactly on the grid, and a
/// zero-order-hold input convolved with it gives the continuous output at
/// the grid points. Measured impulses are resampled through their
/// integrated step. Warns when `length` covers less than 5 time constants.
Waveform impulse_response(const DistortionModel& model, double sample_rate, std::size_t length);
Waveform impulse_response(const DistortionChain& chain, double sample_rate, std::size_t length);

/// Same as impulse_response without the truncation warning; used where the
/// observation window is itself finite.
Waveform impulse_response_window(const DistortionChain& chain, double sample_rate, std::size_t length);

/// Kernel whose convolution with a zero-order-hold input yields the output
/// at the offset points (n + offset) dt: h[n] = s((n + offset) dt) -
/// s((n - 1 + offset) dt). offset = 0.5 samples at interval midpoints, where
/// cascading kernels stays second-order accurate.
Waveform impulse_response_offset(const DistortionChain& chain, double sample_rate, std::size_t length,
                                 double offset);

/// Passes `wf` through the chain. Output has the input's length and grid.
/// Throws ConfigError if a measured impulse is sampled more coarsely than
/// the waveform.
Waveform apply(const DistortionChain& chain, const Waveform& wf);

/// Synthetic stand-in for the measured AWG step (amplified mode): a
/// Gaussian-filtered step with the given 10-90 % rise time, delayed by four
/// standard deviations to make it causal. Tabulated at `sample_rate`.
MeasuredImpulse synthetic_awg_response(double sample_rate = 38.4, double rise_10_90_ns = 0.5,
                                       double duration_ns = 5.0);

/// Bias tee, skin effect and on-chip response of the typical control line,
/// preceded by the synthetic AWG stand-in.
DistortionChain typical_control_line();

}  // namespace cryoscope
