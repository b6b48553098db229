#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cryoscope/flux_model.hpp"
#include "cryoscope/lti.hpp"
#include "cryoscope/rt_filters.hpp"
#include "cryoscope/waveform.hpp"

namespace cryoscope {

/// One virtual Cryoscope experiment. The pulse is the AWG waveform in flux
/// units; each truncated copy V(t) u(tau - t) is passed through the
/// predistortion pipeline and then the plant chain.
struct ExperimentConfig {
  Waveform pulse;
  std::vector<double> truncations;  // ns, on the pulse grid
  std::optional<double> t_sep_ns;   // default: max truncation + 100 ns
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::optional<DephasingParams> dephasing;
  FluxModel flux_model = PowerLawModel{16.9, 2};
  DistortionChain chain;
  FilterPipeline predistortion;
  int oversampling = 4;
};

/// Time between the first and second pi/2 pulse.
double separation_time(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

/// `count` truncation times n / rate for n = first, first + 1, ...
std::vector<double> truncation_grid(std::size_t count, double sample_rate = kAwgSampleRate, std::size_t first = 0);

struct CryoscopeTrace {
  std::vector<double> tau;
  std::vector<double> x;
  std::vector<double> y;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::optional<ExperimentConfig> config;
};

/// Noise-free phase and Ramsey visibility per truncation.
struct IdealSignal {
  std::vector<double> tau;
  std::vector<double> phase;
  std::vector<double> visibility;
};

/// 2 pi times the detuning integrated from 0 to t_sep for the pulse
/// truncated at `tau`. The integral is a composite midpoint sum on the
/// oversampled grid, which is exact for piecewise-constant flux with edges
/// on the grid.
double acquired_phase(const ExperimentConfig& cfg, double tau);

/// Splits the finite-difference detuning between truncations tau and
/// tau + dtau into the true average detuning and the turn-off transients.
struct EpsilonTerms {
  double df_q = 0.0;     // mean detuning over [tau, tau + dtau] (GHz)
  double eps_on = 0.0;   // transient after tau + dtau, divided by dtau
  double eps_off = 0.0;  // transient after tau, divided by dtau
  double eps = 0.0;      // eps_on - eps_off
  double df_r = 0.0;     // (phi(tau + dtau) - phi(tau)) / (2 pi dtau)
};
EpsilonTerms epsilon_decomposition(const ExperimentConfig& cfg, double tau, double dtau);

IdealSignal compute_ideal_signal(const ExperimentConfig& cfg);

/// Adds Gaussian readout noise of std `sigma`. Each truncation index draws
/// from its own generator seeded by (seed, index), so the result does not
/// depend on evaluation order. Values are clamped to +-(1 + 5 sigma).
CryoscopeTrace sample_trace(const IdealSignal& signal, double sigma, std::uint64_t seed);

CryoscopeTrace simulate_trace(const ExperimentConfig& cfg);

/// Flux seen by the qubit for the untruncated pulse, on the pulse grid from
/// t = 0 up to and including t_end.
Waveform on_chip_flux(const ExperimentConfig& cfg, double t_end_ns);

}  // namespace cryoscope
