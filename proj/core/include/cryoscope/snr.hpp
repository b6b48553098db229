#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cryoscope/calibration.hpp"
#include "cryoscope/reconstruction.hpp"
#include "cryoscope/virtual_cryoscope.hpp"

namespace cryoscope {

inline constexpr double kSnrCap = 1e6;

/// SNR = a_snr phi^2 exp(-(gamma0 + 2 a gamma1 phi) t) with gamma0 in 1/us,
/// gamma1 in Phi0, a in GHz/Phi0^2 and t in ns.
struct SnrModelParams {
  double a_snr = 1.0;
  double gamma0 = 66.7e-3;
  double gamma1 = 0.213e-3;
  double a = 16.9;
};

struct SnrMeasurement {
  double amplitude = 0.0;  // Phi0
  TimeWindow window;
  std::size_t n_trials = 0;
  double mean = 0.0;  // of the reconstructed flux, pooled over trials
  double std = 0.0;
  double snr = 0.0;
  bool capped = false;  // std underflowed; snr set to kSnrCap
};

double predict_snr(const SnrModelParams& p, double phi, double t_ns);

/// Amplitude maximising predict_snr at time t: 1 / (a gamma1 t), in Phi0.
double snr_optimal_flux(const SnrModelParams& p, double t_ns);

/// Runs n_trials noisy experiments (the noiseless signal is computed once,
/// trial i draws noise with a seed derived from cfg.seed and i) and pools
/// the reconstructed flux over truncations inside `window`. The pulse must
/// be constant over the window.
SnrMeasurement measure_snr(const ExperimentConfig& cfg, const ReconstructionConfig& rc, TimeWindow window,
                           std::size_t n_trials);

/// Square-pulse experiment for an SNR point: truncations cover `window`
/// plus a small margin for the derivative filter.
ExperimentConfig snr_experiment(double amplitude_phi0, TimeWindow window, double noise_sigma, std::uint64_t seed,
                                const FluxModel& model, const DephasingParams& dephasing);

/// Log-space least squares for a_snr and gamma1 with a and gamma0 held at
/// the values in `fixed`. Each measurement's time is its window centre.
/// Throws IdentifiabilityError unless there are at least 6 points with two
/// distinct amplitudes and two distinct windows.
SnrModelParams fit_snr(std::span<const SnrMeasurement> measurements, const SnrModelParams& fixed);

}  // namespace cryoscope
