#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cryoscope/flux_model.hpp"
#include "cryoscope/virtual_cryoscope.hpp"

namespace cryoscope {

/// What to do with detuning estimates the flux model cannot invert.
enum class RangePolicy { error, clip };

struct ReconstructionConfig {
  int sg_window = 5;
  int sg_order = 2;
  int nyquist_order = 0;
  std::optional<double> demod_ghz;  // empty: pick the dominant tone
  FluxModel flux_model = PowerLawModel{16.9, 2};
  RangePolicy range_policy = RangePolicy::error;
  // Negative estimates down to -negative_tolerance_ghz are read as zero
  // detuning under either policy.
  double negative_tolerance_ghz = 1e-3;
};

void validate(const ReconstructionConfig& cfg);

struct PhaseData {
  std::vector<double> t;         // ns
  std::vector<double> phase;     // rad, unwrapped, demodulation added back
  std::vector<double> residual;  // rad, unwrapped after demodulation
  double demod_freq = 0.0;       // GHz
};

struct ReconstructionResult {
  std::vector<double> t;
  std::vector<double> df_r;       // GHz
  std::vector<double> phi_r;      // Phi0
  std::vector<double> raw_phase;  // rad
  std::vector<bool> edge;         // inside the truncated Savitzky-Golay region
  double demod_freq = 0.0;
  int nyquist_order = 0;
  std::size_t clipped = 0;
};

/// Nyquist frequency of a trace sampled every dt ns.
inline double nyquist_frequency(double dt) { return 0.5 / dt; }

/// Spacing of a trace; throws ConfigError unless tau is uniform.
double trace_spacing(std::span<const double> tau);

/// Phase of x + iy. The dominant tone of its DFT (or cfg.demod_ghz) is
/// removed before unwrapping and added back afterwards. Throws
/// SignalTooWeakError for an all-zero trace.
PhaseData extract_phase(const CryoscopeTrace& trace, std::optional<double> demod_ghz = std::nullopt);

/// Folds an aliased frequency into Nyquist zone `order`: returns f + j 2 f_N
/// for the integer j that puts it closest to the zone centre
/// (order + 1/2) f_N. Complex sampling aliases with period 2 f_N.
double restore_nyquist(double f_ghz, int order, double nyquist_ghz);

/// Savitzky-Golay derivative of the demodulated phase over 2 pi, plus the
/// demodulation frequency, restored to the configured Nyquist zone.
std::vector<double> detuning_estimate(const PhaseData& phase, const ReconstructionConfig& cfg);

/// Full pipeline. Throws RangeError naming the first sample whose detuning
/// cannot be inverted (error policy); the clip policy saturates instead.
ReconstructionResult reconstruct(const CryoscopeTrace& trace, const ReconstructionConfig& cfg);

/// Assigns Nyquist orders to traces taken at increasing pulse amplitude by
/// unwrapping their mean frequency across amplitudes: the smallest
/// amplitude is assumed to lie in zone 0 and the true mean frequency may
/// not decrease. Warns when a mean frequency falls within 5 % of the
/// Nyquist frequency of a zone boundary.
std::vector<int> nyquist_order_scan(std::span<const CryoscopeTrace> traces, const ReconstructionConfig& cfg);

}  // namespace cryoscope
