#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cryoscope/waveform.hpp"

namespace cryoscope {

inline constexpr std::size_t kFirParamCount = 40;
inline constexpr std::size_t kFirTapCount = 72;
inline constexpr std::size_t kFirDirectTaps = 8;

/// Hardware IIR state update period and averaging window, in samples.
inline constexpr std::size_t kIirUpdatePeriod = 8;
inline constexpr std::size_t kIirAverageWindow = 16;

enum class IirMode { ideal, hardware };

/// First-order exponential corrector for a step response g (1 + A e^{-t/tau}).
struct IirExpSpec {
  double A = 0.0;
  double tau_ns = 1.0;
  IirMode mode = IirMode::ideal;
};

/// a0 y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1], plus the equivalent
/// state-variable constants y = (1-k) x + k u, u += alpha (x - u).
struct IirCoefficients {
  double b0 = 1.0;
  double b1 = 0.0;
  double a0 = 1.0;
  double a1 = 0.0;
  double alpha = 0.0;
  double k = 0.0;
};

using FirTaps = std::array<double, kFirTapCount>;

/// 40 hardware parameters: the first 8 map to single taps, the remaining 32
/// each set a pair of adjacent taps.
struct FirSpec {
  std::array<double, kFirParamCount> params{};

  static FirSpec identity();
  FirTaps taps() const;
};

/// Exponential correctors (slow timescales) followed by at most one FIR.
struct FilterPipeline {
  std::vector<IirExpSpec> iir;
  std::optional<FirSpec> fir;

  bool empty() const { return iir.empty() && !fir; }
};

/// Throws InstabilityError when A <= -1 or tau <= 0.
IirCoefficients iir_coefficients(const IirExpSpec& spec, double sample_rate);

/// Applies one corrector in its own mode.
Waveform apply_iir(const IirExpSpec& spec, const Waveform& wf);

/// Ideal filter through the generic difference equation.
std::vector<double> iir_difference_equation(const IirCoefficients& c, std::span<const double> x);

/// Ideal filter through the exponential-moving-average state form.
std::vector<double> iir_state_form(const IirCoefficients& c, std::span<const double> x);

/// Hardware approximation: the state is refreshed only every 8th sample from
/// the mean of the 16 most recent inputs, with the per-update decay
/// 1 - (1 - alpha)^8 so the time constant matches the ideal filter. The
/// output still combines the held state with every input sample.
std::vector<double> iir_hardware_form(const IirCoefficients& c, std::span<const double> x);

/// Expands 40 parameters to 72 taps; throws ShapeError on a wrong count.
FirTaps fir_from_params(std::span<const double> params);

Waveform apply_fir(const FirTaps& taps, const Waveform& wf);
Waveform apply_fir(const FirSpec& spec, const Waveform& wf);

/// IIRs in declared order, then the FIR.
Waveform apply_pipeline(const FilterPipeline& pipeline, const Waveform& wf);

/// Overrides the mode of every IIR stage.
FilterPipeline with_mode(FilterPipeline pipeline, IirMode mode);

/// True if the pipeline is time-invariant (no hardware-mode stage).
bool is_time_invariant(const FilterPipeline& pipeline);

}  // namespace cryoscope
