#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cryoscope/cmaes.hpp"
#include "cryoscope/flux_model.hpp"
#include "cryoscope/lti.hpp"
#include "cryoscope/reconstruction.hpp"
#include "cryoscope/rt_filters.hpp"
#include "cryoscope/waveform.hpp"

namespace cryoscope {

struct TimeWindow {
  double t_min_ns = 0.0;
  double t_max_ns = 0.0;
};

/// s_corr = h_filt * s: the pipeline applied to a step response sampled on
/// the AWG grid. Throws ConfigError for any other rate.
Waveform predict_corrected_step(const Waveform& step, const FilterPipeline& pipeline);

/// Index of the first sample at or above half the final level.
std::size_t step_edge(const Waveform& step);

/// Divides by the mean over `window`.
Waveform normalize_step(const Waveform& step, TimeWindow window);

/// Largest |s - 1| and RMS of s - 1 over a window.
double max_deviation(const Waveform& step, TimeWindow window);
double rms_deviation(const Waveform& step, TimeWindow window);

struct IirFitResult {
  std::vector<IirExpSpec> specs;  // slowest first
  double residual = 0.0;          // RMS of gain * s_corr - 1 over the window
  double gain = 1.0;              // best overall scale of the corrected step
  TimeWindow window;
  bool converged = true;
};

/// Least-squares fit of `n_filters` exponential correctors so that the
/// corrected step is flat over `window`. Filters are added one at a time
/// from slow to fast, each seeded by a scan over time constants, and then
/// refined jointly with Levenberg-Marquardt in (A, log tau). The overall
/// gain is eliminated in closed form. A result that stops at the iteration
/// cap carries converged = false and the best parameters found.
IirFitResult fit_iir(const Waveform& step, int n_filters, TimeWindow window = {30.0, 200.0},
                     IirMode mode = IirMode::ideal);

struct FirObjectiveOptions {
  double window_ns = 30.0;     // after the step edge, weight 1
  double flat_until_ns = 200.0;  // flatness penalty from window_ns to here
  double flat_weight = 0.1;
};

/// Objective for a set of 40 FIR parameters: RMS of (FIR * step + bias - 1)
/// over the edge window plus the weighted RMS over the flatness window.
/// `bias` is an additive model-error term on the step's grid (may be empty).
double fir_objective(const FirSpec& fir, const Waveform& step, const std::vector<double>& bias,
                     const FirObjectiveOptions& options);

struct FirFitResult {
  FirSpec spec;
  std::vector<double> history;  // best-so-far objective per generation
  double initial_objective = 0.0;
  double objective = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
  CmaesResult optimizer;
};

/// CMA-ES over the 40 FIR parameters starting from `start` (identity by
/// default). The optimiser works on running sums of the parameters (tap
/// weighted), so `optimizer` trajectories are in those coordinates. Throws
/// ConfigError for a budget below 1000 evaluations.
FirFitResult fit_fir_cmaes(const Waveform& step_after_iir, const FirObjectiveOptions& objective,
                           const CmaesOptions& optimizer, const std::vector<double>& bias = {},
                           const FirSpec& start = FirSpec::identity());

/// How the virtual experiment measures a step response.
struct MeasurementSetup {
  FluxModel flux_model = PowerLawModel{16.9, 2};
  double amplitude_phi0 = 0.06;
  double t_max_ns = 250.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  int averages = 1;  // repeated traces averaged before reconstruction
  int sg_window = 5;
  int sg_order = 2;
  TimeWindow normalize{40.0, 125.0};
};

/// Cryoscope of a long step through `pipeline` and then `plant`, followed
/// by reconstruction. Returns the normalised step response; only the
/// simulated trace reaches the estimate.
Waveform measure_step(const DistortionChain& plant, const FilterPipeline& pipeline, const MeasurementSetup& setup);

struct CalibrationOptions {
  int n_filters = 4;
  TimeWindow iir_window{30.0, 200.0};
  TimeWindow verify_window{5.0, 200.0};
  FirObjectiveOptions fir;
  CmaesOptions cmaes;
  double target = 1e-3;  // largest allowed |s - 1| over verify_window
  int max_iterations = 3;
  IirMode mode = IirMode::ideal;
};

struct IterationRecord {
  std::string stage;  // "measure", "iir", "fir"
  FilterPipeline pipeline;
  double predicted = 0.0;  // model residual of the stage's fit
  double verified = 0.0;   // max |s - 1| of the measured corrected step
  TimeWindow window;
  std::size_t evaluations = 0;
  bool fit_converged = true;
  std::vector<double> history;
  std::optional<Waveform> measured;  // normalised step seen by the experiment
};

/// Plant given as a model chain or as a measured step response.
using Plant = std::variant<DistortionChain, Waveform>;

struct CalibrationSession {
  Plant plant;
  MeasurementSetup measurement;
  CalibrationOptions options;
  FilterPipeline pipeline;
  std::vector<IterationRecord> log;  // append-only
  bool converged = false;
};

/// The chain used to simulate experiments on the plant. A step response
/// becomes a measured impulse.
DistortionChain plant_chain(const Plant& plant);

/// measure, fit IIRs, verify, fit FIR, verify, and refit the FIR with the
/// measured model error until the verified deviation is below the target
/// or the iteration cap is reached. A converged session is left unchanged.
FilterPipeline calibrate(CalibrationSession& session);

}  // namespace cryoscope
