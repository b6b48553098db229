#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cryoscope/calibration.hpp"
#include "cryoscope/flux_model.hpp"
#include "cryoscope/lti.hpp"
#include "cryoscope/reconstruction.hpp"
#include "cryoscope/rt_filters.hpp"
#include "cryoscope/snr.hpp"
#include "cryoscope/virtual_cryoscope.hpp"

namespace cryoscope {

/// AWG pulse description. Files are read at parse time and kept as samples.
struct PulseSpec {
  enum class Kind { step, skyline, samples } kind = Kind::step;
  double amplitude_phi0 = 0.0;         // step
  double duration_ns = 0.0;            // step
  std::vector<double> levels_phi0;     // skyline
  std::vector<double> durations_ns;    // skyline
  Waveform samples;                    // samples
};

/// Concatenated constant segments on the AWG grid; each duration is rounded
/// to whole samples.
Waveform make_skyline(const std::vector<double>& levels_phi0, const std::vector<double>& durations_ns,
                      double sample_rate = kAwgSampleRate);

Waveform build_pulse(const PulseSpec& spec);

struct ExperimentSection {
  PulseSpec pulse;
  double t_min_ns = 0.0;
  double t_max_ns = 0.0;
  std::optional<double> t_sep_ns;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  int oversampling = 4;
  // Rescales the pulse so that the largest on-chip detuning equals this.
  std::optional<double> nominal_detuning_ghz;
};

struct ReconstructionSection {
  ReconstructionConfig config;
  bool nyquist_auto = false;
};

struct CalibrationSection {
  MeasurementSetup measurement;
  CalibrationOptions options;
  std::optional<Waveform> plant_step;  // replaces the chain as the plant
};

struct SnrSection {
  std::vector<double> amplitudes_phi0;
  std::vector<TimeWindow> windows;
  std::size_t n_trials = 200;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
};

struct ConfigDocument {
  FluxModel flux_model = PowerLawModel{16.9, 2};
  std::optional<DephasingParams> dephasing;
  DistortionChain chain;
  FilterPipeline pipeline;
  std::optional<ExperimentSection> experiment;
  ReconstructionSection reconstruction;
  CalibrationSection calibration;
  std::optional<SnrSection> snr;
};

/// Parses and validates a config document. Unknown keys, wrong types and
/// invalid values raise SchemaError naming the path of the offending value.
/// Relative file references resolve against `base_dir`.
ConfigDocument parse_config(std::string_view json_text, const std::filesystem::path& base_dir = ".");
ConfigDocument load_config(const std::filesystem::path& path);

/// Self-contained JSON for a document: defaults filled in and files inlined,
/// so parse_config(to_json(doc)) reproduces `doc`.
std::string to_json(const ConfigDocument& doc);

/// Pipeline in the same schema as the "pipeline" section.
std::string pipeline_to_json(const FilterPipeline& pipeline);
FilterPipeline pipeline_from_json(std::string_view json_text);

/// Experiment described by the document (pulse scaled to the nominal
/// detuning when requested). Throws ConfigError without an experiment
/// section.
ExperimentConfig build_experiment(const ConfigDocument& doc);

ReconstructionConfig build_reconstruction(const ConfigDocument& doc);

/// Session skeleton for the document's plant and calibration settings.
CalibrationSession build_session(const ConfigDocument& doc);

/// Session files: the document, the pipeline and the append-only log.
std::string session_to_json(const CalibrationSession& session, const ConfigDocument& doc);
CalibrationSession session_from_json(std::string_view json_text);
/// The document recorded in a session file.
ConfigDocument session_config(std::string_view json_text);

}  // namespace cryoscope
