#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cryoscope {

/// Sample rate of the AWG in samples per ns (2.4 GSa/s).
inline constexpr double kAwgSampleRate = 2.4;

/// Uniformly sampled real signal. Time is in ns, rate in samples per ns.
struct Waveform {
  std::vector<double> samples;
  double sample_rate = kAwgSampleRate;
  double t0 = 0.0;

  std::size_t size() const { return samples.size(); }
  double dt() const { return 1.0 / sample_rate; }
  double time(std::size_t i) const { return t0 + static_cast<double>(i) / sample_rate; }
  std::span<const double> view() const { return samples; }
};

/// Throws ConfigError unless the rate is positive, the waveform is non-empty
/// and every sample is finite.
void validate(const Waveform& wf);

/// Unit-amplitude step held for `duration_ns`, starting at t = 0.
Waveform make_step(double amplitude, double duration_ns, double sample_rate = kAwgSampleRate);

/// Time axis of `wf`.
std::vector<double> time_axis(const Waveform& wf);

/// Index of the first sample with time >= t (clamped to size()).
std::size_t index_at_or_after(const Waveform& wf, double t_ns);

}  // namespace cryoscope
