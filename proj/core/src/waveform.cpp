#include "cryoscope/waveform.hpp"

#include <cmath>
#include <string>

#include "cryoscope/errors.hpp"

namespace cryoscope {

void validate(const Waveform& wf) {
  if (!(wf.sample_rate > 0.0) || !std::isfinite(wf.sample_rate)) {
    throw ConfigError("waveform sample_rate must be positive, got " + std::to_string(wf.sample_rate));
  }
  if (wf.samples.empty()) throw ConfigError("waveform must contain at least one sample");
  if (!std::isfinite(wf.t0)) throw ConfigError("waveform t0 must be finite");
  for (std::size_t i = 0; i < wf.samples.size(); ++i) {
    if (!std::isfinite(wf.samples[i])) {
      throw ConfigError("waveform sample " + std::to_string(i) + " is not finite");
    }
  }
}

Waveform make_step(double amplitude, double duration_ns, double sample_rate) {
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration_ns * sample_rate));
  if (n == 0) throw ConfigError("step duration shorter than one sample");
  return Waveform{std::vector<double>(n, amplitude), sample_rate, 0.0};
}

std::vector<double> time_axis(const Waveform& wf) {
  std::vector<double> t(wf.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = wf.time(i);
  return t;
}

std::size_t index_at_or_after(const Waveform& wf, double t_ns) {
  const double x = (t_ns - wf.t0) * wf.sample_rate;
  if (x <= 0.0) return 0;
  const double c = std::ceil(x - 1e-9);
  if (c >= static_cast<double>(wf.size())) return wf.size();
  return static_cast<std::size_t>(c);
}

}  // namespace cryoscope
