#include "cryoscope/virtual_cryoscope.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cryoscope/convolution.hpp"
#include "cryoscope/errors.hpp"

namespace cryoscope {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t grid_index(double t, double rate, const char* what) {
  const double x = t * rate;
  const double n = std::round(x);
  if (n < 0.0 || std::abs(x - n) > 1e-6 * std::max(1.0, n)) {
    std::ostringstream os;
    os << what << " " << t << " ns is not on the " << rate << "/ns pulse grid";
    throw ConfigError(os.str());
  }
  return static_cast<std::size_t>(n);
}

// Incremental flux builder on the oversampled midpoint grid
// t_j = (j + 1/2) delta, j < M. Adding AWG sample m only touches j >= os m,
// so flux before a truncation edge is bitwise unaffected by later samples.
class FluxBuilder {
 public:
  FluxBuilder(const ExperimentConfig& cfg, double t_sep) : pulse_(cfg.pulse) {
    os_ = static_cast<std::size_t>(cfg.oversampling);
    fine_rate_ = pulse_.sample_rate * static_cast<double>(os_);
    delta_ = 1.0 / fine_rate_;
    m_ = static_cast<std::size_t>(std::ceil(t_sep * fine_rate_ - 1e-9));
    period_ = is_time_invariant(cfg.predistortion) ? 1 : kIirUpdatePeriod;

    const auto kernel = impulse_response_offset(cfg.chain, fine_rate_, m_, 0.5).samples;
    const std::size_t n_awg = m_ / os_ + 2;
    responses_.reserve(period_);
    for (std::size_t c = 0; c < period_; ++c) {
      Waveform e{std::vector<double>(n_awg, 0.0), pulse_.sample_rate, 0.0};
      e.samples[c] = 1.0;
      const auto w = cfg.predistortion.empty() ? e : apply_pipeline(cfg.predistortion, e);
      // Zero-order hold, shifted so sample c lands at index 0.
      std::vector<double> held(m_, 0.0);
      for (std::size_t j = 0; j < m_; ++j) {
        const std::size_t src = c + j / os_;
        if (src < w.size()) held[j] = w.samples[src];
      }
      responses_.push_back(convolve(held, kernel, m_));
    }
    flux_.assign(m_, 0.0);
  }

  std::size_t size() const { return m_; }
  double delta() const { return delta_; }
  std::size_t oversampling() const { return os_; }
  const std::vector<double>& flux() const { return flux_; }

  // Adds pulse samples [next_, n) to the flux.
  void extend_to(std::size_t n) {
    n = std::min(n, pulse_.size());
    for (; next_ < n; ++next_) {
      const double v = pulse_.samples[next_];
      const std::size_t c = next_ % period_;
      const std::size_t shift = os_ * (next_ - c);
      if (v == 0.0 || shift >= m_) continue;
      const auto& r = responses_[c];
      for (std::size_t j = shift; j < m_; ++j) flux_[j] += v * r[j - shift];
    }
  }

 private:
  const Waveform& pulse_;
  std::size_t os_ = 4;
  double fine_rate_ = 0.0;
  double delta_ = 0.0;
  std::size_t m_ = 0;
  std::size_t period_ = 1;
  std::vector<std::vector<double>> responses_;
  std::vector<double> flux_;
  std::size_t next_ = 0;
};

[[noreturn]] void rethrow_at(const DomainError& e, double t) {
  std::ostringstream os;
  os << e.what() << " at t = " << t << " ns";
  throw DomainError(os.str());
}

// delta * sum of the detuning over fine indices [begin, end).
double detuning_sum(const FluxModel& model, const std::vector<double>& flux, std::size_t begin, std::size_t end,
                    double delta) {
  double acc = 0.0;
  std::size_t j = begin;
  try {
    for (; j < end; ++j) acc += detuning_from_flux(model, flux[j]);
  } catch (const DomainError& e) {
    rethrow_at(e, (static_cast<double>(j) + 0.5) * delta);
  }
  return acc * delta;
}

double dephasing_integral(const DephasingParams& dp, const FluxModel& model, const std::vector<double>& flux,
                          double delta) {
  double acc = 0.0;
  std::size_t j = 0;
  try {
    for (; j < flux.size(); ++j) acc += dephasing_rate(dp, model, flux[j]);
  } catch (const DomainError& e) {
    rethrow_at(e, (static_cast<double>(j) + 0.5) * delta);
  }
  return per_us_to_per_ns(acc) * delta;
}

bool constant_amplitude(const ExperimentConfig& cfg) {
  if (!cfg.chain.models.empty() || !cfg.predistortion.empty()) return false;
  double level = 0.0;
  for (double v : cfg.pulse.samples) {
    if (v == 0.0) continue;
    if (level == 0.0) level = v;
    if (v != level) return false;
  }
  // The pulse must not switch off and on again.
  bool ended = false;
  bool started = false;
  for (double v : cfg.pulse.samples) {
    if (v != 0.0) {
      if (ended) return false;
      started = true;
    } else if (started) {
      ended = true;
    }
  }
  return true;
}

}  // namespace

double separation_time(const ExperimentConfig& cfg) {
  if (cfg.t_sep_ns) return *cfg.t_sep_ns;
  const double last = cfg.truncations.empty() ? 0.0 : cfg.truncations.back();
  return last + 100.0;
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.pulse);
  if (cfg.pulse.t0 != 0.0) throw ConfigError("experiment pulse must start at t0 = 0");
  if (cfg.truncations.empty()) throw ConfigError("experiment needs at least one truncation time");
  for (std::size_t i = 0; i < cfg.truncations.size(); ++i) {
    if (!std::isfinite(cfg.truncations[i]) || cfg.truncations[i] < 0.0) {
      throw ConfigError("truncation times must be finite and non-negative");
    }
    if (i > 0 && !(cfg.truncations[i] > cfg.truncations[i - 1])) {
      throw ConfigError("truncation times must be strictly increasing");
    }
    grid_index(cfg.truncations[i], cfg.pulse.sample_rate, "truncation");
  }
  const double t_sep = separation_time(cfg);
  if (!(t_sep > cfg.truncations.back()) || !std::isfinite(t_sep)) {
    throw ConfigError("t_sep must exceed the largest truncation time");
  }
  if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma)) {
    throw ConfigError("noise_sigma must be non-negative");
  }
  if (cfg.oversampling < 4) throw ConfigError("oversampling must be at least 4");
  validate(cfg.flux_model);
  validate(cfg.chain);
  for (const auto& f : cfg.predistortion.iir) iir_coefficients(f, cfg.pulse.sample_rate);
  if (cfg.dephasing) {
    validate(*cfg.dephasing);
    if (cfg.dephasing->alpha_exp != 1.0 && !constant_amplitude(cfg)) {
      throw ConfigError("dephasing alpha_exp != 1 is only defined for constant-amplitude pulses on an ideal line");
    }
  }
}

std::vector<double> truncation_grid(std::size_t count, double sample_rate, std::size_t first) {
  std::vector<double> tau(count);
  for (std::size_t i = 0; i < count; ++i) tau[i] = static_cast<double>(first + i) / sample_rate;
  return tau;
}

double acquired_phase(const ExperimentConfig& cfg, double tau) {
  ExperimentConfig c = cfg;
  c.truncations = {tau};
  if (!c.t_sep_ns) c.t_sep_ns = separation_time(cfg);
  validate(c);
  FluxBuilder fb(c, *c.t_sep_ns);
  fb.extend_to(grid_index(tau, c.pulse.sample_rate, "truncation"));
  return kTwoPi * detuning_sum(c.flux_model, fb.flux(), 0, fb.size(), fb.delta());
}

EpsilonTerms epsilon_decomposition(const ExperimentConfig& cfg, double tau, double dtau) {
  ExperimentConfig c = cfg;
  c.truncations = {tau, tau + dtau};
  if (!c.t_sep_ns) c.t_sep_ns = separation_time(cfg);
  if (!(dtau > 0.0)) throw ConfigError("dtau must be positive");
  validate(c);
  const double rate = c.pulse.sample_rate;
  const std::size_t na = grid_index(tau, rate, "truncation");
  const std::size_t nb = grid_index(tau + dtau, rate, "truncation");

  FluxBuilder fb(c, *c.t_sep_ns);
  const std::size_t os = fb.oversampling();
  const std::size_t m = fb.size();
  const std::size_t ja = std::min(os * na, m);
  const std::size_t jb = std::min(os * nb, m);
  fb.extend_to(na);
  const auto before = fb.flux();
  fb.extend_to(nb);
  const auto& after = fb.flux();
  const double d = fb.delta();
  const auto& model = c.flux_model;

  const double head = detuning_sum(model, before, 0, ja, d);
  const double off = detuning_sum(model, before, ja, m, d);
  const double q = detuning_sum(model, after, ja, jb, d);
  const double on = detuning_sum(model, after, jb, m, d);

  EpsilonTerms r;
  r.df_q = q / dtau;
  r.eps_on = on / dtau;
  r.eps_off = off / dtau;
  r.eps = r.eps_on - r.eps_off;
  const double phi_a = head + off;
  const double phi_b = detuning_sum(model, after, 0, ja, d) + q + on;
  r.df_r = (phi_b - phi_a) / dtau;
  return r;
}

IdealSignal compute_ideal_signal(const ExperimentConfig& cfg) {
  validate(cfg);
  const double t_sep = separation_time(cfg);
  FluxBuilder fb(cfg, t_sep);
  IdealSignal out;
  out.tau = cfg.truncations;
  out.phase.reserve(cfg.truncations.size());
  out.visibility.reserve(cfg.truncations.size());
  for (double tau : cfg.truncations) {
    fb.extend_to(grid_index(tau, cfg.pulse.sample_rate, "truncation"));
    out.phase.push_back(kTwoPi * detuning_sum(cfg.flux_model, fb.flux(), 0, fb.size(), fb.delta()));
    double r = 1.0;
    if (cfg.dephasing) {
      const double g = dephasing_integral(*cfg.dephasing, cfg.flux_model, fb.flux(), fb.delta());
      r = std::exp(-std::pow(g, cfg.dephasing->alpha_exp));
    }
    out.visibility.push_back(r);
  }
  return out;
}

CryoscopeTrace sample_trace(const IdealSignal& signal, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("noise_sigma must be non-negative");
  const std::size_t n = signal.tau.size();
  CryoscopeTrace t;
  t.tau = signal.tau;
  t.x.resize(n);
  t.y.resize(n);
  t.noise_sigma = sigma;
  t.seed = seed;
  const double bound = 1.0 + 5.0 * sigma;
  for (std::size_t i = 0; i < n; ++i) {
    double x = signal.visibility[i] * std::cos(signal.phase[i]);
    double y = signal.visibility[i] * std::sin(signal.phase[i]);
    if (sigma > 0.0) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(std::uint64_t{i} >> 32)};
      std::mt19937_64 gen(seq);
      std::normal_distribution<double> noise(0.0, sigma);
      x = std::clamp(x + noise(gen), -bound, bound);
      y = std::clamp(y + noise(gen), -bound, bound);
    }
    t.x[i] = x;
    t.y[i] = y;
  }
  return t;
}

CryoscopeTrace simulate_trace(const ExperimentConfig& cfg) {
  auto trace = sample_trace(compute_ideal_signal(cfg), cfg.noise_sigma, cfg.seed);
  trace.config = cfg;
  return trace;
}

Waveform on_chip_flux(const ExperimentConfig& cfg, double t_end_ns) {
  validate(cfg.pulse);
  if (cfg.pulse.t0 != 0.0) throw ConfigError("experiment pulse must start at t0 = 0");
  const double rate = cfg.pulse.sample_rate;
  const std::size_t n = static_cast<std::size_t>(std::floor(t_end_ns * rate + 1e-9)) + 1;
  FluxBuilder fb(cfg, static_cast<double>(n) / rate);
  fb.extend_to(cfg.pulse.size());
  const auto& f = fb.flux();
  const std::size_t os = fb.oversampling();
  Waveform out{std::vector<double>(n, 0.0), rate, 0.0};
  // Grid points sit between two midpoints.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i * os;
    const double right = j < f.size() ? f[j] : 0.0;
    const double left = j > 0 ? f[j - 1] : 0.0;
    out.samples[i] = 0.5 * (left + right);
  }
  return out;
}

}  // namespace cryoscope
