#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cryoscope/errors.hpp"
#include "cryoscope/reconstruction.hpp"
#include "cryoscope/savgol.hpp"

using namespace cryoscope;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDt = 1.0 / 2.4;

CryoscopeTrace tone(double f_ghz, std::size_t n, double sigma = 0.0, std::uint64_t seed = 0) {
  IdealSignal s;
  for (std::size_t i = 0; i < n; ++i) {
    s.tau.push_back(i * kDt);
    s.phase.push_back(kTwoPi * f_ghz * i * kDt);
    s.visibility.push_back(1.0);
  }
  return sample_trace(s, sigma, seed);
}

double slope(const std::vector<double>& t, const std::vector<double>& y) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    sy += y[i];
    stt += t[i] * t[i];
    sty += t[i] * y[i];
  }
  return (n * sty - st * sy) / (n * stt - st * st);
}

ExperimentConfig square(double amp, std::size_t n) {
  ExperimentConfig cfg;
  cfg.truncations = truncation_grid(n);
  cfg.t_sep_ns = cfg.truncations.back() + 50.0;
  cfg.pulse = make_step(amp, *cfg.t_sep_ns + 1.0);
  return cfg;
}
}  // namespace

TEST_CASE("Savitzky-Golay reproduces polynomials") {
  std::vector<double> quad, cubic;
  for (int i = 0; i < 40; ++i) {
    const double t = i * kDt;
    quad.push_back(1.0 - 2.0 * t + 0.3 * t * t);
    cubic.push_back(0.5 + t - 0.2 * t * t + 0.01 * t * t * t);
  }
  const auto d2 = savgol_filter(quad, kDt, 5, 2, 1);
  for (int i = 0; i < 40; ++i) CHECK(d2[i] == doctest::Approx(-2.0 + 0.6 * i * kDt).epsilon(1e-9));
  const auto d3 = savgol_filter(cubic, kDt, 7, 3, 1);
  for (int i = 3; i < 37; ++i) {
    const double t = i * kDt;
    CHECK(d3[i] == doctest::Approx(1.0 - 0.4 * t + 0.03 * t * t).epsilon(1e-9));
  }
  // Central window-5 quadratic derivative weights.
  const auto w = savgol_weights(5, 2, 1, 2);
  const std::vector<double> expected{-0.2, -0.1, 0.0, 0.1, 0.2};
  for (int i = 0; i < 5; ++i) CHECK(w[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("phase extraction") {
  const auto p = extract_phase(tone(0.3, 200));
  CHECK(slope(p.t, p.phase) == doctest::Approx(kTwoPi * 0.3).epsilon(1e-6));

  CryoscopeTrace flat;
  for (int i = 0; i < 50; ++i) {
    flat.tau.push_back(i * kDt);
    flat.x.push_back(1.0);
    flat.y.push_back(0.0);
  }
  for (double v : extract_phase(flat).phase) CHECK(std::abs(v) < 1e-12);

  int within = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto q = extract_phase(tone(0.3, 200, 0.05, seed));
    if (std::abs(slope(q.t, q.phase) / (kTwoPi * 0.3) - 1.0) < 0.01) ++within;
  }
  CHECK(within == 100);

  CryoscopeTrace dead = flat;
  std::fill(dead.x.begin(), dead.x.end(), 0.0);
  CHECK_THROWS_AS(extract_phase(dead), SignalTooWeakError);
}

TEST_CASE("detuning estimate") {
  PhaseData lin;
  for (int i = 0; i < 30; ++i) {
    lin.t.push_back(i * kDt);
    lin.phase.push_back(kTwoPi * 0.5 * i * kDt);
    lin.residual.push_back(0.0);
  }
  lin.demod_freq = 0.5;
  ReconstructionConfig rc;
  for (double v : detuning_estimate(lin, rc)) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("Nyquist zones") {
  const double fn = nyquist_frequency(kDt);
  CHECK(fn == doctest::Approx(1.2));
  // 1.5 GHz sampled every 1/2.4 ns reads as -0.9 GHz.
  const auto p = extract_phase(tone(1.5, 240));
  CHECK(p.demod_freq == doctest::Approx(-0.9).epsilon(1e-9));
  CHECK(restore_nyquist(-0.9, 1, fn) == doctest::Approx(1.5));
  CHECK(restore_nyquist(0.3, 0, fn) == doctest::Approx(0.3));
  CHECK(restore_nyquist(0.3, 1, fn) == doctest::Approx(2.7));
}

TEST_CASE("square pulse reconstruction") {
  const auto cfg = square(0.15, 200);
  ReconstructionConfig rc;
  const auto r = reconstruct(simulate_trace(cfg), rc);
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    if (!r.edge[i]) CHECK(std::abs(r.phi_r[i] - 0.15) < 1e-4);
  }
  CHECK(r.edge.front());
  CHECK(r.edge.back());
}

TEST_CASE("low-pass analytic reconstruction") {
  ExperimentConfig cfg;
  cfg.truncations = truncation_grid(241);
  cfg.t_sep_ns = 300.0;
  cfg.pulse = make_step(0.2, 301.0);
  cfg.chain.models.emplace_back(LowPass{10.0});
  ReconstructionConfig rc;
  rc.sg_window = 3;
  const auto r = reconstruct(simulate_trace(cfg), rc);
  for (std::size_t i = 1; i < r.t.size(); ++i) {
    const double x = std::exp(-r.t[i] / 10.0);
    const double s_r = r.phi_r[i] / 0.2;
    CHECK(std::abs(s_r - std::sqrt(1.0 - x)) <= 1e-3);
    CHECK(s_r - (1.0 - x) >= 0.0);
    CHECK(s_r - (1.0 - x) <= 0.5 * x);
  }
}

TEST_CASE("range policy") {
  const FluxModel tm = TransmonParams{20.0, 0.25};
  auto cfg = square(0.3, 60);
  cfg.flux_model = tm;
  const auto trace = simulate_trace(cfg);
  ReconstructionConfig rc;
  rc.flux_model = TransmonParams{1.0, 0.2};  // max detuning below the signal
  CHECK_THROWS_AS(reconstruct(trace, rc), RangeError);
  rc.range_policy = RangePolicy::clip;
  const auto r = reconstruct(trace, rc);
  CHECK(r.clipped > 0);
}

TEST_CASE("Nyquist order scan") {
  auto trace_at = [](double df) {
    auto cfg = square(std::sqrt(df / 16.9), 120);
    return simulate_trace(cfg);
  };
  ReconstructionConfig rc;
  {
    const std::vector<CryoscopeTrace> t{trace_at(0.3), trace_at(0.9)};
    CHECK(nyquist_order_scan(t, rc) == std::vector<int>{0, 0});
  }
  {
    const std::vector<CryoscopeTrace> t{trace_at(0.9), trace_at(1.5)};
    CHECK(nyquist_order_scan(t, rc) == std::vector<int>{0, 1});
  }
  {
    std::vector<std::string> seen;
    const auto old = set_warning_handler([&](std::string_view m) { seen.emplace_back(m); });
    const std::vector<CryoscopeTrace> t{trace_at(0.6), trace_at(1.19)};
    nyquist_order_scan(t, rc);
    set_warning_handler(old);
    CHECK(seen.size() == 1);
  }
  const std::vector<CryoscopeTrace> one{trace_at(0.3)};
  CHECK_THROWS_AS(nyquist_order_scan(one, rc), ConfigError);
}
