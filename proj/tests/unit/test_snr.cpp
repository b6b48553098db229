#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "cryoscope/errors.hpp"
#include "cryoscope/snr.hpp"

using namespace cryoscope;

namespace {
const SnrModelParams kReference{1.0, 66.7e-3, 0.213e-3, 16.9};
const FluxModel kQuad = PowerLawModel{16.9, 2};

std::vector<SnrMeasurement> synthetic(const SnrModelParams& p, double rel_noise, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<SnrMeasurement> out;
  for (TimeWindow w : {TimeWindow{100, 200}, TimeWindow{600, 700}, TimeWindow{1200, 1300}}) {
    for (double phi : {0.05, 0.1, 0.15, 0.2, 0.25}) {
      SnrMeasurement m;
      m.amplitude = phi;
      m.window = w;
      m.snr = predict_snr(p, phi, 0.5 * (w.t_min_ns + w.t_max_ns)) * (1.0 + rel_noise * nd(gen));
      out.push_back(m);
    }
  }
  return out;
}
}  // namespace

TEST_CASE("SNR model") {
  CHECK(predict_snr(kReference, 0.0, 500.0) == 0.0);
  CHECK(predict_snr(kReference, 0.2, 0.0) == doctest::Approx(0.04));
  const double t = 150.0;
  const double expected = 0.04 * std::exp(-(66.7e-3 + 2.0 * 16.9 * 0.213e-3 * 0.2 * 1e3) * t * 1e-3);
  CHECK(predict_snr(kReference, 0.2, t) == doctest::Approx(expected).epsilon(1e-12));
  const double star = snr_optimal_flux(kReference, 1250.0);
  CHECK(star == doctest::Approx(1.0 / (16.9 * 0.213e-3 * 1.25e3)));
  for (double d : {-0.01, 0.01}) CHECK(predict_snr(kReference, star + d, 1250.0) < predict_snr(kReference, star, 1250.0));
}

TEST_CASE("SNR fit") {
  const auto noisy = synthetic(kReference, 0.05, 1);
  const auto fit = fit_snr(noisy, kReference);
  CHECK(std::abs(fit.gamma1 / kReference.gamma1 - 1.0) < 0.1);

  auto flat = kReference;
  flat.gamma1 = 0.0;
  CHECK(fit_snr(synthetic(flat, 0.0, 2), kReference).gamma1 < 1e-5);

  std::vector<SnrMeasurement> single;
  for (const auto& m : noisy) {
    if (m.amplitude == 0.1) single.push_back(m);
  }
  CHECK_THROWS_AS(fit_snr(single, kReference), IdentifiabilityError);
}

TEST_CASE("measured SNR") {
  ReconstructionConfig rc;
  rc.flux_model = kQuad;
  const TimeWindow w{100.0, 200.0};
  const DephasingParams none{};
  SUBCASE("zero noise is capped") {
    const auto cfg = snr_experiment(0.15, w, 0.0, 1, kQuad, none);
    const auto m = measure_snr(cfg, rc, w, 4);
    CHECK(m.capped);
    CHECK(m.snr == kSnrCap);
    CHECK(m.mean == doctest::Approx(0.15).epsilon(1e-6));
  }
  SUBCASE("doubling the noise halves the SNR") {
    const auto a = measure_snr(snr_experiment(0.15, w, 0.01, 7, kQuad, none), rc, w, 200);
    const auto b = measure_snr(snr_experiment(0.15, w, 0.02, 8, kQuad, none), rc, w, 200);
    CHECK(a.snr / b.snr == doctest::Approx(2.0).epsilon(0.1));
  }
  SUBCASE("thread count does not change the result") {
    const auto cfg = snr_experiment(0.1, w, 0.02, 9, kQuad, none);
    setenv("CRYOSCOPE_THREADS", "1", 1);
    const auto one = measure_snr(cfg, rc, w, 40);
    setenv("CRYOSCOPE_THREADS", "7", 1);
    const auto many = measure_snr(cfg, rc, w, 40);
    unsetenv("CRYOSCOPE_THREADS");
    CHECK(one.snr == many.snr);
    CHECK(one.mean == many.mean);
  }
  SUBCASE("window must sit on the plateau") {
    auto cfg = snr_experiment(0.1, w, 0.02, 9, kQuad, none);
    CHECK_THROWS_AS(measure_snr(cfg, rc, {100.0, 5000.0}, 10), ConfigError);
  }
}

TEST_CASE("phase difference noise") {
  // Two independent readouts of the same phase: std of the difference is
  // sqrt(2) sigma / x0 for small sigma / x0.
  const std::size_t n = 100000;
  for (double ratio : {0.05, 0.1, 0.2}) {
    const double x0 = 0.8;
    IdealSignal s;
    s.tau.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) s.tau[i] = static_cast<double>(i);
    s.phase.assign(n, 0.3);
    s.visibility.assign(n, x0);
    const auto a = sample_trace(s, ratio * x0, 11);
    const auto b = sample_trace(s, ratio * x0, 12);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::remainder(std::atan2(a.y[i], a.x[i]) - std::atan2(b.y[i], b.x[i]), 2.0 * M_PI);
      sum += d;
      sum2 += d * d;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sum2 / n - mean * mean);
    CHECK(sd == doctest::Approx(std::sqrt(2.0) * ratio).epsilon(0.02));
  }
}
