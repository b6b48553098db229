#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cryoscope/calibration.hpp"
#include "cryoscope/errors.hpp"
#include "cryoscope/lti.hpp"
#include "cryoscope/rt_filters.hpp"

using namespace cryoscope;

namespace {
Waveform noise(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Waveform w{std::vector<double>(n), kAwgSampleRate, 0.0};
  for (double& v : w.samples) v = nd(gen);
  return w;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b, std::size_t from = 0) {
  double m = 0.0;
  for (std::size_t i = from; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
}  // namespace

TEST_CASE("A = 0 corrector is the identity") {
  const auto c = iir_coefficients({0.0, 80.0}, kAwgSampleRate);
  CHECK(c.b0 == 1.0);
  CHECK(c.b1 == c.a1);
  const auto x = noise(3000, 1);
  for (auto mode : {IirMode::ideal, IirMode::hardware}) {
    CHECK(max_diff(apply_iir({0.0, 80.0, mode}, x).samples, x.samples) <= 1e-12);
  }
}

TEST_CASE("bias-tee coefficients") {
  const auto c = iir_coefficients({0.13, 15000.0}, kAwgSampleRate);
  // Pinned values for A = 0.13, tau = 15 us, fs = 2.4 /ns.
  CHECK(c.alpha == doctest::Approx(2.4581802091e-05).epsilon(1e-9));
  CHECK(c.k == doctest::Approx(0.1150467505).epsilon(1e-9));
  CHECK(c.b0 == doctest::Approx(0.8849560776).epsilon(1e-9));
  CHECK(c.b1 == doctest::Approx(-0.8849314958).epsilon(1e-9));
  CHECK(c.a1 == doctest::Approx(-0.9999754182).epsilon(1e-9));
  CHECK(c.a0 == 1.0);
}

TEST_CASE("difference equation and state form agree") {
  const auto x = noise(5000, 2);
  for (const auto& s : {IirExpSpec{0.13, 15000.0}, IirExpSpec{0.99, 6400.0}, IirExpSpec{0.6, 2.0},
                        IirExpSpec{-0.4, 30.0}, IirExpSpec{3.0, 1.0}}) {
    const auto c = iir_coefficients(s, kAwgSampleRate);
    CHECK(max_diff(iir_difference_equation(c, x.samples), iir_state_form(c, x.samples)) <= 1e-10);
  }
}

TEST_CASE("DC gain") {
  const auto c = iir_coefficients({0.3, 5.0}, kAwgSampleRate);
  Waveform x{std::vector<double>(2000, 0.7), kAwgSampleRate, 0.0};
  const auto y = apply_iir({0.3, 5.0}, x);
  CHECK(y.samples.back() == doctest::Approx(0.7 * (c.b0 + c.b1) / (1.0 + c.a1)).epsilon(1e-12));
}

TEST_CASE("corrector flattens its matched on-chip overshoot") {
  DistortionChain plant;
  plant.models.emplace_back(ExpStep{0.6, 2.0, 1.0});
  const auto step = apply(plant, make_step(1.0, 200.0));
  const auto y = apply_iir({0.6, 2.0}, step);
  for (std::size_t i = index_at_or_after(y, 20.0); i < y.size(); ++i) CHECK(std::abs(y.samples[i] - 1.0) < 1e-4);
}

TEST_CASE("hardware approximation") {
  const auto step = make_step(1.0, 3000.0);
  const auto ideal = apply_iir({0.13, 15000.0, IirMode::ideal}, step);
  const auto hw = apply_iir({0.13, 15000.0, IirMode::hardware}, step);
  const double early = max_diff(ideal.samples, hw.samples, 0);
  const double late = max_diff(ideal.samples, hw.samples, kIirAverageWindow);
  CHECK(late < 1e-3);
  CHECK(late <= early);
  // Between state refreshes the output follows the input with the held
  // state: differences of consecutive outputs are (1 - k) times the input's.
  const auto c = iir_coefficients({0.13, 15000.0}, kAwgSampleRate);
  const auto x = noise(64, 4);
  const auto y = iir_hardware_form(c, x.samples);
  REQUIRE(y.size() == x.size());
  int held = 0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (std::abs((y[i] - y[i - 1]) - (1.0 - c.k) * (x.samples[i] - x.samples[i - 1])) < 1e-12) ++held;
  }
  CHECK(held >= 64 - 64 / static_cast<int>(kIirUpdatePeriod) - 1);
}

TEST_CASE("FIR parameter mapping") {
  auto id = fir_from_params(FirSpec::identity().params);
  CHECK(id[0] == 1.0);
  for (std::size_t i = 1; i < id.size(); ++i) CHECK(id[i] == 0.0);
  std::vector<double> p(kFirParamCount, 0.0);
  p[8] = 0.5;
  const auto t = fir_from_params(p);
  CHECK(t[8] == 0.5);
  CHECK(t[9] == 0.5);
  p[39] = 2.0;
  CHECK(fir_from_params(p)[70] == 2.0);
  CHECK(fir_from_params(p)[71] == 2.0);
  CHECK_THROWS_AS(fir_from_params(std::vector<double>(39, 0.0)), ShapeError);
}

TEST_CASE("apply_fir") {
  const auto x = noise(400, 5);
  CHECK(apply_fir(FirSpec::identity(), x).samples == x.samples);
  FirTaps half{};
  half[0] = 0.5;
  half[1] = 0.5;
  const auto y = apply_fir(half, make_step(1.0, 10.0));
  CHECK(y.samples[0] == 0.5);
  for (std::size_t i = 1; i < y.size(); ++i) CHECK(y.samples[i] == 1.0);
}

TEST_CASE("pipelines") {
  const auto x = noise(1500, 6);
  CHECK(apply_pipeline(FilterPipeline{}, x).samples == x.samples);

  FirSpec fir = FirSpec::identity();
  fir.params[1] = -0.2;
  fir.params[10] = 0.05;
  const IirExpSpec a{0.2, 40.0}, b{-0.1, 3.0};
  FilterPipeline p{{a, b}, fir};
  const auto forward = apply_pipeline(p, x);
  const auto reversed = apply_iir(a, apply_iir(b, apply_fir(fir, x)));
  CHECK(max_diff(forward.samples, reversed.samples) < 1e-8);

  CHECK(is_time_invariant(p));
  CHECK_FALSE(is_time_invariant(with_mode(p, IirMode::hardware)));
  CHECK_THROWS_AS(iir_coefficients({-1.0, 3.0}, kAwgSampleRate), InstabilityError);
  CHECK_THROWS_AS(iir_coefficients({0.1, 0.0}, kAwgSampleRate), InstabilityError);
}

TEST_CASE("matched inverse of the bias-tee components") {
  // Corrected step after sample 0. The coefficient formulas are first order
  // in 1 / (fs tau), so the residual is small but not exact.
  for (const auto& e : {ExpStep{0.13, 15000.0, 1.0}, ExpStep{0.1, 100.0, 1.0}}) {
    DistortionChain plant;
    plant.models.emplace_back(e);
    const auto step = apply(plant, make_step(1.0, 300.0));
    FilterPipeline fp;
    fp.iir.push_back({e.A, e.tau_ns});
    const auto y = predict_corrected_step(step, fp);
    double dev = 0.0;
    for (std::size_t i = 1; i < y.size(); ++i) dev = std::max(dev, std::abs(y.samples[i] - 1.0));
    CHECK(dev < 1e-4);
  }
}
