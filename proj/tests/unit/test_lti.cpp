#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "cryoscope/convolution.hpp"
#include "cryoscope/errors.hpp"
#include "cryoscope/lti.hpp"

using namespace cryoscope;

namespace {
std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(gen);
  return v;
}
}  // namespace

TEST_CASE("step responses") {
  const std::vector<DistortionModel> models{ExpStep{0.6, 2.0, 1.0}, HighPass{100.0}, LowPass{5.0}, SkinEffect{2.1},
                                            synthetic_awg_response()};
  for (const auto& m : models) CHECK(step_response(m, -1.0) == 0.0);
  CHECK(step_response(ExpStep{0.6, 2.0, 1.0}, 2.0) == doctest::Approx(1.0 + 0.6 / std::numbers::e).epsilon(1e-14));
  CHECK(step_response(ExpStep{0.6, 2.0, 1.0}, 2.0) == doctest::Approx(1.22073).epsilon(1e-5));
  CHECK(step_response(LowPass{5.0}, 1e4) == doctest::Approx(1.0));
  CHECK(dc_gain(LowPass{5.0}) == 1.0);
  CHECK(dc_gain(HighPass{5.0}) == 0.0);
  CHECK(dc_gain(ExpStep{0.6, 2.0, 0.9}) == doctest::Approx(0.9));
  // erfc form rises monotonically from 0 towards 1.
  CHECK(step_response(SkinEffect{2.1}, 1.0) == doctest::Approx(std::erfc(0.1)));
  CHECK(step_response(SkinEffect{2.1}, 10.0) < step_response(SkinEffect{2.1}, 100.0));
}

TEST_CASE("impulse responses") {
  const auto id = impulse_response(DistortionChain{}, 2.4, 16);
  CHECK(id.samples[0] == 1.0);
  for (std::size_t i = 1; i < id.size(); ++i) CHECK(id.samples[i] == 0.0);

  const ExpStep e{0.6, 2.0, 1.0};
  const auto h = impulse_response(DistortionModel{e}, 2.4, 200);
  double acc = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) {
    acc += h.samples[n];
    CHECK(std::abs(acc - step_response(e, n / 2.4)) < 1e-6);
  }

  const auto awg = synthetic_awg_response(2.4);
  const auto same = impulse_response(DistortionModel{awg}, 2.4, awg.impulse.size());
  for (std::size_t n = 0; n < same.size(); ++n) CHECK(same.samples[n] == doctest::Approx(awg.impulse.samples[n]));
}

TEST_CASE("offset kernels sample the step response between grid points") {
  DistortionChain c;
  c.models.emplace_back(LowPass{3.0});
  const double rate = 9.6;
  const auto h = impulse_response_offset(c, rate, 300, 0.5);
  double acc = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) {
    acc += h.samples[n];
    CHECK(acc == doctest::Approx(1.0 - std::exp(-(n + 0.5) / rate / 3.0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(impulse_response_offset(c, rate, 10, 1.0), ConfigError);
}

TEST_CASE("apply") {
  const auto x = Waveform{random_vector(500, 3), 2.4, 0.0};
  const auto same = apply(DistortionChain{}, x);
  CHECK(same.samples == x.samples);

  DistortionChain lp;
  lp.models.emplace_back(LowPass{10.0});
  const auto step = make_step(1.0, 200.0);
  const auto y = apply(lp, step);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(std::abs(y.samples[i] - (1.0 - std::exp(-step.time(i) / 10.0))) < 1e-4);
  }
}

TEST_CASE("typical line step shape") {
  const auto y = apply(typical_control_line(), make_step(1.0, 2000.0));
  auto at = [&](double t) { return y.samples[index_at_or_after(y, t)]; };
  // On-chip overshoot decays within a few ns onto the bias-tee level, which
  // then sags slowly.
  CHECK(at(2.0) > at(10.0) * 1.1);
  CHECK(at(50.0) > at(1500.0));
  CHECK(at(1500.0) > 0.5 * at(50.0));
  CHECK(y.samples[0] < 1e-3);
}

TEST_CASE("convolution routes agree") {
  const auto x = random_vector(6000, 1);
  const auto k = random_vector(5000, 2);
  const auto a = convolve_direct(x, k, 6000);
  const auto b = convolve_fft(x, k, 6000);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst < 1e-9);
  // Hand example.
  const std::vector<double> u{1, 2, 3}, h{1, -1};
  CHECK(convolve(u, h, 4) == std::vector<double>{1, 1, 1, -3});
}

TEST_CASE("dft matches the definition") {
  std::vector<std::complex<double>> x;
  for (double v : random_vector(37, 9)) x.emplace_back(v, 0.5 * v);
  const auto X = dft(x);
  for (std::size_t k = 0; k < x.size(); k += 5) {
    std::complex<double> acc{};
    for (std::size_t n = 0; n < x.size(); ++n) {
      acc += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * n) / double(x.size()));
    }
    CHECK(std::abs(X[k] - acc) < 1e-10);
  }
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(validate(DistortionModel{LowPass{-1.0}}), ConfigError);
  CHECK_THROWS_AS(validate(DistortionModel{ExpStep{0.1, 0.0, 1.0}}), ConfigError);
  MeasuredImpulse coarse{Waveform{{1.0}, 1.0, 0.0}};
  DistortionChain c;
  c.models.emplace_back(coarse);
  CHECK_THROWS_AS(apply(c, make_step(1.0, 10.0)), ConfigError);
}
