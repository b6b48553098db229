#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cryoscope/errors.hpp"
#include "cryoscope/flux_model.hpp"

using namespace cryoscope;

namespace {
const FluxModel kQuad = PowerLawModel{16.9, 2};

// Transmon detuning written out from scratch.
double transmon_detuning(double ej, double ec, double phi) {
  const double fmax = std::sqrt(8.0 * ej * ec) - ec;
  const double fq = std::sqrt(8.0 * ej * ec * std::abs(std::cos(std::numbers::pi * phi))) - ec;
  return fmax - fq;
}
}  // namespace

TEST_CASE("power law detuning") {
  CHECK(detuning_from_flux(kQuad, 0.0) == 0.0);
  CHECK(detuning_from_flux(kQuad, 0.25) == doctest::Approx(1.05625).epsilon(1e-14));
  CHECK(detuning_from_flux(kQuad, -0.25) == doctest::Approx(1.05625).epsilon(1e-14));
  CHECK(detuning_from_flux(PowerLawModel{2.0, 1}, 0.3) == doctest::Approx(0.6));
}

TEST_CASE("power law inverse") {
  CHECK(flux_from_detuning(kQuad, 0.0) == 0.0);
  CHECK(flux_from_detuning(kQuad, 0.4225) == doctest::Approx(0.158113883).epsilon(1e-9));
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(1e-6, 0.3);
  for (int i = 0; i < 100; ++i) {
    const double phi = u(gen);
    CHECK(std::abs(flux_from_detuning(kQuad, detuning_from_flux(kQuad, phi)) - phi) < 1e-12);
  }
  CHECK_THROWS_AS(flux_from_detuning(kQuad, -0.1), RangeError);
}

TEST_CASE("flux sensitivity") {
  CHECK(flux_sensitivity(kQuad, 0.0) == 0.0);
  CHECK(flux_sensitivity(kQuad, 0.1) == doctest::Approx(3.38).epsilon(1e-12));
  CHECK(flux_sensitivity(kQuad, -0.1) == doctest::Approx(-3.38).epsilon(1e-12));
  const FluxModel tm = TransmonParams{20.0, 0.25};
  for (double phi : {0.05, 0.15, 0.3}) {
    const double h = 1e-6;
    const double fd = (detuning_from_flux(tm, phi + h) - detuning_from_flux(tm, phi - h)) / (2 * h);
    CHECK(flux_sensitivity(tm, phi) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("transmon model") {
  const TransmonParams p{20.0, 0.25};
  CHECK(p.f_max() == doctest::Approx(std::sqrt(8.0 * 20.0 * 0.25) - 0.25));
  const FluxModel tm = p;
  CHECK(detuning_from_flux(tm, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
  for (double phi : {0.02, 0.1, 0.2, 0.35}) {
    CHECK(detuning_from_flux(tm, phi) == doctest::Approx(transmon_detuning(20.0, 0.25, phi)).epsilon(1e-13));
    CHECK(flux_from_detuning(tm, detuning_from_flux(tm, phi)) == doctest::Approx(phi).epsilon(1e-10));
  }
  const auto q = transmon_from_fmax(6.0, 50.0);
  CHECK(q.f_max() == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(q.ej / q.ec == doctest::Approx(50.0).epsilon(1e-12));
  // f_Q < 0 close to half a flux quantum.
  CHECK_THROWS_AS(detuning_from_flux(tm, 0.4999999), DomainError);
  CHECK_THROWS_AS(flux_from_detuning(tm, max_detuning(tm) * 1.01), RangeError);
}

TEST_CASE("transmon regime warning") {
  std::vector<std::string> seen;
  const auto old = set_warning_handler([&](std::string_view m) { seen.emplace_back(m); });
  CHECK(validate(FluxModel{TransmonParams{2.0, 0.25}}).size() == 1);
  CHECK(validate(FluxModel{TransmonParams{20.0, 0.25}}).empty());
  set_warning_handler(old);
  CHECK(seen.size() == 1);
  CHECK_THROWS_AS(validate(FluxModel{TransmonParams{-1.0, 0.25}}), ConfigError);
  CHECK_THROWS_AS(validate(FluxModel{PowerLawModel{16.9, 0}}), ConfigError);
}

TEST_CASE("dephasing rate") {
  const DephasingParams dp{66.7e-3, 0.213e-3, 1.0};
  CHECK(dephasing_rate(dp, kQuad, 0.0) == doctest::Approx(66.7e-3));
  CHECK(1.0 / dephasing_rate(dp, kQuad, 0.0) == doctest::Approx(15.0).epsilon(1e-3));
  // gamma1 |d df/d phi| is in GHz = 1/ns; times 1e3 gives 1/us.
  const double expected = 66.7e-3 + 0.213e-3 * (2.0 * 16.9 * 0.17) * 1e3;
  CHECK(dephasing_rate(dp, kQuad, 0.17) == doctest::Approx(expected).epsilon(1e-12));
  const DephasingParams flat{66.7e-3, 0.0, 1.0};
  CHECK(dephasing_rate(flat, kQuad, 0.2) == dephasing_rate(flat, kQuad, 0.0));
  CHECK_THROWS_AS(validate(DephasingParams{0.1, 0.0, 2.5}), ConfigError);
}
