#include "cryoscope/flux_model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "cryoscope/errors.hpp"

namespace cryoscope {
namespace {

constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

double plasma_scale(const TransmonParams& p) { return std::sqrt(8.0 * p.ej * p.ec); }

// |cos(pi phi)| must stay above this for f_Q >= 0.
double cos_floor(const TransmonParams& p) {
  const double r = p.ec / plasma_scale(p);
  return r * r;
}

std::string flux_str(double phi) {
  std::ostringstream os;
  os.precision(10);
  os << phi;
  return os.str();
}

double int_pow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

double transmon_detuning(const TransmonParams& p, double phi) {
  const double c = std::cos(kPi * phi);
  if (std::abs(c) < cos_floor(p)) {
    throw DomainError("flux " + flux_str(phi) + " Phi0 is outside the transmon model domain (f_Q < 0)");
  }
  // 1 - sqrt|c| = (1 - |c|) / (1 + sqrt|c|), with 1 - cos x = 2 sin^2(x/2)
  // to keep full relative precision near the sweetspot.
  double one_minus;
  if (c >= 0.0) {
    const double s = std::sin(0.5 * kPi * phi);
    one_minus = 2.0 * s * s;
  } else {
    one_minus = 1.0 + c;
  }
  return plasma_scale(p) * one_minus / (1.0 + std::sqrt(std::abs(c)));
}

double transmon_flux(const TransmonParams& p, double df) {
  const double d = df / plasma_scale(p);
  // sqrt(cos x) = 1 - d  =>  2 sin^2(x/2) = d (2 - d)
  const double s = std::sqrt(0.5 * d * (2.0 - d));
  return 2.0 * std::asin(std::min(1.0, s)) / kPi;
}

double transmon_sensitivity(const TransmonParams& p, double phi) {
  const double c = std::cos(kPi * phi);
  if (std::abs(c) < cos_floor(p)) {
    throw DomainError("flux " + flux_str(phi) + " Phi0 is outside the transmon model domain (f_Q < 0)");
  }
  const double sign = c >= 0.0 ? 1.0 : -1.0;
  return plasma_scale(p) * kPi * std::sin(kPi * phi) * sign / (2.0 * std::sqrt(std::abs(c)));
}

}  // namespace

double TransmonParams::f_max() const { return plasma_scale(*this) - ec; }

TransmonParams transmon_from_fmax(double f_max_ghz, double ej_over_ec) {
  if (!(f_max_ghz > 0.0) || !(ej_over_ec > 0.0)) {
    throw ConfigError("transmon_from_fmax needs positive f_max and ej/ec");
  }
  // f_max = ec (sqrt(8 r) - 1)
  const double ec = f_max_ghz / (std::sqrt(8.0 * ej_over_ec) - 1.0);
  return TransmonParams{ej_over_ec * ec, ec};
}

std::vector<std::string> validate(const FluxModel& model) {
  std::vector<std::string> warnings;
  std::visit(overloaded{
                 [&](const TransmonParams& p) {
                   if (!(p.ej > 0.0) || !std::isfinite(p.ej)) throw ConfigError("transmon ej must be positive");
                   if (!(p.ec > 0.0) || !std::isfinite(p.ec)) throw ConfigError("transmon ec must be positive");
                   if (p.ej / p.ec < 20.0) {
                     warnings.push_back("ej/ec = " + flux_str(p.ej / p.ec) +
                                        " is below the transmon regime (>= 20)");
                   }
                 },
                 [&](const PowerLawModel& p) {
                   if (!(p.a > 0.0) || !std::isfinite(p.a)) throw ConfigError("power-law coefficient a must be positive");
                   if (p.k < 1) throw ConfigError("power-law exponent k must be >= 1");
                 },
             },
             model);
  for (const auto& w : warnings) warn(w);
  return warnings;
}

void validate(const DephasingParams& params) {
  if (!(params.gamma0 >= 0.0)) throw ConfigError("dephasing gamma0 must be >= 0");
  if (!(params.gamma1 >= 0.0)) throw ConfigError("dephasing gamma1 must be >= 0");
  if (!(params.alpha_exp >= 1.0 && params.alpha_exp <= 2.0)) {
    throw ConfigError("dephasing alpha_exp must lie in [1, 2]");
  }
}

double detuning_from_flux(const FluxModel& model, double phi) {
  return std::visit(overloaded{
                        [&](const TransmonParams& p) { return transmon_detuning(p, phi); },
                        [&](const PowerLawModel& p) { return p.a * int_pow(std::abs(phi), p.k); },
                    },
                    model);
}

double max_detuning(const FluxModel& model) {
  return std::visit(overloaded{
                        [](const TransmonParams& p) { return p.f_max(); },
                        [](const PowerLawModel& p) { return p.a * int_pow(0.5, p.k); },
                    },
                    model);
}

double flux_from_detuning(const FluxModel& model, double df) {
  const double top = max_detuning(model);
  if (!(df >= 0.0) || df > top) {
    throw RangeError("detuning " + flux_str(df) + " GHz is outside the invertible range [0, " + flux_str(top) + "]");
  }
  return std::visit(overloaded{
                        [&](const TransmonParams& p) { return transmon_flux(p, df); },
                        [&](const PowerLawModel& p) {
                          const double r = df / p.a;
                          switch (p.k) {
                            case 1: return r;
                            case 2: return std::sqrt(r);
                            case 3: return std::cbrt(r);
                            default: return std::pow(r, 1.0 / p.k);
                          }
                        },
                    },
                    model);
}

double flux_sensitivity(const FluxModel& model, double phi) {
  return std::visit(overloaded{
                        [&](const TransmonParams& p) { return transmon_sensitivity(p, phi); },
                        [&](const PowerLawModel& p) {
                          if (phi == 0.0) return 0.0;
                          const double sign = phi > 0.0 ? 1.0 : -1.0;
                          return sign * p.k * p.a * int_pow(std::abs(phi), p.k - 1);
                        },
                    },
                    model);
}

double dephasing_rate(const DephasingParams& dp, const FluxModel& model, double phi) {
  // gamma1 [Phi0] * |d df/d phi| [GHz/Phi0] is a rate in 1/ns; 1e3 converts to 1/us.
  return dp.gamma0 + dp.gamma1 * std::abs(flux_sensitivity(model, phi)) * 1e3;
}

}  // namespace cryoscope
