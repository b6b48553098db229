#pragma once

#include <string>
#include <variant>
#include <vector>

// Flux is expressed in units of the flux quantum and energies in GHz
// (E/h), so neither h nor Phi0 appears at runtime. Detuning is measured
// downwards from the sweetspot frequency: df = f_max - f_Q >= 0.

namespace cryoscope {

/// Symmetric two-junction transmon. `ej` is the summed Josephson energy.
struct TransmonParams {
  double ej = 0.0;  // GHz
  double ec = 0.0;  // GHz

  /// Sweetspot frequency sqrt(8 ej ec) - ec.
  double f_max() const;
};

/// df = a |phi|^k.
struct PowerLawModel {
  double a = 0.0;  // GHz / Phi0^k
  int k = 2;
};

using FluxModel = std::variant<TransmonParams, PowerLawModel>;

/// Dephasing rate model 1/T2* = gamma0 + gamma1 |d df / d phi|.
struct DephasingParams {
  double gamma0 = 0.0;     // 1/us
  double gamma1 = 0.0;     // Phi0
  double alpha_exp = 1.0;  // decay-law exponent in [1, 2]
};

/// Throws ConfigError on invalid parameters. Returns warnings such as a
/// transmon outside the ej/ec >= 20 regime (also forwarded to warn()).
std::vector<std::string> validate(const FluxModel& model);
void validate(const DephasingParams& params);

/// Transmon with the requested sweetspot frequency and ej/ec ratio.
TransmonParams transmon_from_fmax(double f_max_ghz, double ej_over_ec);

/// Detuning f_max - f_Q(phi) in GHz. Throws DomainError when the full
/// model has f_Q < 0 at `phi`.
double detuning_from_flux(const FluxModel& model, double phi);

/// Non-negative flux branch with detuning `df`. Throws RangeError outside
/// [0, max_detuning(model)].
double flux_from_detuning(const FluxModel& model, double df);

/// d(df)/d(phi) in GHz/Phi0. Odd in phi, zero at the sweetspot.
double flux_sensitivity(const FluxModel& model, double phi);

/// Supremum of the detuning over phi in [0, 0.5).
double max_detuning(const FluxModel& model);

/// Dephasing rate in 1/us at flux `phi`.
double dephasing_rate(const DephasingParams& dp, const FluxModel& model, double phi);

/// Converts a rate in 1/us to 1/ns.
inline constexpr double per_us_to_per_ns(double rate) { return rate * 1e-3; }

}  // namespace cryoscope
