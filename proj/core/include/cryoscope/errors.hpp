#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace cryoscope {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto its exit-code taxonomy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration, schema violations, inconsistent sample rates.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Config document violating the schema; `path` locates the offending
/// value as a JSON pointer-like path such as "chain[2].tau_ns".
class SchemaError : public ConfigError {
 public:
  SchemaError(std::string path, const std::string& message)
      : ConfigError(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Wrong number of elements (e.g. FIR parameter vectors).
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Flux outside the domain of the flux-to-frequency model.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Detuning outside the invertible range of the flux model.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Filter parameters that yield an unstable recursion.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

/// Cryoscope trace carries no usable oscillation.
class SignalTooWeakError : public Error {
 public:
  using Error::Error;
};

/// Fit design cannot identify the requested parameters.
class IdentifiabilityError : public Error {
 public:
  using Error::Error;
};

/// Iterative procedure stopped at its cap without meeting its target.
class NotConvergedError : public Error {
 public:
  using Error::Error;
};

// Non-fatal diagnostics (transmon regime, truncated kernels, Nyquist guard
// band). The default handler writes to stderr.
using WarningHandler = std::function<void(std::string_view)>;

WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace cryoscope
