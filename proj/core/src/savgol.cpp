#include "cryoscope/savgol.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "cryoscope/errors.hpp"

namespace cryoscope {

std::vector<double> savgol_weights(int n, int order, int deriv, int at) {
  if (n < 1 || order < 0 || deriv < 0 || at < 0 || at >= n) throw ConfigError("invalid Savitzky-Golay window");
  order = std::min(order, n - 1);
  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  if (deriv > order) return w;
  // Vandermonde in coordinates centred on `at`; the derivative at 0 is
  // deriv! times coefficient `deriv` of the least-squares polynomial.
  Eigen::MatrixXd v(n, order + 1);
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(i - at);
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
      v(i, j) = p;
      p *= x;
    }
  }
  const Eigen::MatrixXd pinv = v.completeOrthogonalDecomposition().pseudoInverse();
  const double fact = std::tgamma(static_cast<double>(deriv) + 1.0);
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = fact * pinv(deriv, i);
  return w;
}

std::vector<double> savgol_filter(std::span<const double> y, double dt, int window, int order, int deriv) {
  if (window < 3 || window % 2 == 0) throw ConfigError("Savitzky-Golay window must be odd and >= 3");
  if (order < 0 || order >= window) throw ConfigError("Savitzky-Golay order must be below the window length");
  if (!(dt > 0.0)) throw ConfigError("sample spacing must be positive");
  const int n = static_cast<int>(y.size());
  std::vector<double> out(y.size(), 0.0);
  if (n == 0) return out;
  const double scale = std::pow(dt, -deriv);
  const int h = window / 2;
  const auto centre = savgol_weights(window, order, deriv, h);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - h);
    const int hi = std::min(n - 1, i + h);
    const bool full = (hi - lo + 1) == window;
    const auto w = full ? centre : savgol_weights(hi - lo + 1, order, deriv, i - lo);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += w[static_cast<std::size_t>(j - lo)] * y[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc * scale;
  }
  return out;
}

}  // namespace cryoscope
