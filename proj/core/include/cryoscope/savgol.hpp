#pragma once

#include <span>
#include <vector>

namespace cryoscope {

/// Least-squares polynomial weights: sum_i w[i] y[i] estimates the
/// `deriv`-th derivative at sample `at` of a polynomial of degree `order`
/// fitted to y[0..n), unit spacing.
std::vector<double> savgol_weights(int n, int order, int deriv, int at);

/// Savitzky-Golay estimate of the `deriv`-th derivative of uniformly
/// sampled `y` with spacing `dt`. Interior points use the centred window;
/// near the ends the window is truncated to the available samples and the
/// polynomial order lowered if needed, so no padding is invented.
std::vector<double> savgol_filter(std::span<const double> y, double dt, int window, int order, int deriv);

}  // namespace cryoscope
