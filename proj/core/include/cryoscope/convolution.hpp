#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace cryoscope {

/// Kernels at least this long are convolved through the FFT.
inline constexpr std::size_t kFftKernelThreshold = 4096;

/// Causal linear convolution y[n] = sum_i kernel[i] x[n - i] for
/// n < out_len. Picks the direct or FFT route from the kernel length.
std::vector<double> convolve(std::span<const double> x, std::span<const double> kernel, std::size_t out_len);

std::vector<double> convolve_direct(std::span<const double> x, std::span<const double> kernel, std::size_t out_len);
std::vector<double> convolve_fft(std::span<const double> x, std::span<const double> kernel, std::size_t out_len);

/// Forward DFT X[k] = sum_n x[n] exp(-2 pi i k n / N), any length.
std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x);

}  // namespace cryoscope
