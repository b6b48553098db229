#include "cryoscope/convolution.hpp"

#include <fftw3.h>

#include <algorithm>
#include <memory>
#include <mutex>

namespace cryoscope {
namespace {

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1))));
}

class Plan {
 public:
  explicit Plan(fftw_plan p) : plan_(p) {}
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

std::size_t next_fast_size(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

std::vector<double> convolve_direct(std::span<const double> x, std::span<const double> kernel, std::size_t out_len) {
  std::vector<double> y(out_len, 0.0);
  const std::size_t nx = x.size();
  for (std::size_t i = 0; i < kernel.size() && i < out_len; ++i) {
    const double h = kernel[i];
    if (h == 0.0) continue;
    const std::size_t stop = std::min(out_len, nx + i);
    for (std::size_t n = i; n < stop; ++n) y[n] += h * x[n - i];
  }
  return y;
}

std::vector<double> convolve_fft(std::span<const double> x, std::span<const double> kernel, std::size_t out_len) {
  std::vector<double> y(out_len, 0.0);
  if (x.empty() || kernel.empty() || out_len == 0) return y;
  const std::size_t nx = std::min(x.size(), out_len);
  const std::size_t nk = std::min(kernel.size(), out_len);
  const std::size_t n = next_fast_size(nx + nk - 1);
  const std::size_t nc = n / 2 + 1;

  auto a = fftw_buffer<double>(n);
  auto b = fftw_buffer<double>(n);
  auto fa = fftw_buffer<fftw_complex>(nc);
  auto fb = fftw_buffer<fftw_complex>(nc);
  std::unique_ptr<Plan> pa, pb, inv;
  {
    std::lock_guard lock(planner_mutex());
    pa = std::make_unique<Plan>(fftw_plan_dft_r2c_1d(static_cast<int>(n), a.get(), fa.get(), FFTW_ESTIMATE));
    pb = std::make_unique<Plan>(fftw_plan_dft_r2c_1d(static_cast<int>(n), b.get(), fb.get(), FFTW_ESTIMATE));
    inv = std::make_unique<Plan>(fftw_plan_dft_c2r_1d(static_cast<int>(n), fa.get(), a.get(), FFTW_ESTIMATE));
  }
  std::fill(a.get(), a.get() + n, 0.0);
  std::fill(b.get(), b.get() + n, 0.0);
  std::copy_n(x.begin(), nx, a.get());
  std::copy_n(kernel.begin(), nk, b.get());
  pa->execute();
  pb->execute();
  for (std::size_t i = 0; i < nc; ++i) {
    const double re = fa[i][0] * fb[i][0] - fa[i][1] * fb[i][1];
    const double im = fa[i][0] * fb[i][1] + fa[i][1] * fb[i][0];
    fa[i][0] = re;
    fa[i][1] = im;
  }
  inv->execute();
  const double scale = 1.0 / static_cast<double>(n);
  const std::size_t stop = std::min(out_len, nx + nk - 1);
  for (std::size_t i = 0; i < stop; ++i) y[i] = a[i] * scale;
  return y;
}

std::vector<double> convolve(std::span<const double> x, std::span<const double> kernel, std::size_t out_len) {
  if (kernel.size() < kFftKernelThreshold) return convolve_direct(x, kernel, out_len);
  return convolve_fft(x, kernel, out_len);
}

std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  if (n == 0) return out;
  auto in = fftw_buffer<fftw_complex>(n);
  auto res = fftw_buffer<fftw_complex>(n);
  std::unique_ptr<Plan> plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = std::make_unique<Plan>(
        fftw_plan_dft_1d(static_cast<int>(n), in.get(), res.get(), FFTW_FORWARD, FFTW_ESTIMATE));
  }
  for (std::size_t i = 0; i < n; ++i) {
    in[i][0] = x[i].real();
    in[i][1] = x[i].imag();
  }
  plan->execute();
  for (std::size_t i = 0; i < n; ++i) out[i] = {res[i][0], res[i][1]};
  return out;
}

}  // namespace cryoscope
