#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cryoscope/calibration.hpp"
#include "cryoscope/convolution.hpp"
#include "cryoscope/reconstruction.hpp"
#include "cryoscope/rt_filters.hpp"
#include "cryoscope/virtual_cryoscope.hpp"

using namespace cryoscope;

namespace {
std::vector<double> gaussian(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(gen);
  return v;
}

ExperimentConfig typical_experiment(std::size_t n) {
  ExperimentConfig cfg;
  cfg.truncations = truncation_grid(n);
  cfg.t_sep_ns = cfg.truncations.back() + 100.0;
  cfg.pulse = make_step(0.1, *cfg.t_sep_ns + 1.0);
  cfg.chain = typical_control_line();
  cfg.noise_sigma = 0.02;
  cfg.seed = 1;
  return cfg;
}
}  // namespace

static void BM_ConvolveDirect(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = gaussian(n, 1), k = gaussian(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(convolve_direct(x, k, n));
}
BENCHMARK(BM_ConvolveDirect)->Arg(256)->Arg(1024)->Arg(4096);

static void BM_ConvolveFft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = gaussian(n, 1), k = gaussian(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(convolve_fft(x, k, n));
}
BENCHMARK(BM_ConvolveFft)->Arg(256)->Arg(1024)->Arg(4096)->Arg(65536);

static void BM_IirHardware(benchmark::State& state) {
  const auto c = iir_coefficients({0.13, 15000.0}, kAwgSampleRate);
  const auto x = gaussian(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(iir_hardware_form(c, x));
}
BENCHMARK(BM_IirHardware)->Arg(4096);

static void BM_SimulateTrace(benchmark::State& state) {
  const auto cfg = typical_experiment(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(simulate_trace(cfg));
}
BENCHMARK(BM_SimulateTrace)->Arg(120)->Arg(480)->Unit(benchmark::kMillisecond);

static void BM_Reconstruct(benchmark::State& state) {
  const auto trace = simulate_trace(typical_experiment(static_cast<std::size_t>(state.range(0))));
  ReconstructionConfig rc;
  rc.range_policy = RangePolicy::clip;
  for (auto _ : state) benchmark::DoNotOptimize(reconstruct(trace, rc));
}
BENCHMARK(BM_Reconstruct)->Arg(480);

static void BM_FirObjective(benchmark::State& state) {
  const auto step = apply(typical_control_line(), make_step(1.0, 250.0));
  FirSpec f = FirSpec::identity();
  f.params[2] = 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(fir_objective(f, step, {}, {}));
}
BENCHMARK(BM_FirObjective);

static void BM_FirCmaes(benchmark::State& state) {
  DistortionChain plant;
  plant.models.emplace_back(ExpStep{0.1, 2.0, 1.0});
  const auto step = apply(plant, make_step(1.0, 250.0));
  CmaesOptions co;
  co.budget = 3000;
  for (auto _ : state) benchmark::DoNotOptimize(fit_fir_cmaes(step, {}, co));
}
BENCHMARK(BM_FirCmaes)->Unit(benchmark::kMillisecond)->Iterations(3);
BENCHMARK_MAIN();
