#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace cryoscope {

struct CmaesOptions {
  double sigma0 = 0.05;
  std::size_t budget = 20000;  // objective evaluations
  std::uint64_t seed = 1;
  std::optional<std::size_t> lambda;  // default 4 + floor(3 ln n)
  double tol_fun = 1e-14;             // stop when recent generation bests span less than this
  double tol_x = 1e-12;               // stop when every coordinate's step falls below this
  bool parallel = true;               // evaluate each generation concurrently
};

struct CmaesResult {
  Eigen::VectorXd best_x;
  double best_f = 0.0;
  double initial_f = 0.0;
  std::size_t evaluations = 0;
  std::size_t generations = 0;
  std::vector<double> history;  // best-so-far after each generation
  std::vector<Eigen::VectorXd> mean_trajectory;
  bool converged = false;  // stopped on a tolerance rather than the budget
};

/// (mu/mu_w, lambda) covariance matrix adaptation with cumulative step-size
/// control and rank-one plus rank-mu updates. The start point is evaluated
/// first, so best_f never exceeds f(x0). Sampling is sequential from one
/// seeded generator; only the pure evaluations run in parallel.
CmaesResult cmaes_minimize(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                           const CmaesOptions& options);

}  // namespace cryoscope
