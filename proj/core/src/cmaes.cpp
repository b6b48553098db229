#include "cryoscope/cmaes.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include "cryoscope/errors.hpp"
#include "cryoscope/parallel.hpp"

namespace cryoscope {

CmaesResult cmaes_minimize(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                           const CmaesOptions& options) {
  const auto n = static_cast<std::size_t>(x0.size());
  if (n == 0) throw ConfigError("CMA-ES needs at least one parameter");
  if (!(options.sigma0 > 0.0)) throw ConfigError("CMA-ES initial step size must be positive");
  const double nd = static_cast<double>(n);
  const std::size_t lambda = options.lambda.value_or(4 + static_cast<std::size_t>(std::floor(3.0 * std::log(nd))));
  if (lambda < 2) throw ConfigError("CMA-ES population must be at least 2");
  const std::size_t mu = lambda / 2;

  Eigen::VectorXd w(mu);
  for (std::size_t i = 0; i < mu; ++i) {
    w(i) = std::log(static_cast<double>(lambda + 1) / 2.0) - std::log(static_cast<double>(i + 1));
  }
  w /= w.sum();
  const double mueff = 1.0 / w.squaredNorm();

  const double cc = (4.0 + mueff / nd) / (nd + 4.0 + 2.0 * mueff / nd);
  const double cs = (mueff + 2.0) / (nd + mueff + 5.0);
  const double c1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff);
  const double cmu = std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nd + 2.0) * (nd + 2.0) + mueff));
  const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (nd + 1.0)) - 1.0) + cs;
  const double chin = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  Eigen::VectorXd mean = x0;
  double sigma = options.sigma0;
  Eigen::VectorXd pc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd ps = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd C = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd B = C;
  Eigen::VectorXd D = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  std::size_t eigen_generation = 0;

  std::mt19937_64 gen(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  CmaesResult res;
  res.best_x = x0;
  res.best_f = f(x0);
  res.initial_f = res.best_f;
  res.evaluations = 1;

  const std::size_t stall_window = 10 + static_cast<std::size_t>(std::ceil(30.0 * nd / static_cast<double>(lambda)));
  std::deque<double> recent;

  std::vector<Eigen::VectorXd> z(lambda), y(lambda), x(lambda);
  std::vector<double> fx(lambda);
  std::vector<std::size_t> order(lambda);

  while (res.evaluations + lambda <= options.budget) {
    for (std::size_t k = 0; k < lambda; ++k) {
      z[k].resize(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) z[k](static_cast<Eigen::Index>(i)) = normal(gen);
      y[k] = B * D.cwiseProduct(z[k]);
      x[k] = mean + sigma * y[k];
    }
    auto eval = [&](std::size_t k) { fx[k] = f(x[k]); };
    if (options.parallel) {
      parallel_for(lambda, eval);
    } else {
      for (std::size_t k = 0; k < lambda; ++k) eval(k);
    }
    res.evaluations += lambda;
    ++res.generations;

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
    if (fx[order[0]] < res.best_f) {
      res.best_f = fx[order[0]];
      res.best_x = x[order[0]];
    }
    res.history.push_back(res.best_f);

    Eigen::VectorXd yw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd zw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < mu; ++i) {
      yw += w(static_cast<Eigen::Index>(i)) * y[order[i]];
      zw += w(static_cast<Eigen::Index>(i)) * z[order[i]];
    }
    mean += sigma * yw;
    res.mean_trajectory.push_back(mean);

    ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mueff) * (B * zw);
    const double gens = static_cast<double>(res.generations);
    const double ps_norm = ps.norm();
    const bool hsig = ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * gens)) / chin < 1.4 + 2.0 / (nd + 1.0);
    pc = (1.0 - cc) * pc + (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) : 0.0) * yw;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < mu; ++i) {
      rank_mu += w(static_cast<Eigen::Index>(i)) * y[order[i]] * y[order[i]].transpose();
    }
    const double hsig_fix = hsig ? 0.0 : c1 * cc * (2.0 - cc);
    C = (1.0 - c1 - cmu + hsig_fix) * C + c1 * pc * pc.transpose() + cmu * rank_mu;
    sigma *= std::exp((cs / damps) * (ps_norm / chin - 1.0));

    // Refresh the eigendecomposition often enough to keep O(n^2) per sample.
    if (gens - static_cast<double>(eigen_generation) > static_cast<double>(lambda) / ((c1 + cmu) * nd * 10.0)) {
      eigen_generation = res.generations;
      C = C.triangularView<Eigen::Upper>();
      C = C.selfadjointView<Eigen::Upper>();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
      B = es.eigenvectors();
      D = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt();
    }

    recent.push_back(fx[order[0]]);
    if (recent.size() > stall_window) recent.pop_front();
    const auto [lo, hi] = std::minmax_element(recent.begin(), recent.end());
    const double range = std::max(*hi, fx[order[lambda - 1]]) - std::min(*lo, fx[order[0]]);
    if (recent.size() == stall_window && range < options.tol_fun) {
      res.converged = true;
      break;
    }
    if (sigma * std::max(D.maxCoeff(), pc.cwiseAbs().maxCoeff()) < options.tol_x) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace cryoscope
