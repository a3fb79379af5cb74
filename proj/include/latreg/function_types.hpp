#pragma once

#include <Eigen/Dense>

#include <functional>

namespace latreg {

/// Vector-valued regression curve on [0,1].
struct RegressionFn {
  int ell = 0;
  std::function<Eigen::VectorXd(double)> eval;

  Eigen::VectorXd operator()(double x) const { return eval(x); }
};

/// x -> (cos(pi x), sin(pi x)), the half-circle curve used in experiments.
RegressionFn circle_regression();

/// x -> (x, 0), the flat starting curve for the estimator.
RegressionFn ramp_regression();

}  // namespace latreg
