#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace latreg {

/// Empirical uniform-mixing decay of a [0,1]-valued path, from bin-occupancy
/// transition frequencies: phi_hat(L) = max over bin pairs (A,B) of
/// |P(X_{i+L} in B | X_i in A) - P(X in B)|.
struct MixingEstimate {
  std::vector<int> lags;
  Eigen::VectorXd phi_hat;
  int bins = 0;
  int min_conditioning_count = 0;
};

MixingEstimate estimate_mixing_decay(const Eigen::VectorXd& states,
                                     const std::vector<int>& lags, int bins = 10);

/// Extremes of the stationary and one-step transition densities over a grid,
/// for verifying that both stay bounded away from 0 and infinity.
struct StateBounds {
  double a;
  double nu_min;
  double nu_max;
  double q_min;
  double q_max;
};

std::vector<StateBounds> check_h3_bounds(const std::vector<double>& a_values, int grid = 1001);

/// Monte Carlo check of the mixing concentration bound for the supremum of
/// centered empirical sums over a small class of bounded test functions
/// applied to the first observation coordinate.
struct TailCheckConfig {
  int n = 1000;
  int replicates = 2000;
  std::vector<double> x_grid = {0.5, 1.0, 2.0, 4.0};
  std::vector<double> tanh_scales = {0.5, 1.0, 2.0};
  double a_star = 1.0;
  std::uint64_t seed = 0;
  int mixing_lags = 8;
  int mixing_path_length = 100000;
};

struct TailCheckRow {
  double x;
  double radius;     // deviation threshold at this exponent
  double empirical;  // fraction of replicates exceeding the threshold
  double bound;      // exp(-x)
  double tolerance;  // 4 binomial standard errors on the bound
  bool within;
};

struct TailCheckResult {
  double phi_sum;   // summed sqrt mixing coefficients incl. geometric tail
  double envelope;  // sup-norm bound for the centered test functions
  double nu_hat;    // moment-condition constants (envelope^2)
  double c_hat;
  double mean_sup;  // Monte Carlo mean of the supremum statistic
  std::vector<TailCheckRow> rows;

  bool all_within() const;
};

TailCheckResult concentration_tail_check(const TailCheckConfig& config);

}  // namespace latreg
