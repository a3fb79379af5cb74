#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "latreg/function_types.hpp"
#include "latreg/rng.hpp"

namespace latreg {

/// Scale parameter of the exponential transition kernel on [0,1].
struct KernelParam {
  double a = 1.0;
};

/// Normalizer C_a(x) such that q_a(x,.) = C_a(x) exp(-|.-x|/a) integrates
/// to one over [0,1].  Closed form:
///   1/C_a(x) = a (2 - exp(-x/a) - exp(-(1-x)/a)).
double normalizer_c(const KernelParam& kernel, double x);

/// Stationary normalizer Z(a) = 2 (a + a^2 (exp(-1/a) - 1)); equals the
/// integral of 1/C_a over [0,1].
double stationary_z(const KernelParam& kernel);

/// Stationary density nu_a(x) = C_a(x)^{-1} / Z(a).
double stationary_density(const KernelParam& kernel, double x);
double log_stationary_density(const KernelParam& kernel, double x);

/// Transition density q_a(x, x') = C_a(x) exp(-|x'-x|/a).
double transition_density(const KernelParam& kernel, double x, double x_next);
double log_transition_density(const KernelParam& kernel, double x, double x_next);

/// Draw from nu_a by rejection against the uniform proposal.  The envelope
/// is nu_a(1/2), the maximum of the symmetric unimodal density.
double sample_stationary(const KernelParam& kernel, Rng& rng);

/// Draw from q_a(x, .) by exact piecewise inversion of the truncated
/// two-sided exponential CDF.
double sample_transition(const KernelParam& kernel, double x, Rng& rng);

/// Data-generating model: stationary chain plus isotropic Gaussian noise
/// on the curve values.
struct TrueModel {
  KernelParam kernel;
  RegressionFn f_star;
};

/// A simulated latent path with its noisy observations.
struct Trajectory {
  Eigen::VectorXd states;        // n
  Eigen::MatrixXd observations;  // n x ell
  std::uint64_t seed = 0;
};

/// Simulate n_obs steps of the stationary chain and the observations
/// Y_t = f_star(X_t) + eps_t, eps_t ~ N(0, I).  Initial state is drawn
/// from nu_a, so the path is stationary from the first sample.
/// Identical seeds give bit-identical trajectories.
Trajectory simulate(const TrueModel& model, int n_obs, std::uint64_t seed);

}  // namespace latreg
