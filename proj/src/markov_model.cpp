#include "latreg/markov_model.hpp"

#include <cmath>
#include <stdexcept>

namespace latreg {

namespace {

void require_param(const KernelParam& kernel) {
  if (!(kernel.a > 0.0) || !std::isfinite(kernel.a)) {
    throw std::invalid_argument("kernel: scale must be positive and finite");
  }
}

void require_unit(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error(std::string(what) + ": state outside [0,1]");
  }
}

// 1/C_a(x) via expm1 to stay accurate when a is large relative to x.
double inv_c(double a, double x) {
  return -a * (std::expm1(-x / a) + std::expm1(-(1.0 - x) / a));
}

}  // namespace

double normalizer_c(const KernelParam& kernel, double x) {
  require_param(kernel);
  require_unit(x, "normalizer_c");
  return 1.0 / inv_c(kernel.a, x);
}

double stationary_z(const KernelParam& kernel) {
  require_param(kernel);
  const double a = kernel.a;
  return 2.0 * a * (1.0 + a * std::expm1(-1.0 / a));
}

double stationary_density(const KernelParam& kernel, double x) {
  require_param(kernel);
  require_unit(x, "stationary_density");
  return inv_c(kernel.a, x) / stationary_z(kernel);
}

double log_stationary_density(const KernelParam& kernel, double x) {
  return std::log(stationary_density(kernel, x));
}

double transition_density(const KernelParam& kernel, double x, double x_next) {
  require_param(kernel);
  require_unit(x, "transition_density");
  require_unit(x_next, "transition_density");
  return std::exp(-std::abs(x_next - x) / kernel.a) / inv_c(kernel.a, x);
}

double log_transition_density(const KernelParam& kernel, double x, double x_next) {
  require_param(kernel);
  require_unit(x, "transition_density");
  require_unit(x_next, "transition_density");
  return -std::abs(x_next - x) / kernel.a - std::log(inv_c(kernel.a, x));
}

double sample_stationary(const KernelParam& kernel, Rng& rng) {
  require_param(kernel);
  const double envelope = stationary_density(kernel, 0.5);
  for (long iter = 0; iter < 1000000; ++iter) {
    const double x = rng.uniform();
    const double u = rng.uniform();
    if (u * envelope <= stationary_density(kernel, x)) return x;
  }
  throw std::runtime_error("sample_stationary: rejection cap exceeded");
}

double sample_transition(const KernelParam& kernel, double x, Rng& rng) {
  require_param(kernel);
  require_unit(x, "sample_transition");
  const double a = kernel.a;
  const double mass = inv_c(a, x);  // total unnormalized mass a*(...)
  const double u = rng.uniform();
  const double p = u * mass / a;
  const double left = -std::expm1(-x / a);  // 1 - exp(-x/a), mass/a left of x
  double t;
  if (p <= left) {
    t = x + a * std::log(p + std::exp(-x / a));
  } else {
    t = x - a * std::log1p(left - p);
  }
  return std::min(1.0, std::max(0.0, t));
}

Trajectory simulate(const TrueModel& model, int n_obs, std::uint64_t seed) {
  require_param(model.kernel);
  if (n_obs < 1) throw std::invalid_argument("simulate: n_obs must be >= 1");
  if (model.f_star.ell < 1 || !model.f_star.eval) {
    throw std::invalid_argument("simulate: regression function is empty");
  }
  const int ell = model.f_star.ell;

  Trajectory traj;
  traj.seed = seed;
  traj.states.resize(n_obs);
  traj.observations.resize(n_obs, ell);

  Rng master(seed);
  Rng init_rng = master.fork(stream::kChainInit);
  Rng step_rng = master.fork(stream::kChainStep);
  Rng noise_rng = master.fork(stream::kNoise);

  traj.states[0] = sample_stationary(model.kernel, init_rng);
  for (int t = 1; t < n_obs; ++t) {
    traj.states[t] = sample_transition(model.kernel, traj.states[t - 1], step_rng);
  }
  for (int t = 0; t < n_obs; ++t) {
    Eigen::VectorXd y = model.f_star(traj.states[t]);
    if (y.size() != ell) throw std::runtime_error("simulate: curve dimension mismatch");
    for (int j = 0; j < ell; ++j) y[j] += noise_rng.normal();
    traj.observations.row(t) = y.transpose();
  }
  return traj;
}

RegressionFn circle_regression() {
  RegressionFn f;
  f.ell = 2;
  f.eval = [](double x) {
    Eigen::VectorXd v(2);
    v[0] = std::cos(M_PI * x);
    v[1] = std::sin(M_PI * x);
    return v;
  };
  return f;
}

RegressionFn ramp_regression() {
  RegressionFn f;
  f.ell = 2;
  f.eval = [](double x) {
    Eigen::VectorXd v(2);
    v[0] = x;
    v[1] = 0.0;
    return v;
  };
  return f;
}

}  // namespace latreg
