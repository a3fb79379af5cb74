#include "latreg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "latreg/function_types.hpp"
#include "latreg/markov_model.hpp"
#include "latreg/quadrature.hpp"
#include "latreg/rng.hpp"

namespace latreg {

namespace {

int bin_index(double x, int bins) {
  const int idx = static_cast<int>(std::floor(x * bins));
  return std::clamp(idx, 0, bins - 1);
}

// E[tanh(c (mu + eps))] with standard normal eps, by quadrature on [-8, 8];
// the integrand is bounded by 1 so the truncated tail is below 1e-15.
double noise_smoothed_tanh(double c, double mu, const QuadratureRule& rule) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
    const double e = rule.nodes[j];
    total += rule.weights[j] * std::exp(-0.5 * e * e) * std::tanh(c * (mu + e));
  }
  return total / std::sqrt(2.0 * M_PI);
}

}  // namespace

MixingEstimate estimate_mixing_decay(const Eigen::VectorXd& states,
                                     const std::vector<int>& lags, int bins) {
  const Eigen::Index n = states.size();
  if (bins < 2) throw std::invalid_argument("mixing: need at least two bins");
  if (lags.empty()) throw std::invalid_argument("mixing: no lags requested");
  for (int lag : lags) {
    if (lag < 1 || lag >= n) throw std::invalid_argument("mixing: lag out of range");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(states[i] >= 0.0 && states[i] <= 1.0)) {
      throw std::invalid_argument("mixing: states must lie in [0,1]");
    }
  }

  Eigen::VectorXd marginal = Eigen::VectorXd::Zero(bins);
  for (Eigen::Index i = 0; i < n; ++i) marginal[bin_index(states[i], bins)] += 1.0;
  marginal /= static_cast<double>(n);

  MixingEstimate out;
  out.lags = lags;
  out.bins = bins;
  out.phi_hat.resize(static_cast<Eigen::Index>(lags.size()));
  out.min_conditioning_count = static_cast<int>(n);
  for (std::size_t li = 0; li < lags.size(); ++li) {
    const int lag = lags[li];
    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(bins, bins);
    Eigen::VectorXd cond = Eigen::VectorXd::Zero(bins);
    for (Eigen::Index i = 0; i + lag < n; ++i) {
      const int a = bin_index(states[i], bins);
      const int b = bin_index(states[i + lag], bins);
      joint(a, b) += 1.0;
      cond[a] += 1.0;
    }
    double max_dev = 0.0;
    for (int a = 0; a < bins; ++a) {
      if (cond[a] < 50.0) throw std::runtime_error("mixing: conditioning bin too sparse");
      out.min_conditioning_count =
          std::min(out.min_conditioning_count, static_cast<int>(cond[a]));
      for (int b = 0; b < bins; ++b) {
        max_dev = std::max(max_dev, std::abs(joint(a, b) / cond[a] - marginal[b]));
      }
    }
    out.phi_hat[static_cast<Eigen::Index>(li)] = max_dev;
  }
  return out;
}

std::vector<StateBounds> check_h3_bounds(const std::vector<double>& a_values, int grid) {
  if (grid < 2) throw std::invalid_argument("state bounds: grid too small");
  Eigen::VectorXd xs(grid);
  for (int i = 0; i < grid; ++i) xs[i] = static_cast<double>(i) / (grid - 1);
  std::vector<StateBounds> out;
  out.reserve(a_values.size());
  for (double a : a_values) {
    const KernelParam kernel{a};
    StateBounds row;
    row.a = a;
    row.nu_min = std::numeric_limits<double>::infinity();
    row.nu_max = 0.0;
    row.q_min = std::numeric_limits<double>::infinity();
    row.q_max = 0.0;
    for (int i = 0; i < grid; ++i) {
      const double nu = stationary_density(kernel, xs[i]);
      row.nu_min = std::min(row.nu_min, nu);
      row.nu_max = std::max(row.nu_max, nu);
      for (int j = 0; j < grid; ++j) {
        const double q = transition_density(kernel, xs[i], xs[j]);
        row.q_min = std::min(row.q_min, q);
        row.q_max = std::max(row.q_max, q);
      }
    }
    out.push_back(row);
  }
  return out;
}

bool TailCheckResult::all_within() const {
  for (const auto& row : rows) {
    if (!row.within) return false;
  }
  return !rows.empty();
}

TailCheckResult concentration_tail_check(const TailCheckConfig& config) {
  if (config.n < 2) throw std::invalid_argument("tail check: path too short");
  if (config.replicates < 2) throw std::invalid_argument("tail check: need replicates");
  if (config.x_grid.empty() || config.tanh_scales.empty()) {
    throw std::invalid_argument("tail check: empty grid");
  }
  for (double x : config.x_grid) {
    if (!(x > 0.0)) throw std::invalid_argument("tail check: exponents must be positive");
  }
  for (double c : config.tanh_scales) {
    if (!(c > 0.0)) throw std::invalid_argument("tail check: scales must be positive");
  }
  if (config.mixing_lags < 1) throw std::invalid_argument("tail check: need mixing lags");
  if (config.mixing_path_length < 100) throw std::invalid_argument("tail check: mixing path too short");

  const TrueModel model{KernelParam{config.a_star}, circle_regression()};
  const int n_scales = static_cast<int>(config.tanh_scales.size());

  // Stationary means of the raw test functions under the true model, so the
  // centered class has an explicit sup-norm envelope.
  const QuadratureRule& latent_rule = gauss_legendre_01(kLatentNodes);
  const QuadratureRule noise_rule = gauss_legendre(kLatentNodes, -8.0, 8.0);
  Eigen::VectorXd means(n_scales);
  for (int s = 0; s < n_scales; ++s) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < latent_rule.nodes.size(); ++i) {
      const double x = latent_rule.nodes[i];
      const double mu = model.f_star(x)[0];
      total += latent_rule.weights[i] * stationary_density(model.kernel, x) *
               noise_smoothed_tanh(config.tanh_scales[s], mu, noise_rule);
    }
    means[s] = total;
  }

  TailCheckResult out;
  out.envelope = 1.0 + means.cwiseAbs().maxCoeff();
  out.nu_hat = out.envelope * out.envelope;
  out.c_hat = out.nu_hat;

  // Mixing decay: empirical coefficients at short lags from one long path,
  // geometric continuation beyond them from the one-step overlap bound.
  const Rng base(config.seed);
  const Trajectory long_path =
      simulate(model, config.mixing_path_length, base.fork(stream::kTailCheck).fork(0).key());
  std::vector<int> lags(static_cast<std::size_t>(config.mixing_lags));
  for (int i = 0; i < config.mixing_lags; ++i) lags[static_cast<std::size_t>(i)] = i + 1;
  const MixingEstimate mix = estimate_mixing_decay(long_path.states, lags);
  const std::vector<StateBounds> bounds = check_h3_bounds({config.a_star});
  const double rho = 1.0 - bounds[0].q_min;
  double phi_sum = 0.0;
  for (Eigen::Index i = 0; i < mix.phi_hat.size(); ++i) phi_sum += std::sqrt(mix.phi_hat[i]);
  const double sqrt_rho = std::sqrt(rho);
  phi_sum += std::sqrt(2.0) * std::pow(sqrt_rho, config.mixing_lags + 1) / (1.0 - sqrt_rho);
  out.phi_sum = phi_sum;

  Eigen::VectorXd sup_stat(config.replicates);
  for (int r = 0; r < config.replicates; ++r) {
    const Trajectory path =
        simulate(model, config.n, base.fork(stream::kTailCheck).fork(1 + r).key());
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(n_scales);
    for (int i = 0; i < config.n; ++i) {
      const double y1 = path.observations(i, 0);
      for (int s = 0; s < n_scales; ++s) {
        sums[s] += std::tanh(config.tanh_scales[s] * y1) - means[s];
      }
    }
    sup_stat[r] = sums.cwiseAbs().maxCoeff();
  }
  out.mean_sup = sup_stat.mean();

  for (double x : config.x_grid) {
    TailCheckRow row;
    row.x = x;
    row.radius = 2.0 * out.phi_sum *
                 (2.0 * std::sqrt(config.n * out.nu_hat * x) + std::sqrt(out.c_hat) * x);
    int exceed = 0;
    for (int r = 0; r < config.replicates; ++r) {
      if (sup_stat[r] - out.mean_sup >= row.radius) ++exceed;
    }
    row.empirical = static_cast<double>(exceed) / config.replicates;
    row.bound = std::exp(-x);
    row.tolerance = 4.0 * std::sqrt(row.bound * (1.0 - row.bound) / config.replicates);
    row.within = row.empirical <= row.bound + row.tolerance;
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace latreg
