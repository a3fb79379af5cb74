#include "latreg/block_density.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace latreg {

namespace {

const double kLog2Pi = 1.8378770664093454836;
const double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

// Observation-space quadrature nodes per axis.
int obs_nodes_per_axis(int b) { return b == 1 ? 64 : 32; }

}  // namespace

LatentDensity LatentDensity::stationary(const KernelParam& kernel) {
  LatentDensity d;
  d.kind_ = Kind::kStationary;
  d.b_ = 1;
  d.kernel_ = kernel;
  stationary_z(kernel);  // validates the parameter
  return d;
}

LatentDensity LatentDensity::pair(const KernelParam& kernel) {
  LatentDensity d;
  d.kind_ = Kind::kPair;
  d.b_ = 2;
  d.kernel_ = kernel;
  stationary_z(kernel);
  return d;
}

LatentDensity LatentDensity::uniform(int block_length) {
  if (block_length < 1 || block_length > 2) {
    throw std::invalid_argument("latent density: block length must be 1 or 2");
  }
  LatentDensity d;
  d.kind_ = Kind::kUniform;
  d.b_ = block_length;
  return d;
}

LatentDensity LatentDensity::custom1(std::function<double(double)> density) {
  if (!density) throw std::invalid_argument("latent density: empty function");
  LatentDensity d;
  d.kind_ = Kind::kCustom;
  d.b_ = 1;
  d.density1_ = std::move(density);
  return d;
}

LatentDensity LatentDensity::custom2(std::function<double(double, double)> density) {
  if (!density) throw std::invalid_argument("latent density: empty function");
  LatentDensity d;
  d.kind_ = Kind::kCustom;
  d.b_ = 2;
  d.density2_ = std::move(density);
  return d;
}

double LatentDensity::log_density1(double x) const {
  if (b_ != 1) throw std::logic_error("latent density: block length is not 1");
  switch (kind_) {
    case Kind::kStationary: return log_stationary_density(kernel_, x);
    case Kind::kUniform: return 0.0;
    case Kind::kCustom: return safe_log(density1_(x));
    default: throw std::logic_error("latent density: bad kind");
  }
}

double LatentDensity::log_density2(double x0, double x1) const {
  if (b_ != 2) throw std::logic_error("latent density: block length is not 2");
  switch (kind_) {
    case Kind::kPair:
      return log_stationary_density(kernel_, x0) + log_transition_density(kernel_, x0, x1);
    case Kind::kUniform: return 0.0;
    case Kind::kCustom: return safe_log(density2_(x0, x1));
    default: throw std::logic_error("latent density: bad kind");
  }
}

void LatentDensity::sample(Rng& rng, double* x) const {
  switch (kind_) {
    case Kind::kStationary:
      x[0] = sample_stationary(kernel_, rng);
      return;
    case Kind::kPair:
      x[0] = sample_stationary(kernel_, rng);
      x[1] = sample_transition(kernel_, x[0], rng);
      return;
    case Kind::kUniform:
      for (int j = 0; j < b_; ++j) x[j] = rng.uniform();
      return;
    default: throw std::logic_error("latent density: custom kind cannot be sampled");
  }
}

ObservationBlocks make_blocks(const Trajectory& trajectory, int b) {
  if (b < 1 || b > 2) throw std::invalid_argument("make_blocks: block length must be 1 or 2");
  const Eigen::Index n = trajectory.observations.rows();
  if (n < b || n % b != 0) {
    throw std::invalid_argument("make_blocks: observation count not divisible by block length");
  }
  ObservationBlocks obs;
  obs.b = b;
  obs.data = trajectory.observations;
  return obs;
}

BlockDensityEvaluator::BlockDensityEvaluator(const RegressionFn& f, const LatentDensity& nu,
                                             int n_nodes)
    : b_(nu.block_length()), ell_(f.ell) {
  if (ell_ < 1 || !f.eval) throw std::invalid_argument("block density: empty curve");
  if (n_nodes < 2) throw std::invalid_argument("block density: need at least two nodes");
  const QuadratureRule& rule = gauss_legendre_01(n_nodes);
  nodes_ = rule.nodes;
  f_nodes_.resize(n_nodes, ell_);
  for (int i = 0; i < n_nodes; ++i) {
    Eigen::VectorXd v = f(nodes_[i]);
    if (v.size() != ell_) throw std::runtime_error("block density: curve dimension mismatch");
    f_nodes_.row(i) = v.transpose();
  }
  if (b_ == 1) {
    log_wnu_.resize(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      log_wnu_[i] = std::log(rule.weights[i]) + nu.log_density1(nodes_[i]);
    }
  } else {
    kernel_mat_.resize(n_nodes, n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      for (int j = 0; j < n_nodes; ++j) {
        const double lr = nu.log_density2(nodes_[i], nodes_[j]);
        kernel_mat_(i, j) = rule.weights[i] * rule.weights[j] * std::exp(lr);
      }
    }
  }
}

double BlockDensityEvaluator::log_density(const Eigen::MatrixXd& y_block) const {
  if (y_block.rows() != b_ || y_block.cols() != ell_) {
    throw std::invalid_argument("block density: observation block has wrong shape");
  }
  const Eigen::Index n = nodes_.size();
  if (b_ == 1) {
    Eigen::VectorXd terms(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d2 = (y_block.row(0) - f_nodes_.row(i)).squaredNorm();
      terms[i] = log_wnu_[i] - 0.5 * ell_ * kLog2Pi - 0.5 * d2;
    }
    return log_sum_exp(terms);
  }
  Eigen::VectorXd la(n), lb(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    la[i] = -0.5 * (y_block.row(0) - f_nodes_.row(i)).squaredNorm();
    lb[i] = -0.5 * (y_block.row(1) - f_nodes_.row(i)).squaredNorm();
  }
  const double m0 = la.maxCoeff();
  const double m1 = lb.maxCoeff();
  const Eigen::VectorXd alpha = (la.array() - m0).exp().matrix();
  const Eigen::VectorXd beta = (lb.array() - m1).exp().matrix();
  const double v = alpha.dot(kernel_mat_ * beta);
  if (!(v > 0.0)) return kNegInf;
  return m0 + m1 - ell_ * kLog2Pi + std::log(v);
}

double BlockDensityEvaluator::log_pseudo_likelihood(const ObservationBlocks& obs) const {
  if (obs.b != b_ || obs.ell() != ell_) {
    throw std::invalid_argument("block density: observation layout mismatch");
  }
  double total = 0.0;
  for (int k = 0; k < obs.n_blocks(); ++k) total += log_density(obs.block(k));
  return total;
}

double block_density(const RegressionFn& f, const LatentDensity& nu,
                     const Eigen::MatrixXd& y_block, int n_nodes) {
  return std::exp(BlockDensityEvaluator(f, nu, n_nodes).log_density(y_block));
}

double pseudo_log_likelihood(const RegressionFn& f, const LatentDensity& nu,
                             const ObservationBlocks& obs, int n_nodes) {
  return BlockDensityEvaluator(f, nu, n_nodes).log_pseudo_likelihood(obs);
}

double penalized_objective(const SplineFunction& f, const LatentDensity& nu,
                           const ObservationBlocks& obs, double lambda,
                           const PenaltySpec& penalty, int n_nodes) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("penalized objective: bad lambda");
  }
  const double pll = pseudo_log_likelihood(f.as_fn(), nu, obs, n_nodes);
  const double pen = penalty.kind == PenaltySpec::Kind::kCurvature
                         ? curvature_norm_sq(f)
                         : complexity(f, penalty.s, penalty.upsilon);
  return pll - lambda * pen;
}

namespace {

double curve_sup_norm(const RegressionFn& f) {
  double sup = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const Eigen::VectorXd v = f(i / 1000.0);
    sup = std::max(sup, v.cwiseAbs().maxCoeff());
  }
  return sup;
}

// Tensor grid over R^ell for one observation: rows are grid points,
// weights are products of the per-axis weights.
void build_obs_grid(const QuadratureRule& axis, int ell, Eigen::MatrixXd& points,
                    Eigen::VectorXd& weights) {
  const Eigen::Index n = axis.nodes.size();
  if (ell == 1) {
    points = axis.nodes;
    weights = axis.weights;
    return;
  }
  points.resize(n * n, 2);
  weights.resize(n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      points(i * n + j, 0) = axis.nodes[i];
      points(i * n + j, 1) = axis.nodes[j];
      weights[i * n + j] = axis.weights[i] * axis.weights[j];
    }
  }
}

// phi_ell(y - f(u_i)) for every grid row and latent node, linear domain.
Eigen::MatrixXd gaussian_factor_matrix(const Eigen::MatrixXd& grid,
                                       const Eigen::MatrixXd& f_nodes) {
  const Eigen::Index g = grid.rows();
  const Eigen::Index n = f_nodes.rows();
  const int ell = static_cast<int>(grid.cols());
  const double norm_const = std::exp(-0.5 * ell * kLog2Pi);
  Eigen::MatrixXd a(g, n);
  for (Eigen::Index r = 0; r < g; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) {
      a(r, i) = norm_const * std::exp(-0.5 * (grid.row(r) - f_nodes.row(i)).squaredNorm());
    }
  }
  return a;
}

struct DensityTables {
  Eigen::MatrixXd f_nodes;     // latent-node curve values
  Eigen::VectorXd v1;          // b=1: w_i rho(u_i)
  Eigen::MatrixXd k2;          // b=2: w_i w_j rho(u_i,u_j)
};

DensityTables latent_tables(const RegressionFn& f, const LatentDensity& nu, int n_nodes) {
  DensityTables t;
  const QuadratureRule& rule = gauss_legendre_01(n_nodes);
  t.f_nodes.resize(n_nodes, f.ell);
  for (int i = 0; i < n_nodes; ++i) t.f_nodes.row(i) = f(rule.nodes[i]).transpose();
  if (nu.block_length() == 1) {
    t.v1.resize(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      t.v1[i] = rule.weights[i] * std::exp(nu.log_density1(rule.nodes[i]));
    }
  } else {
    t.k2.resize(n_nodes, n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      for (int j = 0; j < n_nodes; ++j) {
        t.k2(i, j) = rule.weights[i] * rule.weights[j] *
                     std::exp(nu.log_density2(rule.nodes[i], rule.nodes[j]));
      }
    }
  }
  return t;
}

double hellinger_quadrature(const RegressionFn& f1, const LatentDensity& nu1,
                            const RegressionFn& f2, const LatentDensity& nu2) {
  const int ell = f1.ell;
  const int b = nu1.block_length();
  if (ell > 2) throw std::invalid_argument("hellinger: quadrature supports ell <= 2");
  const double reach = std::max(curve_sup_norm(f1), curve_sup_norm(f2)) + 8.0;
  const QuadratureRule axis = gauss_legendre(obs_nodes_per_axis(b), -reach, reach);
  Eigen::MatrixXd grid;
  Eigen::VectorXd gw;
  build_obs_grid(axis, ell, grid, gw);

  const DensityTables t1 = latent_tables(f1, nu1, kLatentNodes);
  const DensityTables t2 = latent_tables(f2, nu2, kLatentNodes);
  const Eigen::MatrixXd a1 = gaussian_factor_matrix(grid, t1.f_nodes);
  const Eigen::MatrixXd a2 = gaussian_factor_matrix(grid, t2.f_nodes);

  double overlap = 0.0;  // integral of sqrt(p1 p2)
  if (b == 1) {
    const Eigen::VectorXd p1 = a1 * t1.v1;
    const Eigen::VectorXd p2 = a2 * t2.v1;
    for (Eigen::Index g = 0; g < gw.size(); ++g) {
      overlap += gw[g] * std::sqrt(std::max(0.0, p1[g] * p2[g]));
    }
  } else {
    const Eigen::MatrixXd p1 = a1 * t1.k2 * a1.transpose();
    const Eigen::MatrixXd p2 = a2 * t2.k2 * a2.transpose();
    for (Eigen::Index g = 0; g < gw.size(); ++g) {
      for (Eigen::Index h = 0; h < gw.size(); ++h) {
        overlap += gw[g] * gw[h] * std::sqrt(std::max(0.0, p1(g, h) * p2(g, h)));
      }
    }
  }
  return std::sqrt(std::min(1.0, std::max(0.0, 1.0 - overlap)));
}

double hellinger_monte_carlo(const RegressionFn& f1, const LatentDensity& nu1,
                             const RegressionFn& f2, const LatentDensity& nu2,
                             const HellingerOptions& options) {
  if (!nu1.can_sample()) {
    throw std::invalid_argument("hellinger: first latent density must be sampleable");
  }
  if (options.mc_samples < 2) throw std::invalid_argument("hellinger: need at least 2 samples");
  const int b = nu1.block_length();
  const int ell = f1.ell;
  BlockDensityEvaluator e1(f1, nu1);
  BlockDensityEvaluator e2(f2, nu2);
  Rng rng = Rng(options.seed).fork(stream::kHellingerMc);

  double mean = 0.0, m2 = 0.0;
  Eigen::MatrixXd y(b, ell);
  double x[2];
  for (long s = 0; s < options.mc_samples; ++s) {
    nu1.sample(rng, x);
    for (int j = 0; j < b; ++j) {
      Eigen::VectorXd v = f1(x[j]);
      for (int c = 0; c < ell; ++c) y(j, c) = v[c] + rng.normal();
    }
    const double ratio = std::exp(0.5 * (e2.log_density(y) - e1.log_density(y)));
    const double delta = ratio - mean;
    mean += delta / (s + 1);
    m2 += delta * (ratio - mean);
  }
  if (options.mc_h2_standard_error) {
    const double var = m2 / (options.mc_samples - 1);
    *options.mc_h2_standard_error = std::sqrt(var / options.mc_samples);
  }
  return std::sqrt(std::max(0.0, 1.0 - mean));
}

}  // namespace

double hellinger(const RegressionFn& f1, const LatentDensity& nu1,
                 const RegressionFn& f2, const LatentDensity& nu2,
                 const HellingerOptions& options) {
  if (f1.ell != f2.ell || f1.ell < 1) throw std::invalid_argument("hellinger: dimension mismatch");
  if (nu1.block_length() != nu2.block_length()) {
    throw std::invalid_argument("hellinger: block length mismatch");
  }
  if (options.method == HellingerOptions::Method::kQuadrature) {
    return hellinger_quadrature(f1, nu1, f2, nu2);
  }
  return hellinger_monte_carlo(f1, nu1, f2, nu2, options);
}

double penalty_weight(int n_blocks, double c) {
  if (n_blocks < 1) throw std::invalid_argument("penalty weight: need at least one block");
  if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("penalty weight: bad constant");
  return c * std::log(static_cast<double>(n_blocks)) * std::sqrt(static_cast<double>(n_blocks));
}

}  // namespace latreg
