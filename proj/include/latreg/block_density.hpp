#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>

#include "latreg/function_types.hpp"
#include "latreg/markov_model.hpp"
#include "latreg/quadrature.hpp"
#include "latreg/spline.hpp"

namespace latreg {

/// Distribution of the latent states behind one observation block.
///
/// Supported kinds: the stationary density nu_a (block length 1), the
/// stationary pair density nu_a(x) q_a(x,x') (block length 2), the uniform
/// density (either block length), and arbitrary caller-supplied densities
/// for testing.  Uniform and kernel-backed kinds can be sampled; custom
/// kinds can only be evaluated.
class LatentDensity {
 public:
  static LatentDensity stationary(const KernelParam& kernel);
  static LatentDensity pair(const KernelParam& kernel);
  static LatentDensity uniform(int block_length);
  static LatentDensity custom1(std::function<double(double)> density);
  static LatentDensity custom2(std::function<double(double, double)> density);

  int block_length() const { return b_; }
  bool can_sample() const { return kind_ != Kind::kCustom; }

  /// log density at a latent block (x) or (x0,x1).
  double log_density1(double x) const;
  double log_density2(double x0, double x1) const;

  /// Draw one latent block into x[0..b-1].
  void sample(Rng& rng, double* x) const;

 private:
  enum class Kind { kStationary, kPair, kUniform, kCustom };
  Kind kind_ = Kind::kUniform;
  int b_ = 1;
  KernelParam kernel_;
  std::function<double(double)> density1_;
  std::function<double(double, double)> density2_;
};

/// Observations grouped into blocks of length b; block k occupies rows
/// [k*b, (k+1)*b) of data.
struct ObservationBlocks {
  int b = 1;
  Eigen::MatrixXd data;  // (n_blocks*b) x ell

  int n_blocks() const { return static_cast<int>(data.rows()) / b; }
  int ell() const { return static_cast<int>(data.cols()); }
  Eigen::Block<const Eigen::MatrixXd> block(int k) const {
    return data.middleRows(static_cast<Eigen::Index>(k) * b, b);
  }
};

/// Group a trajectory into observation blocks; n_obs must be divisible
/// by b.
ObservationBlocks make_blocks(const Trajectory& trajectory, int b);

/// Precomputed latent-grid tables for repeated block-density evaluation
/// with a fixed curve and latent distribution.
///
/// The latent integral over [0,1]^b is replaced by a tensor Gauss-Legendre
/// rule with n_nodes points per axis.  For b=2 the density value is the
/// bilinear form alpha^T K beta with K_ij = w_i w_j rho(u_i,u_j) and
/// per-observation Gaussian factor vectors alpha, beta; evaluation is
/// log-sum-exp safeguarded by factoring out the largest log factor per
/// axis.
class BlockDensityEvaluator {
 public:
  BlockDensityEvaluator(const RegressionFn& f, const LatentDensity& nu,
                        int n_nodes = kLatentNodes);

  int block_length() const { return b_; }
  int ell() const { return ell_; }

  /// log p(y) for one block, y of shape b x ell.
  double log_density(const Eigen::MatrixXd& y_block) const;

  /// Sum of log p over all blocks.
  double log_pseudo_likelihood(const ObservationBlocks& obs) const;

 private:
  int b_;
  int ell_;
  Eigen::VectorXd nodes_;
  Eigen::MatrixXd f_nodes_;    // n_nodes x ell
  Eigen::VectorXd log_wnu_;    // b=1: log(w_i rho(u_i))
  Eigen::MatrixXd kernel_mat_; // b=2: w_i w_j rho(u_i,u_j)
};

/// Block density p_{f,nu}(y) by fixed-grid quadrature.
double block_density(const RegressionFn& f, const LatentDensity& nu,
                     const Eigen::MatrixXd& y_block, int n_nodes = kLatentNodes);

/// Pseudo log likelihood sum_k ln p_{f,nu}(Y_k).
double pseudo_log_likelihood(const RegressionFn& f, const LatentDensity& nu,
                             const ObservationBlocks& obs, int n_nodes = kLatentNodes);

/// Complexity penalty selector for the penalized objective.
struct PenaltySpec {
  enum class Kind { kCurvature, kSobolev };
  Kind kind = Kind::kCurvature;
  int s = 2;              // Sobolev smoothness order (kSobolev only)
  double upsilon = 1.0;   // complexity exponent (kSobolev only)
};

/// Penalized pseudo log likelihood: PLL(f) - lambda * I(f), with I either
/// the exact curvature seminorm ||f''||^2 or the Sobolev complexity.
double penalized_objective(const SplineFunction& f, const LatentDensity& nu,
                           const ObservationBlocks& obs, double lambda,
                           const PenaltySpec& penalty, int n_nodes = kLatentNodes);

/// Hellinger distance options.  Quadrature truncates each observation
/// coordinate to [-(L+8), L+8] where L is the larger sup norm of the two
/// curves on a 1001-point grid, with 64 nodes per axis for block length 1
/// and 32 for block length 2.  Monte Carlo draws blocks from the first
/// density (requires a sampleable latent kind) and averages
/// sqrt(p2/p1); the optional output reports the standard error of the
/// squared-distance estimate.
struct HellingerOptions {
  enum class Method { kQuadrature, kMonteCarlo };
  Method method = Method::kQuadrature;
  long mc_samples = 100000;
  std::uint64_t seed = 0;
  double* mc_h2_standard_error = nullptr;
};

/// Hellinger distance h(p1, p2) = sqrt(1 - integral of sqrt(p1 p2))
/// between the block densities induced by (f1,nu1) and (f2,nu2).
double hellinger(const RegressionFn& f1, const LatentDensity& nu1,
                 const RegressionFn& f2, const LatentDensity& nu2,
                 const HellingerOptions& options = {});

/// Penalty weight c * log(n) * sqrt(n) used by the estimation experiments.
double penalty_weight(int n_blocks, double c);

}  // namespace latreg
