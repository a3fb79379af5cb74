#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "latreg/block_density.hpp"
#include "latreg/rng.hpp"
#include "latreg/spline.hpp"

namespace latreg {

/// Estimator configuration.
///
/// The latent model inside the estimator is: uniform state density for
/// block length 1 (the known-density mode, a never updated), and the
/// stationary pair density nu_a(x) q_a(x,x') for block length 2.  The
/// quadrature E-step replaces the Monte Carlo conditional expectations by
/// exact tensor-grid expectations and makes the per-iteration penalized
/// objective non-decreasing up to roundoff.
struct EMConfig {
  int b = 2;
  int n_a_particles = 200;
  int n_f_particles = 200;
  double lambda = 1.0;          // curvature penalty weight
  int iterations = 100;
  double a_init = 4.0;
  bool estimate_a = true;       // requires b == 2
  double a_search_lo = 0.01;
  double a_search_hi = 20.0;
  std::uint64_t seed = 0;
  enum class EStep { kMonteCarlo, kQuadrature };
  EStep e_step_mode = EStep::kMonteCarlo;
  int quadrature_nodes = kLatentNodes;
  SplineFunction f_init;
};

/// Per-block importance-weighted particle systems; weights are normalized
/// within each block.
struct WeightedParticles {
  int b = 1;
  std::vector<Eigen::MatrixXd> states;   // n_blocks entries, N x b
  std::vector<Eigen::VectorXd> weights;  // n_blocks entries, N
};

struct EMIterationRecord {
  int iteration = 0;       // 1-based, after the update
  double a_hat = 0.0;
  double penalized_pll = 0.0;  // quadrature pseudo-log-likelihood - lambda*||f''||^2
  double min_ess = 0.0;        // smallest per-block effective sample size; NaN in quadrature mode
};

struct EMState {
  double a_hat = 0.0;
  SplineFunction f_hat;
  int iteration = 0;
  std::vector<EMIterationRecord> trace;
};

/// Importance-sampling E-step: per block, n_particles latent blocks drawn
/// uniformly on [0,1]^b and weighted by the current model density times the
/// Gaussian observation factors, normalized in the log domain.  Block k
/// draws from stream.fork(k), so blocks are independent of evaluation
/// order.
WeightedParticles e_step(double a_hat, const SplineFunction& f_hat, const EMConfig& config,
                         const ObservationBlocks& obs, int n_particles, const Rng& stream);

/// Mean weighted pair distance D = (1/n) sum_k sum_i w_k^i |x0 - x1|.
double expected_pair_distance(const WeightedParticles& particles);

/// Scale-update objective log(a + a^2 (exp(-1/a) - 1)) + d / a; the first
/// term equals log(Z(a)/2) of the stationary normalizer.
double a_update_objective(double a, double d);

/// Golden-section minimizer of the scale-update objective on [lo, hi] to
/// absolute tolerance 1e-6, falling back to the better endpoint when the
/// minimum sits on the boundary.
double a_update_from_distance(double d, double lo, double hi);
double a_update(const WeightedParticles& particles, double lo, double hi);

/// Multinomial resampling: per block, n_draws tuples drawn from the
/// weighted particle system.  Block k draws from stream.fork(k).
std::vector<Eigen::MatrixXd> resample(const WeightedParticles& particles, int n_draws,
                                      const Rng& stream);

/// Curve update: each observation within block k is paired with that
/// block's resampled latent tuples at weight 1/(2 n_draws) and the
/// penalized weighted least squares problem is solved by a smoothing
/// spline with penalty weight lambda.
SplineFunction f_update(const std::vector<Eigen::MatrixXd>& resampled,
                        const ObservationBlocks& obs, double lambda);

/// Callback invoked after every completed iteration.
using EMObserver = std::function<void(const EMState&)>;

/// One full iteration (scale update then curve update, both conditioned on
/// the incoming state), appending a trace record.  iteration_index is the
/// 0-based index of the iteration being performed.
void em_iterate(EMState& state, const EMConfig& config, const ObservationBlocks& obs,
                int iteration_index);

/// Run the estimator from (a_init, f_init) for the configured number of
/// iterations.  Identical configurations give bit-identical results.
EMState run_em(const EMConfig& config, const ObservationBlocks& obs,
               const EMObserver& observer = {});

}  // namespace latreg
