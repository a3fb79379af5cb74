#include "latreg/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "latreg/markov_model.hpp"
#include "latreg/quadrature.hpp"

namespace latreg {

namespace {

const double kNan = std::numeric_limits<double>::quiet_NaN();

// Fitting grid for Monte Carlo curve updates; see f_update.
const double kFitGrid = 512.0;

void validate_config(const EMConfig& config, const ObservationBlocks& obs) {
  if (config.b != 1 && config.b != 2) throw std::invalid_argument("em: block length must be 1 or 2");
  if (obs.b != config.b) throw std::invalid_argument("em: observation block length mismatch");
  if (obs.n_blocks() < 1) throw std::invalid_argument("em: no observation blocks");
  if (config.iterations < 1) throw std::invalid_argument("em: iteration count must be positive");
  if (!(config.lambda > 0.0) || !std::isfinite(config.lambda)) {
    throw std::invalid_argument("em: penalty weight must be positive and finite");
  }
  if (config.n_f_particles < 1) throw std::invalid_argument("em: need curve-update particles");
  if (config.estimate_a) {
    if (config.b != 2) throw std::invalid_argument("em: scale estimation requires block length 2");
    if (config.n_a_particles < 1) throw std::invalid_argument("em: need scale-update particles");
  }
  if (!(config.a_init > 0.0) || !std::isfinite(config.a_init)) {
    throw std::invalid_argument("em: bad initial scale");
  }
  if (!(config.a_search_lo > 0.0) || !(config.a_search_hi > config.a_search_lo)) {
    throw std::invalid_argument("em: bad scale search interval");
  }
  if (config.quadrature_nodes < 2) throw std::invalid_argument("em: bad quadrature node count");
  if (config.f_init.ell() != obs.ell() || config.f_init.n_knots() < 2) {
    throw std::invalid_argument("em: initial curve missing or wrong dimension");
  }
}

LatentDensity model_density(const EMConfig& config, double a_hat) {
  if (config.b == 1) return LatentDensity::uniform(1);
  return LatentDensity::pair(KernelParam{a_hat});
}

/// Exact posterior expectations on the tensor quadrature grid.  Outputs the
/// mean pair distance (b=2) and the weighted curve-fit points; posterior
/// marginal weights carry the 1/2 data-term factor directly.
struct QuadratureEStep {
  double mean_pair_distance = kNan;
  WeightedPoints points;
};

QuadratureEStep quadrature_e_step(double a_hat, const SplineFunction& f_hat,
                                  const EMConfig& config, const ObservationBlocks& obs) {
  const QuadratureRule& rule = gauss_legendre_01(config.quadrature_nodes);
  const int nq = config.quadrature_nodes;
  const int n = obs.n_blocks();
  const int ell = obs.ell();
  Eigen::MatrixXd f_nodes(nq, ell);
  for (int i = 0; i < nq; ++i) f_nodes.row(i) = f_hat.evaluate(rule.nodes[i]).transpose();

  QuadratureEStep out;
  if (config.b == 1) {
    out.points.x.resize(static_cast<Eigen::Index>(n) * nq);
    out.points.y.resize(static_cast<Eigen::Index>(n) * nq, ell);
    out.points.w.resize(static_cast<Eigen::Index>(n) * nq);
    Eigen::VectorXd lw(nq);
    for (int k = 0; k < n; ++k) {
      const auto y = obs.block(k);
      for (int i = 0; i < nq; ++i) {
        lw[i] = std::log(rule.weights[i]) - 0.5 * (y.row(0) - f_nodes.row(i)).squaredNorm();
      }
      const double lse = log_sum_exp(lw);
      for (int i = 0; i < nq; ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(k) * nq + i;
        out.points.x[r] = rule.nodes[i];
        out.points.y.row(r) = y.row(0);
        out.points.w[r] = 0.5 * std::exp(lw[i] - lse);
      }
    }
    return out;
  }

  const KernelParam kernel{a_hat};
  Eigen::MatrixXd kmat(nq, nq), absdiff(nq, nq);
  for (int i = 0; i < nq; ++i) {
    const double lnu = log_stationary_density(kernel, rule.nodes[i]);
    for (int j = 0; j < nq; ++j) {
      kmat(i, j) = rule.weights[i] * rule.weights[j] *
                   std::exp(lnu + log_transition_density(kernel, rule.nodes[i], rule.nodes[j]));
      absdiff(i, j) = std::abs(rule.nodes[i] - rule.nodes[j]);
    }
  }
  out.points.x.resize(static_cast<Eigen::Index>(n) * 2 * nq);
  out.points.y.resize(static_cast<Eigen::Index>(n) * 2 * nq, ell);
  out.points.w.resize(static_cast<Eigen::Index>(n) * 2 * nq);
  Eigen::VectorXd la(nq), lb(nq);
  double dist_total = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto y = obs.block(k);
    for (int i = 0; i < nq; ++i) {
      la[i] = -0.5 * (y.row(0) - f_nodes.row(i)).squaredNorm();
      lb[i] = -0.5 * (y.row(1) - f_nodes.row(i)).squaredNorm();
    }
    const Eigen::VectorXd alpha = (la.array() - la.maxCoeff()).exp().matrix();
    const Eigen::VectorXd beta = (lb.array() - lb.maxCoeff()).exp().matrix();
    const Eigen::MatrixXd post = alpha.asDiagonal() * kmat * beta.asDiagonal();
    const double total = post.sum();
    if (!(total > 0.0)) throw std::runtime_error("em: degenerate posterior block");
    dist_total += post.cwiseProduct(absdiff).sum() / total;
    const Eigen::VectorXd row_marg = post.rowwise().sum() / total;
    const Eigen::VectorXd col_marg = post.colwise().sum().transpose() / total;
    for (int i = 0; i < nq; ++i) {
      const Eigen::Index r0 = (static_cast<Eigen::Index>(k) * 2) * nq + i;
      const Eigen::Index r1 = (static_cast<Eigen::Index>(k) * 2 + 1) * nq + i;
      out.points.x[r0] = rule.nodes[i];
      out.points.y.row(r0) = y.row(0);
      out.points.w[r0] = 0.5 * row_marg[i];
      out.points.x[r1] = rule.nodes[i];
      out.points.y.row(r1) = y.row(1);
      out.points.w[r1] = 0.5 * col_marg[i];
    }
  }
  out.mean_pair_distance = dist_total / n;
  return out;
}

double min_effective_sample_size(const WeightedParticles& particles) {
  double min_ess = std::numeric_limits<double>::infinity();
  for (const auto& w : particles.weights) {
    const double ss = w.squaredNorm();
    min_ess = std::min(min_ess, ss > 0.0 ? 1.0 / ss : 0.0);
  }
  return min_ess;
}

}  // namespace

WeightedParticles e_step(double a_hat, const SplineFunction& f_hat, const EMConfig& config,
                         const ObservationBlocks& obs, int n_particles, const Rng& stream) {
  if (n_particles < 1) throw std::invalid_argument("e_step: need at least one particle");
  const int n = obs.n_blocks();
  const int b = config.b;
  const LatentDensity nu = model_density(config, a_hat);
  WeightedParticles particles;
  particles.b = b;
  particles.states.resize(n);
  particles.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    Rng rng = stream.fork(static_cast<std::uint64_t>(k));
    const auto y = obs.block(k);
    Eigen::MatrixXd x(n_particles, b);
    Eigen::VectorXd lw(n_particles);
    for (int i = 0; i < n_particles; ++i) {
      for (int j = 0; j < b; ++j) x(i, j) = rng.uniform();
      double l = b == 1 ? nu.log_density1(x(i, 0)) : nu.log_density2(x(i, 0), x(i, 1));
      for (int j = 0; j < b; ++j) {
        l -= 0.5 * (y.row(j).transpose() - f_hat.evaluate(x(i, j))).squaredNorm();
      }
      lw[i] = l;
    }
    const double lse = log_sum_exp(lw);
    if (!std::isfinite(lse)) throw std::runtime_error("e_step: all particle weights vanished");
    particles.states[k] = std::move(x);
    particles.weights[k] = (lw.array() - lse).exp().matrix();
  }
  return particles;
}

double expected_pair_distance(const WeightedParticles& particles) {
  if (particles.b != 2) throw std::invalid_argument("pair distance: block length must be 2");
  if (particles.states.empty()) throw std::invalid_argument("pair distance: no blocks");
  double total = 0.0;
  for (std::size_t k = 0; k < particles.states.size(); ++k) {
    const Eigen::MatrixXd& x = particles.states[k];
    const Eigen::VectorXd& w = particles.weights[k];
    total += w.dot((x.col(0) - x.col(1)).cwiseAbs());
  }
  return total / static_cast<double>(particles.states.size());
}

double a_update_objective(double a, double d) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("a objective: bad scale");
  if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("a objective: bad distance");
  return std::log(a + a * a * std::expm1(-1.0 / a)) + d / a;
}

double a_update_from_distance(double d, double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("a update: bad search interval");
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - gr * (b - a);
  double x2 = a + gr * (b - a);
  double f1 = a_update_objective(x1, d);
  double f2 = a_update_objective(x2, d);
  while (b - a > 1e-6) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = a_update_objective(x1, d);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = a_update_objective(x2, d);
    }
  }
  double best = 0.5 * (a + b);
  double fbest = a_update_objective(best, d);
  for (double cand : {lo, hi}) {
    const double fc = a_update_objective(cand, d);
    if (fc < fbest) {
      best = cand;
      fbest = fc;
    }
  }
  return best;
}

double a_update(const WeightedParticles& particles, double lo, double hi) {
  return a_update_from_distance(expected_pair_distance(particles), lo, hi);
}

std::vector<Eigen::MatrixXd> resample(const WeightedParticles& particles, int n_draws,
                                      const Rng& stream) {
  if (n_draws < 1) throw std::invalid_argument("resample: need at least one draw");
  std::vector<Eigen::MatrixXd> out(particles.states.size());
  for (std::size_t k = 0; k < particles.states.size(); ++k) {
    Rng rng = stream.fork(static_cast<std::uint64_t>(k));
    const Eigen::MatrixXd& x = particles.states[k];
    const Eigen::VectorXd& w = particles.weights[k];
    Eigen::VectorXd cum(w.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      acc += w[i];
      cum[i] = acc;
    }
    cum[w.size() - 1] = 1.0;  // guard against roundoff in the last bin
    Eigen::MatrixXd draws(n_draws, particles.b);
    for (int i = 0; i < n_draws; ++i) {
      const double u = rng.uniform();
      const double* begin = cum.data();
      const Eigen::Index idx = std::upper_bound(begin, begin + cum.size(), u) - begin;
      draws.row(i) = x.row(std::min(idx, cum.size() - 1));
    }
    out[k] = std::move(draws);
  }
  return out;
}

SplineFunction f_update(const std::vector<Eigen::MatrixXd>& resampled,
                        const ObservationBlocks& obs, double lambda) {
  const int n = obs.n_blocks();
  if (static_cast<int>(resampled.size()) != n) {
    throw std::invalid_argument("f_update: block count mismatch");
  }
  if (n == 0) throw std::invalid_argument("f_update: no blocks");
  const int b = obs.b;
  const int n_draws = static_cast<int>(resampled[0].rows());
  const int ell = obs.ell();
  const Eigen::Index total = static_cast<Eigen::Index>(n) * n_draws * b;
  WeightedPoints pts;
  pts.x.resize(total);
  pts.y.resize(total, ell);
  pts.w.setConstant(total, 1.0 / (2.0 * n_draws));
  Eigen::Index r = 0;
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd& x = resampled[k];
    if (x.rows() != n_draws || x.cols() != b) {
      throw std::invalid_argument("f_update: resampled tuple shape mismatch");
    }
    const auto y = obs.block(k);
    for (int i = 0; i < n_draws; ++i) {
      for (int j = 0; j < b; ++j, ++r) {
        // random draws are snapped to a uniform grid before fitting: distinct
        // draws can land arbitrarily close together, and the 1/gap^2 terms of
        // the penalized fit would destroy its conditioning.  The snap moves a
        // knot by at most 1/(2 kFitGrid), far below the statistical error.
        pts.x[r] = std::round(x(i, j) * kFitGrid) / kFitGrid;
        pts.y.row(r) = y.row(j);
      }
    }
  }
  return fit_smoothing_spline(pts, lambda);
}

void em_iterate(EMState& state, const EMConfig& config, const ObservationBlocks& obs,
                int iteration_index) {
  validate_config(config, obs);
  const bool quad = config.e_step_mode == EMConfig::EStep::kQuadrature;
  const Rng base(config.seed);

  double a_next = state.a_hat;
  double min_ess = kNan;
  SplineFunction f_next;

  if (quad) {
    QuadratureEStep expectation = quadrature_e_step(state.a_hat, state.f_hat, config, obs);
    if (config.estimate_a) {
      const double d = expectation.mean_pair_distance;
      const double cand = a_update_from_distance(d, config.a_search_lo, config.a_search_hi);
      // keep the previous scale unless the proposal improves the objective;
      // protects the exact ascent property from bracketing tolerance
      if (a_update_objective(cand, d) <= a_update_objective(state.a_hat, d)) a_next = cand;
    }
    f_next = fit_smoothing_spline(expectation.points, config.lambda);
  } else {
    if (config.estimate_a) {
      const Rng stream = base.fork(stream::kEStepA).fork(static_cast<std::uint64_t>(iteration_index));
      WeightedParticles pa =
          e_step(state.a_hat, state.f_hat, config, obs, config.n_a_particles, stream);
      const double d = expected_pair_distance(pa);
      const double cand = a_update_from_distance(d, config.a_search_lo, config.a_search_hi);
      if (a_update_objective(cand, d) <= a_update_objective(state.a_hat, d)) a_next = cand;
    }
    const Rng fstream = base.fork(stream::kEStepF).fork(static_cast<std::uint64_t>(iteration_index));
    WeightedParticles pf =
        e_step(state.a_hat, state.f_hat, config, obs, config.n_f_particles, fstream);
    min_ess = min_effective_sample_size(pf);
    const Rng rstream = base.fork(stream::kResample).fork(static_cast<std::uint64_t>(iteration_index));
    std::vector<Eigen::MatrixXd> draws = resample(pf, config.n_f_particles, rstream);
    f_next = f_update(draws, obs, config.lambda);
  }

  state.a_hat = a_next;
  state.f_hat = std::move(f_next);
  state.iteration = iteration_index + 1;

  EMIterationRecord rec;
  rec.iteration = state.iteration;
  rec.a_hat = state.a_hat;
  const BlockDensityEvaluator eval(state.f_hat.as_fn(), model_density(config, state.a_hat),
                                   config.quadrature_nodes);
  rec.penalized_pll =
      eval.log_pseudo_likelihood(obs) - config.lambda * curvature_norm_sq(state.f_hat);
  rec.min_ess = min_ess;
  state.trace.push_back(rec);
}

EMState run_em(const EMConfig& config, const ObservationBlocks& obs, const EMObserver& observer) {
  validate_config(config, obs);
  EMState state;
  state.a_hat = config.a_init;
  state.f_hat = config.f_init;
  state.iteration = 0;
  for (int p = 0; p < config.iterations; ++p) {
    em_iterate(state, config, obs, p);
    if (observer) observer(state);
  }
  return state;
}

}  // namespace latreg
