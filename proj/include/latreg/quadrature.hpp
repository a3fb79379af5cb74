#pragma once

#include <Eigen/Dense>

namespace latreg {

/// Nodes and weights of a fixed quadrature rule on an interval.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Gauss-Legendre rule with n nodes on [0,1].  Rules are cached per n;
/// the returned reference stays valid for the lifetime of the process.
const QuadratureRule& gauss_legendre_01(int n);

/// Gauss-Legendre rule with n nodes on [a,b].
QuadratureRule gauss_legendre(int n, double a, double b);

/// Default node count for latent-state integrals on [0,1].
inline constexpr int kLatentNodes = 201;

/// log(sum_i exp(v_i)), guarded against overflow; -inf for empty or all-inf.
double log_sum_exp(const Eigen::VectorXd& v);

}  // namespace latreg
