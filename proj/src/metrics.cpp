#include "latreg/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "latreg/quadrature.hpp"

namespace latreg {

IsometryError l2_error_up_to_isometry(const RegressionFn& f, const RegressionFn& f_ref,
                                      int n_nodes) {
  if (f.ell != f_ref.ell || f.ell < 1) {
    throw std::invalid_argument("l2 error: curve dimension mismatch");
  }
  if (n_nodes < 2) throw std::invalid_argument("l2 error: need at least two nodes");
  const QuadratureRule& rule = gauss_legendre_01(n_nodes);
  const int ell = f.ell;
  Eigen::VectorXd sq_id = Eigen::VectorXd::Zero(ell);
  Eigen::VectorXd sq_re = Eigen::VectorXd::Zero(ell);
  for (int i = 0; i < n_nodes; ++i) {
    const double x = rule.nodes[i];
    const Eigen::VectorXd v = f(x);
    const Eigen::VectorXd r_id = v - f_ref(x);
    const Eigen::VectorXd r_re = v - f_ref(1.0 - x);
    sq_id += rule.weights[i] * r_id.cwiseAbs2();
    sq_re += rule.weights[i] * r_re.cwiseAbs2();
  }
  IsometryError err;
  err.reflected = sq_re.sum() < sq_id.sum();
  const Eigen::VectorXd& sq = err.reflected ? sq_re : sq_id;
  err.total = std::sqrt(sq.sum());
  err.per_component = sq.cwiseSqrt();
  return err;
}

double hausdorff_image_distance(const RegressionFn& f1, const RegressionFn& f2,
                                int grid_size) {
  if (f1.ell != f2.ell || f1.ell < 1) {
    throw std::invalid_argument("hausdorff: curve dimension mismatch");
  }
  if (grid_size < 2) throw std::invalid_argument("hausdorff: need at least two grid points");
  const int g = grid_size;
  Eigen::MatrixXd p1(g, f1.ell), p2(g, f2.ell);
  for (int i = 0; i < g; ++i) {
    const double x = static_cast<double>(i) / (g - 1);
    p1.row(i) = f1(x).transpose();
    p2.row(i) = f2(x).transpose();
  }
  auto directed = [&](const Eigen::MatrixXd& from, const Eigen::MatrixXd& to) {
    double worst = 0.0;
    for (int i = 0; i < g; ++i) {
      double best = (to.row(0) - from.row(i)).squaredNorm();
      for (int j = 1; j < g; ++j) {
        const double d = (to.row(j) - from.row(i)).squaredNorm();
        if (d < best) best = d;
      }
      if (best > worst) worst = best;
    }
    return worst;
  };
  return std::sqrt(std::max(directed(p1, p2), directed(p2, p1)));
}

double parameter_error(double a_hat, double a_star) {
  if (!std::isfinite(a_hat) || !std::isfinite(a_star)) {
    throw std::invalid_argument("parameter_error: non-finite input");
  }
  return a_hat - a_star;
}

}  // namespace latreg
