#pragma once

#include <Eigen/Dense>

#include "latreg/function_types.hpp"

namespace latreg {

/// L2 error between two curves minimized over the isometries of [0,1]
/// (identity and x -> 1-x).  One isometry is chosen by the total error;
/// per-component errors are reported under that same isometry.
struct IsometryError {
  double total = 0.0;
  Eigen::VectorXd per_component;
  bool reflected = false;
};

/// Gauss-Legendre evaluation of min_phi (sum_j int (f_j - g_j(phi))^2)^{1/2}.
IsometryError l2_error_up_to_isometry(const RegressionFn& f, const RegressionFn& f_ref,
                                      int n_nodes = 501);

/// Hausdorff distance between the images f1([0,1]) and f2([0,1]),
/// discretized on uniform grids of the given size.
double hausdorff_image_distance(const RegressionFn& f1, const RegressionFn& f2,
                                int grid_size = 1001);

/// Signed scale-parameter error a_hat - a_star.
double parameter_error(double a_hat, double a_star);

}  // namespace latreg
