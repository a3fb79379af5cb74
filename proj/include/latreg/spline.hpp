#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

#include "latreg/function_types.hpp"

namespace latreg {

/// Weighted vector-valued observations at scalar abscissae in [0,1].
/// Weights must be finite and nonnegative; zero-weight points are ignored
/// by the fitter.
struct WeightedPoints {
  Eigen::VectorXd x;  // n
  Eigen::MatrixXd y;  // n x ell
  Eigen::VectorXd w;  // n
};

/// Vector-valued natural cubic spline on [0,1].
///
/// All components share one strictly increasing knot vector with
/// knots.front() == 0 and knots.back() == 1; outside the region where a fit
/// had data the pieces are linear (natural boundary behaviour).  Storage is
/// per component a 4 x (m-1) coefficient matrix, column i holding
/// (c0,c1,c2,c3) of c0 + c1 s + c2 s^2 + c3 s^3 with s = x - knots[i].
class SplineFunction {
 public:
  SplineFunction() = default;

  /// Direct construction from knots spanning [0,1] and per-component
  /// coefficient matrices.  Continuity is the caller's responsibility.
  static SplineFunction from_coefficients(Eigen::VectorXd knots,
                                          std::vector<Eigen::MatrixXd> coeffs);

  /// Natural cubic interpolation spline through (x_i, y_i).  Abscissae must
  /// be distinct; they are sorted internally.  Linear pieces extend the
  /// curve to [0,1] when the data do not reach the endpoints.
  static SplineFunction natural_interpolant(const Eigen::VectorXd& x,
                                            const Eigen::MatrixXd& y);

  int ell() const { return static_cast<int>(coeffs_.size()); }
  int n_knots() const { return static_cast<int>(knots_.size()); }
  const Eigen::VectorXd& knots() const { return knots_; }
  const Eigen::MatrixXd& coefficients(int component) const { return coeffs_.at(component); }

  /// Value at x in [0,1].
  Eigen::VectorXd evaluate(double x) const;
  Eigen::VectorXd operator()(double x) const { return evaluate(x); }

  /// Values on a grid; row i is evaluate(xs[i]).
  Eigen::MatrixXd evaluate_many(const Eigen::VectorXd& xs) const;

  /// Derivative of given order (0, 1 or 2) at x.
  Eigen::VectorXd derivative(double x, int order) const;

  /// View as a generic regression function (copies the spline).
  RegressionFn as_fn() const;

 private:
  int interval_index(double x) const;

  Eigen::VectorXd knots_;
  std::vector<Eigen::MatrixXd> coeffs_;
};

/// Weighted penalized least squares fit:
///   minimize  sum_i w_i |y_i - f(x_i)|^2  +  lambda * sum_j int (f_j'')^2
/// over vector-valued C^2 functions on [0,1]; the minimizer is a natural
/// cubic spline with knots at the distinct positively weighted abscissae.
/// Duplicate abscissae are aggregated (weights summed, values averaged by
/// weight) before solving.  Solved in the Reinsch banded form: one
/// symmetric positive definite pentadiagonal factorization shared by all
/// components.  Requires lambda > 0 and at least two distinct abscissae.
SplineFunction fit_smoothing_spline(const WeightedPoints& points, double lambda);

/// sum_j int_0^1 (f_j'')^2, exact from the piecewise-linear second
/// derivative.
double curvature_norm_sq(const SplineFunction& f);

/// Sobolev norm (sum_{alpha<=s} ||f^(alpha)||_{L2}^2)^{1/2} for s in
/// {0,1,2}, by exact piecewise-polynomial integration over [0,1].
double sobolev_norm(const SplineFunction& f, int s);

/// Complexity functional sobolev_norm(f,s)^{1/upsilon}, upsilon > 0.
double complexity(const SplineFunction& f, int s, double upsilon);

/// Plain-text serialization at full double precision.  Format:
///   line 1:  "latreg-spline 1"
///   line 2:  "<ell> <m>"
///   m lines: knot values
///   per component: "component <j>" then m-1 lines "c0 c1 c2 c3"
/// Round-trips bit-exactly through 17 significant digits.
void save_spline(const SplineFunction& f, std::ostream& out);
void save_spline(const SplineFunction& f, const std::string& path);
SplineFunction load_spline(std::istream& in);
SplineFunction load_spline(const std::string& path);

}  // namespace latreg
