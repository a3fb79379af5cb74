#include "latreg/quadrature.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

namespace latreg {

namespace {

// Gauss-Legendre on [-1,1] by Newton iteration on the Legendre recurrence.
// Nodes come out symmetric; accuracy is limited only by double roundoff.
QuadratureRule legendre_reference(int n) {
  if (n < 1) throw std::invalid_argument("quadrature: node count must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev-based initial guess for the i-th root (descending order).
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

}  // namespace

const QuadratureRule& gauss_legendre_01(int n) {
  static std::map<int, QuadratureRule> cache;
  static std::mutex guard;
  std::lock_guard<std::mutex> lock(guard);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, gauss_legendre(n, 0.0, 1.0)).first;
  }
  return it->second;
}

QuadratureRule gauss_legendre(int n, double a, double b) {
  QuadratureRule ref = legendre_reference(n);
  QuadratureRule rule;
  const double mid = 0.5 * (a + b);
  const double halfwidth = 0.5 * (b - a);
  rule.nodes = (ref.nodes.array() * halfwidth + mid).matrix();
  rule.weights = ref.weights * halfwidth;
  return rule;
}

double log_sum_exp(const Eigen::VectorXd& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

}  // namespace latreg
