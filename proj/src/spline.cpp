#include "latreg/spline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace latreg {

namespace {

// Tolerance below which neighbouring abscissae are merged before fitting.
// Random draws can land ~1/n^2 apart; the 1/h^2 penalty entries such gaps
// produce would wreck the conditioning of the banded solve, while merging
// them perturbs the objective only at O(gap^2).
const double kMinKnotGap = 1e-6;

/// Symmetric positive definite pentadiagonal system, stored by diagonals.
/// factor() symmetrically equilibrates to unit diagonal and computes an
/// in-place LDL^T with unit lower bandwidth 2.
struct PentaSystem {
  Eigen::VectorXd d0;  // main diagonal, size p
  Eigen::VectorXd d1;  // first superdiagonal, size p-1 (p>=2)
  Eigen::VectorXd d2;  // second superdiagonal, size p-2 (p>=3)
  Eigen::VectorXd scale_;

  void factor() {
    const Eigen::Index p = d0.size();
    scale_.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      if (!(d0[i] > 0.0) || !std::isfinite(d0[i])) {
        throw std::runtime_error("spline: penalized system not positive definite");
      }
      scale_[i] = 1.0 / std::sqrt(d0[i]);
    }
    for (Eigen::Index i = 0; i < p; ++i) {
      d0[i] = 1.0;
      if (i + 1 < p) d1[i] *= scale_[i] * scale_[i + 1];
      if (i + 2 < p) d2[i] *= scale_[i] * scale_[i + 2];
    }
    for (Eigen::Index i = 0; i < p; ++i) {
      double di = d0[i];
      if (i >= 1) di -= d1[i - 1] * d1[i - 1] * d0[i - 1];
      if (i >= 2) di -= d2[i - 2] * d2[i - 2] * d0[i - 2];
      if (!(di > 0.0) || !std::isfinite(di)) {
        throw std::runtime_error("spline: penalized system not positive definite");
      }
      d0[i] = di;
      if (i + 1 < p) {
        double v = d1[i];
        if (i >= 1) v -= d2[i - 1] * d1[i - 1] * d0[i - 1];
        d1[i] = v / di;
      }
      if (i + 2 < p) d2[i] = d2[i] / di;
    }
  }

  void solve(Eigen::VectorXd& b) const {
    const Eigen::Index p = d0.size();
    b.array() *= scale_.array();
    for (Eigen::Index i = 0; i < p; ++i) {
      if (i >= 1) b[i] -= d1[i - 1] * b[i - 1];
      if (i >= 2) b[i] -= d2[i - 2] * b[i - 2];
    }
    for (Eigen::Index i = 0; i < p; ++i) b[i] /= d0[i];
    for (Eigen::Index i = p - 1; i >= 0; --i) {
      if (i + 1 < p) b[i] -= d1[i] * b[i + 1];
      if (i + 2 < p) b[i] -= d2[i] * b[i + 2];
    }
    b.array() *= scale_.array();
  }
};

struct AggregatedData {
  Eigen::VectorXd t;  // m distinct abscissae, increasing
  Eigen::MatrixXd g;  // m x ell weighted mean values
  Eigen::VectorXd w;  // m aggregated weights
};

AggregatedData aggregate(const WeightedPoints& points) {
  const Eigen::Index n = points.x.size();
  if (points.y.rows() != n || points.w.size() != n) {
    throw std::invalid_argument("spline fit: inconsistent point array sizes");
  }
  if (points.y.cols() < 1) throw std::invalid_argument("spline fit: empty value dimension");
  std::vector<Eigen::Index> order;
  order.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = points.x[i];
    const double wi = points.w[i];
    if (!(xi >= 0.0 && xi <= 1.0)) throw std::domain_error("spline fit: abscissa outside [0,1]");
    if (!std::isfinite(wi) || wi < 0.0) throw std::invalid_argument("spline fit: bad weight");
    if (!points.y.row(i).allFinite()) throw std::invalid_argument("spline fit: non-finite value");
    if (wi > 0.0) order.push_back(i);
  }
  if (order.size() < 2) throw std::invalid_argument("spline fit: need at least two weighted points");
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return points.x[a] < points.x[b]; });

  const Eigen::Index ell = points.y.cols();
  std::vector<double> ts;
  std::vector<double> ws;
  std::vector<Eigen::VectorXd> gs;
  for (Eigen::Index idx : order) {
    const double xi = points.x[idx];
    const double wi = points.w[idx];
    if (!ts.empty() && xi - ts.back() < kMinKnotGap) {
      const double wtot = ws.back() + wi;
      // abscissa kept at the group leader; values weight-averaged
      gs.back() = (ws.back() * gs.back() + wi * points.y.row(idx).transpose()) / wtot;
      ws.back() = wtot;
    } else {
      ts.push_back(xi);
      ws.push_back(wi);
      gs.push_back(points.y.row(idx).transpose());
    }
  }
  if (ts.size() < 2) {
    throw std::invalid_argument("spline fit: need at least two distinct abscissae");
  }
  AggregatedData data;
  const Eigen::Index m = static_cast<Eigen::Index>(ts.size());
  data.t.resize(m);
  data.w.resize(m);
  data.g.resize(m, ell);
  for (Eigen::Index i = 0; i < m; ++i) {
    data.t[i] = ts[i];
    data.w[i] = ws[i];
    data.g.row(i) = gs[i].transpose();
  }
  return data;
}

/// Natural-spline coefficients from knot values g and knot second
/// derivatives M (C^1 consistency of (g, M) is the caller's contract).
std::vector<Eigen::MatrixXd> build_coefficients(const Eigen::VectorXd& t,
                                                const Eigen::MatrixXd& g,
                                                const Eigen::MatrixXd& m2) {
  const Eigen::Index m = t.size();
  const Eigen::Index ell = g.cols();
  std::vector<Eigen::MatrixXd> coeffs(ell, Eigen::MatrixXd(4, m - 1));
  for (Eigen::Index j = 0; j < ell; ++j) {
    for (Eigen::Index i = 0; i + 1 < m; ++i) {
      const double h = t[i + 1] - t[i];
      const double gi = g(i, j), gn = g(i + 1, j);
      const double mi = m2(i, j), mn = m2(i + 1, j);
      coeffs[j](0, i) = gi;
      coeffs[j](1, i) = (gn - gi) / h - h * (2.0 * mi + mn) / 6.0;
      coeffs[j](2, i) = 0.5 * mi;
      coeffs[j](3, i) = (mn - mi) / (6.0 * h);
    }
  }
  return coeffs;
}

/// Extend the knot span to [0,1] with linear pieces where needed.
void embed_unit_interval(Eigen::VectorXd& t, std::vector<Eigen::MatrixXd>& coeffs) {
  const Eigen::Index ell = static_cast<Eigen::Index>(coeffs.size());
  if (t[0] > 0.0) {
    Eigen::VectorXd t2(t.size() + 1);
    t2[0] = 0.0;
    t2.tail(t.size()) = t;
    for (Eigen::Index j = 0; j < ell; ++j) {
      Eigen::MatrixXd c2(4, coeffs[j].cols() + 1);
      const double slope = coeffs[j](1, 0);
      const double value = coeffs[j](0, 0);
      c2.col(0) << value - slope * t[0], slope, 0.0, 0.0;
      c2.rightCols(coeffs[j].cols()) = coeffs[j];
      coeffs[j] = std::move(c2);
    }
    t = std::move(t2);
  }
  const Eigen::Index m = t.size();
  if (t[m - 1] < 1.0) {
    Eigen::VectorXd t2(m + 1);
    t2.head(m) = t;
    t2[m] = 1.0;
    for (Eigen::Index j = 0; j < ell; ++j) {
      const Eigen::Index last = coeffs[j].cols() - 1;
      const double h = t[m - 1] - t[m - 2];
      const auto c = coeffs[j].col(last);
      const double value = c[0] + h * (c[1] + h * (c[2] + h * c[3]));
      const double slope = c[1] + h * (2.0 * c[2] + h * 3.0 * c[3]);
      Eigen::MatrixXd c2(4, coeffs[j].cols() + 1);
      c2.leftCols(coeffs[j].cols()) = coeffs[j];
      c2.col(last + 1) << value, slope, 0.0, 0.0;
      coeffs[j] = std::move(c2);
    }
    t = std::move(t2);
  }
}

SplineFunction line_through(const Eigen::VectorXd& t, const Eigen::MatrixXd& g) {
  const Eigen::Index ell = g.cols();
  const double h = t[1] - t[0];
  Eigen::VectorXd knots = t;
  std::vector<Eigen::MatrixXd> coeffs(ell, Eigen::MatrixXd::Zero(4, 1));
  for (Eigen::Index j = 0; j < ell; ++j) {
    coeffs[j](0, 0) = g(0, j);
    coeffs[j](1, 0) = (g(1, j) - g(0, j)) / h;
  }
  embed_unit_interval(knots, coeffs);
  return SplineFunction::from_coefficients(std::move(knots), std::move(coeffs));
}

/// Exact integral of p(s)^2 over [0,h] for a polynomial given by
/// coefficients c[0..deg] in the local variable s.
double integrate_poly_sq(const double* c, int deg, double h) {
  double sq[7] = {0, 0, 0, 0, 0, 0, 0};
  for (int i = 0; i <= deg; ++i)
    for (int j = 0; j <= deg; ++j) sq[i + j] += c[i] * c[j];
  double hp = h;
  double total = 0.0;
  for (int k = 0; k <= 2 * deg; ++k) {
    total += sq[k] * hp / (k + 1);
    hp *= h;
  }
  return total;
}

void format_double(char* buf, size_t cap, double v) { std::snprintf(buf, cap, "%.17g", v); }

}  // namespace

SplineFunction SplineFunction::from_coefficients(Eigen::VectorXd knots,
                                                 std::vector<Eigen::MatrixXd> coeffs) {
  const Eigen::Index m = knots.size();
  if (m < 2) throw std::invalid_argument("spline: need at least two knots");
  if (coeffs.empty()) throw std::invalid_argument("spline: no components");
  if (std::abs(knots[0]) > 1e-12 || std::abs(knots[m - 1] - 1.0) > 1e-12) {
    throw std::invalid_argument("spline: knots must span [0,1]");
  }
  knots[0] = 0.0;
  knots[m - 1] = 1.0;
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    if (!(knots[i + 1] > knots[i])) throw std::invalid_argument("spline: knots not increasing");
  }
  for (const auto& c : coeffs) {
    if (c.rows() != 4 || c.cols() != m - 1 || !c.allFinite()) {
      throw std::invalid_argument("spline: malformed coefficient matrix");
    }
  }
  SplineFunction f;
  f.knots_ = std::move(knots);
  f.coeffs_ = std::move(coeffs);
  return f;
}

SplineFunction SplineFunction::natural_interpolant(const Eigen::VectorXd& x,
                                                   const Eigen::MatrixXd& y) {
  const Eigen::Index m = x.size();
  if (y.rows() != m) throw std::invalid_argument("interpolant: size mismatch");
  if (m < 2) throw std::invalid_argument("interpolant: need at least two points");
  std::vector<Eigen::Index> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return x[a] < x[b]; });
  Eigen::VectorXd t(m);
  Eigen::MatrixXd g(m, y.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    t[i] = x[order[i]];
    if (!(t[i] >= 0.0 && t[i] <= 1.0)) throw std::domain_error("interpolant: abscissa outside [0,1]");
    g.row(i) = y.row(order[i]);
    if (i > 0 && !(t[i] - t[i - 1] >= kMinKnotGap)) {
      throw std::invalid_argument("interpolant: duplicate abscissae");
    }
  }
  if (m == 2) return line_through(t, g);

  const Eigen::Index p = m - 2;
  PentaSystem sys;
  sys.d0.resize(p);
  sys.d1.resize(std::max<Eigen::Index>(p - 1, 0));
  sys.d2 = Eigen::VectorXd::Zero(std::max<Eigen::Index>(p - 2, 0));
  Eigen::VectorXd h(m - 1);
  for (Eigen::Index i = 0; i + 1 < m; ++i) h[i] = t[i + 1] - t[i];
  for (Eigen::Index c = 0; c < p; ++c) {
    sys.d0[c] = (h[c] + h[c + 1]) / 3.0;
    if (c + 1 < p) sys.d1[c] = h[c + 1] / 6.0;
  }
  sys.factor();
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(m, y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    Eigen::VectorXd rhs(p);
    for (Eigen::Index c = 0; c < p; ++c) {
      rhs[c] = (g(c + 2, j) - g(c + 1, j)) / h[c + 1] - (g(c + 1, j) - g(c, j)) / h[c];
    }
    sys.solve(rhs);
    m2.block(1, j, p, 1) = rhs;
  }
  auto coeffs = build_coefficients(t, g, m2);
  embed_unit_interval(t, coeffs);
  return from_coefficients(std::move(t), std::move(coeffs));
}

int SplineFunction::interval_index(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("spline: argument outside [0,1]");
  const double* begin = knots_.data();
  const double* end = begin + knots_.size();
  int idx = static_cast<int>(std::upper_bound(begin, end, x) - begin) - 1;
  return std::min(std::max(idx, 0), static_cast<int>(knots_.size()) - 2);
}

Eigen::VectorXd SplineFunction::evaluate(double x) const {
  if (coeffs_.empty()) throw std::logic_error("spline: empty");
  const int i = interval_index(x);
  const double s = x - knots_[i];
  Eigen::VectorXd out(ell());
  for (int j = 0; j < ell(); ++j) {
    const auto c = coeffs_[j].col(i);
    out[j] = c[0] + s * (c[1] + s * (c[2] + s * c[3]));
  }
  return out;
}

Eigen::MatrixXd SplineFunction::evaluate_many(const Eigen::VectorXd& xs) const {
  Eigen::MatrixXd out(xs.size(), ell());
  for (Eigen::Index i = 0; i < xs.size(); ++i) out.row(i) = evaluate(xs[i]).transpose();
  return out;
}

Eigen::VectorXd SplineFunction::derivative(double x, int order) const {
  if (order < 0 || order > 2) throw std::invalid_argument("spline: derivative order must be 0..2");
  if (coeffs_.empty()) throw std::logic_error("spline: empty");
  const int i = interval_index(x);
  const double s = x - knots_[i];
  Eigen::VectorXd out(ell());
  for (int j = 0; j < ell(); ++j) {
    const auto c = coeffs_[j].col(i);
    switch (order) {
      case 0: out[j] = c[0] + s * (c[1] + s * (c[2] + s * c[3])); break;
      case 1: out[j] = c[1] + s * (2.0 * c[2] + s * 3.0 * c[3]); break;
      default: out[j] = 2.0 * c[2] + 6.0 * c[3] * s; break;
    }
  }
  return out;
}

RegressionFn SplineFunction::as_fn() const {
  auto copy = std::make_shared<const SplineFunction>(*this);
  RegressionFn f;
  f.ell = ell();
  f.eval = [copy](double x) { return copy->evaluate(x); };
  return f;
}

SplineFunction fit_smoothing_spline(const WeightedPoints& points, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("spline fit: lambda must be positive and finite");
  }
  AggregatedData data = aggregate(points);
  const Eigen::Index m = data.t.size();
  if (m == 2) return line_through(data.t, data.g);

  Eigen::VectorXd h(m - 1);
  for (Eigen::Index i = 0; i + 1 < m; ++i) h[i] = data.t[i + 1] - data.t[i];

  // Column c of the second-difference operator Q touches rows c, c+1, c+2:
  //   1/h_c,  -1/h_c - 1/h_{c+1},  1/h_{c+1}.
  const Eigen::Index p = m - 2;
  auto q_top = [&](Eigen::Index c) { return 1.0 / h[c]; };
  auto q_mid = [&](Eigen::Index c) { return -1.0 / h[c] - 1.0 / h[c + 1]; };
  auto q_bot = [&](Eigen::Index c) { return 1.0 / h[c + 1]; };

  PentaSystem sys;
  sys.d0.resize(p);
  sys.d1.resize(std::max<Eigen::Index>(p - 1, 0));
  sys.d2.resize(std::max<Eigen::Index>(p - 2, 0));
  const Eigen::VectorXd winv = data.w.cwiseInverse();
  for (Eigen::Index c = 0; c < p; ++c) {
    sys.d0[c] = (h[c] + h[c + 1]) / 3.0 +
                lambda * (q_top(c) * q_top(c) * winv[c] + q_mid(c) * q_mid(c) * winv[c + 1] +
                          q_bot(c) * q_bot(c) * winv[c + 2]);
    if (c + 1 < p) {
      sys.d1[c] = h[c + 1] / 6.0 + lambda * (q_mid(c) * q_top(c + 1) * winv[c + 1] +
                                             q_bot(c) * q_mid(c + 1) * winv[c + 2]);
    }
    if (c + 2 < p) sys.d2[c] = lambda * q_bot(c) * q_top(c + 2) * winv[c + 2];
  }
  sys.factor();

  const Eigen::Index ell = data.g.cols();
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(m, ell);
  Eigen::MatrixXd g(m, ell);
  for (Eigen::Index j = 0; j < ell; ++j) {
    Eigen::VectorXd rhs(p);
    for (Eigen::Index c = 0; c < p; ++c) {
      rhs[c] = (data.g(c + 2, j) - data.g(c + 1, j)) / h[c + 1] -
               (data.g(c + 1, j) - data.g(c, j)) / h[c];
    }
    sys.solve(rhs);
    m2.block(1, j, p, 1) = rhs;
    // fitted values g = y - lambda W^{-1} Q gamma
    for (Eigen::Index r = 0; r < m; ++r) {
      double qg = 0.0;
      if (r < p) qg += q_top(r) * rhs[r];
      if (r >= 1 && r - 1 < p) qg += q_mid(r - 1) * rhs[r - 1];
      if (r >= 2 && r - 2 < p) qg += q_bot(r - 2) * rhs[r - 2];
      g(r, j) = data.g(r, j) - lambda * winv[r] * qg;
    }
  }
  auto coeffs = build_coefficients(data.t, g, m2);
  Eigen::VectorXd t = data.t;
  embed_unit_interval(t, coeffs);
  return SplineFunction::from_coefficients(std::move(t), std::move(coeffs));
}

double curvature_norm_sq(const SplineFunction& f) {
  const Eigen::VectorXd& t = f.knots();
  double total = 0.0;
  for (int j = 0; j < f.ell(); ++j) {
    const Eigen::MatrixXd& c = f.coefficients(j);
    for (Eigen::Index i = 0; i < c.cols(); ++i) {
      const double h = t[i + 1] - t[i];
      const double c2 = c(2, i), c3 = c(3, i);
      total += h * (4.0 * c2 * c2 + h * (12.0 * c2 * c3 + h * 12.0 * c3 * c3));
    }
  }
  return total;
}

double sobolev_norm(const SplineFunction& f, int s) {
  if (s < 0 || s > 2) throw std::invalid_argument("sobolev_norm: s must be 0, 1 or 2");
  const Eigen::VectorXd& t = f.knots();
  double total = 0.0;
  for (int j = 0; j < f.ell(); ++j) {
    const Eigen::MatrixXd& c = f.coefficients(j);
    for (Eigen::Index i = 0; i < c.cols(); ++i) {
      const double h = t[i + 1] - t[i];
      const double c0[4] = {c(0, i), c(1, i), c(2, i), c(3, i)};
      total += integrate_poly_sq(c0, 3, h);
      if (s >= 1) {
        const double c1[3] = {c(1, i), 2.0 * c(2, i), 3.0 * c(3, i)};
        total += integrate_poly_sq(c1, 2, h);
      }
      if (s >= 2) {
        const double c2[2] = {2.0 * c(2, i), 6.0 * c(3, i)};
        total += integrate_poly_sq(c2, 1, h);
      }
    }
  }
  return std::sqrt(total);
}

double complexity(const SplineFunction& f, int s, double upsilon) {
  if (!(upsilon > 0.0) || !std::isfinite(upsilon)) {
    throw std::invalid_argument("complexity: upsilon must be positive");
  }
  return std::pow(sobolev_norm(f, s), 1.0 / upsilon);
}

void save_spline(const SplineFunction& f, std::ostream& out) {
  char buf[64];
  out << "latreg-spline 1\n" << f.ell() << ' ' << f.n_knots() << '\n';
  for (int i = 0; i < f.n_knots(); ++i) {
    format_double(buf, sizeof buf, f.knots()[i]);
    out << buf << '\n';
  }
  for (int j = 0; j < f.ell(); ++j) {
    out << "component " << j << '\n';
    const Eigen::MatrixXd& c = f.coefficients(j);
    for (Eigen::Index i = 0; i < c.cols(); ++i) {
      for (int r = 0; r < 4; ++r) {
        format_double(buf, sizeof buf, c(r, i));
        out << buf << (r == 3 ? '\n' : ' ');
      }
    }
  }
  if (!out) throw std::runtime_error("save_spline: write failed");
}

void save_spline(const SplineFunction& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_spline: cannot open " + path);
  save_spline(f, out);
}

SplineFunction load_spline(std::istream& in) {
  std::string magic, version;
  in >> magic >> version;
  if (!in || magic != "latreg-spline" || version != "1") {
    throw std::runtime_error("load_spline: bad header");
  }
  int ell = 0, m = 0;
  in >> ell >> m;
  if (!in || ell < 1 || m < 2) throw std::runtime_error("load_spline: bad dimensions");
  Eigen::VectorXd knots(m);
  for (int i = 0; i < m; ++i) in >> knots[i];
  std::vector<Eigen::MatrixXd> coeffs(ell, Eigen::MatrixXd(4, m - 1));
  for (int j = 0; j < ell; ++j) {
    std::string word;
    int idx = -1;
    in >> word >> idx;
    if (!in || word != "component" || idx != j) throw std::runtime_error("load_spline: bad layout");
    for (int i = 0; i < m - 1; ++i) {
      for (int r = 0; r < 4; ++r) in >> coeffs[j](r, i);
    }
  }
  if (!in) throw std::runtime_error("load_spline: truncated file");
  return SplineFunction::from_coefficients(std::move(knots), std::move(coeffs));
}

SplineFunction load_spline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_spline: cannot open " + path);
  return load_spline(in);
}

}  // namespace latreg
