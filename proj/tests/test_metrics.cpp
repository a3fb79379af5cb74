#include <doctest.h>

#include <cmath>

#include "latreg/metrics.hpp"
#include "latreg/rng.hpp"
#include "latreg/spline.hpp"

using namespace latreg;

namespace {

RegressionFn ramp2() {
  return RegressionFn{2, [](double x) { return Eigen::Vector2d(x, 0.0); }};
}

RegressionFn shifted(const RegressionFn& f, const Eigen::Vector2d& delta) {
  return RegressionFn{2, [f, delta](double x) { return Eigen::Vector2d(f(x) + delta); }};
}

RegressionFn reflected(const RegressionFn& f) {
  return RegressionFn{f.ell, [f](double x) { return f(1.0 - x); }};
}

RegressionFn random_curve(std::uint64_t key) {
  Rng rng(key);
  Eigen::VectorXd x(5);
  x << 0.0, 0.3, 0.5, 0.8, 1.0;
  Eigen::MatrixXd y(5, 2);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) y(i, j) = 2.0 * rng.uniform() - 1.0;
  return SplineFunction::natural_interpolant(x, y).as_fn();
}

}  // namespace

TEST_CASE("a curve is at zero distance from itself") {
  RegressionFn f = circle_regression();
  IsometryError err = l2_error_up_to_isometry(f, f);
  CHECK(err.total < 1e-9);
  CHECK(err.per_component.size() == 2);
  CHECK(err.per_component.maxCoeff() < 1e-9);
  CHECK_FALSE(err.reflected);
}

TEST_CASE("reflecting the index costs nothing and is reported") {
  RegressionFn f = ramp2();
  IsometryError err = l2_error_up_to_isometry(f, reflected(f));
  CHECK(err.total < 1e-9);
  CHECK(err.reflected);
}

TEST_CASE("a constant shift is measured exactly") {
  RegressionFn f = circle_regression();
  IsometryError err = l2_error_up_to_isometry(shifted(f, {0.1, 0.0}), f);
  CHECK(err.total == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(err.per_component(0) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(err.per_component(1) < 1e-9);
  CHECK_FALSE(err.reflected);
}

TEST_CASE("component errors decompose the total under one shared isometry") {
  for (std::uint64_t key = 0; key < 8; ++key) {
    IsometryError err = l2_error_up_to_isometry(random_curve(key), random_curve(key + 100));
    CHECK(err.total == doctest::Approx(std::sqrt(err.per_component.squaredNorm())).epsilon(1e-12));
    CHECK((err.per_component.array() >= 0.0).all());
  }
}

TEST_CASE("error is invariant when the estimate itself is reflected") {
  RegressionFn f = random_curve(7);
  RegressionFn ref = random_curve(8);
  IsometryError plain = l2_error_up_to_isometry(f, ref);
  IsometryError flipped = l2_error_up_to_isometry(reflected(f), ref);
  CHECK(plain.total == doctest::Approx(flipped.total).epsilon(1e-12));
  CHECK(plain.reflected != flipped.reflected);
}

TEST_CASE("hausdorff distance vanishes on equal images") {
  RegressionFn f = circle_regression();
  CHECK(hausdorff_image_distance(f, f) == 0.0);
  // index reflection maps the uniform grid onto itself up to roundoff in
  // computing 1 - x, so the image sets coincide to machine precision
  CHECK(hausdorff_image_distance(f, reflected(f)) < 1e-12);
}

TEST_CASE("hausdorff distance of parallel segments is the offset") {
  RegressionFn f = ramp2();
  CHECK(hausdorff_image_distance(f, shifted(f, {0.0, 0.05})) ==
        doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("hausdorff distance is a metric on sampled images") {
  for (std::uint64_t key = 0; key < 5; ++key) {
    RegressionFn f1 = random_curve(3 * key);
    RegressionFn f2 = random_curve(3 * key + 1);
    RegressionFn f3 = random_curve(3 * key + 2);
    const double d12 = hausdorff_image_distance(f1, f2);
    const double d21 = hausdorff_image_distance(f2, f1);
    const double d13 = hausdorff_image_distance(f1, f3);
    const double d23 = hausdorff_image_distance(f2, f3);
    CHECK(d12 == doctest::Approx(d21).epsilon(1e-12));
    CHECK(d12 >= 0.0);
    CHECK(d13 <= d12 + d23 + 1e-12);
  }
}

TEST_CASE("scale error is the signed difference") {
  CHECK(parameter_error(1.0, 1.0) == 0.0);
  CHECK(parameter_error(1.2, 1.0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(parameter_error(0.8, 1.0) == doctest::Approx(-0.2).epsilon(1e-12));
}
