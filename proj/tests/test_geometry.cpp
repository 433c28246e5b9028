#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "statpath/statpath.hpp"

using namespace statpath;
using Catch::Approx;
using test_support::diag2_model;
using test_support::scalar_model;

namespace {

Eigen::VectorXd vec1(double x) {
  Eigen::VectorXd v(1);
  v << x;
  return v;
}

// Unit sphere of radius a, coordinates (theta, phi), realized through the
// noise matrix diag(1/a, 1/(a sin theta)) so that the metric is
// diag(a^2, a^2 sin^2 theta).
ModelSpec sphere_model(double a) {
  FieldPtr polar = std::make_shared<AnalyticField>(
      [a](const std::vector<double>&) { return 1.0 / a; },
      [](const std::vector<double>&, int) { return 0.0; },
      [](const std::vector<double>&, int, int) { return 0.0; });
  FieldPtr azimuth = std::make_shared<AnalyticField>(
      [a](const std::vector<double>& p) { return 1.0 / (a * std::sin(p[0])); },
      [a](const std::vector<double>& p, int d) {
        if (d != 0) return 0.0;
        double s = std::sin(p[0]);
        return -std::cos(p[0]) / (a * s * s);
      },
      [a](const std::vector<double>& p, int d1, int d2) {
        if (d1 != 0 || d2 != 0) return 0.0;
        double s = std::sin(p[0]), c = std::cos(p[0]);
        return (1.0 / a) * (1.0 / s + 2.0 * c * c / (s * s * s));
      });
  return diag2_model({0.4, 0.0}, {M_PI - 0.4, 2.0 * M_PI}, {11, 11}, 0.01,
                     polar, azimuth);
}

// Flat plane in polar coordinates (r, theta): metric diag(1, r^2) from noise
// diag(1, 1/r).
ModelSpec polar_model() {
  FieldPtr radial = make_constant_field(1.0);
  FieldPtr angular = std::make_shared<AnalyticField>(
      [](const std::vector<double>& p) { return 1.0 / p[0]; },
      [](const std::vector<double>& p, int d) {
        return d == 0 ? -1.0 / (p[0] * p[0]) : 0.0;
      },
      [](const std::vector<double>& p, int d1, int d2) {
        return (d1 == 0 && d2 == 0) ? 2.0 / (p[0] * p[0] * p[0]) : 0.0;
      });
  return diag2_model({0.5, 0.0}, {3.0, 2.0 * M_PI}, {11, 11}, 0.01, radial,
                     angular);
}

}  // namespace

TEST_CASE("linear model with unit noise has flat geometry") {
  GeometryEngine geom(scalar_model(-6, 6, 201, 0.01, {{-1.0, 1}}, {{1.0, 0}}));
  CHECK(geom.constant_metric());
  GeometryBundle b = geom.bundle({1.0}, GeometryLevel::full, 0);
  CHECK(b.g_upper(0, 0) == 1.0);
  CHECK(b.g_lower(0, 0) == 1.0);
  CHECK(b.det_g == 1.0);
  CHECK(b.log_sqrt_det() == 0.0);
  CHECK(b.g_drift[0] == Approx(-1.0));
  CHECK(b.h[0] == Approx(-1.0));
  // Covariant divergence of h = -a M is just -a everywhere.
  CHECK(b.h_div == Approx(-1.0));
  CHECK(geom.covariant_divergence({2.5}) == Approx(-1.0));
  REQUIRE(b.gamma.size() == 1);
  CHECK(b.gamma[0](0, 0) == 0.0);
  CHECK(b.R == 0.0);
  CHECK(geom.curvature_scalar({0.3}) == 0.0);
}

TEST_CASE("multiplicative noise cancels the mean drift exactly") {
  // With zero bare drift and noise coefficient M the induced drift M/2 is
  // exactly eaten by the metric correction.
  GeometryEngine geom(scalar_model(0.5, 4.0, 15, 0.01, {}, {{1.0, 1}}));
  CHECK_FALSE(geom.constant_metric());
  CHECK(geom.induced_drift({2.0})[0] == Approx(1.0));
  CHECK(geom.mean_drift_h({2.0})[0] == Approx(0.0).margin(1e-12));
  CHECK(geom.mean_drift_h({1.3})[0] == Approx(0.0).margin(1e-12));
  CHECK(geom.covariant_divergence({2.0}) == Approx(0.0).margin(1e-12));
  CHECK(geom.diffusion_matrix({2.0})(0, 0) == Approx(4.0));
}

TEST_CASE("one-dimensional mean drift reduces to the bare drift") {
  // In one dimension the induced and divergence corrections cancel for any
  // noise coefficient, so h == f identically; its covariant divergence is
  // f' - f g'/g in terms of the noise coefficient g.
  GeometryEngine geom(
      scalar_model(-3, 3, 41, 0.01, {{-1.0, 1}}, {{0.5, 0}, {0.1, 2}}));
  const double m = 1.5;
  CHECK(geom.mean_drift_h({m})[0] == Approx(-m).margin(1e-12));
  const double ghat = 0.5 + 0.1 * m * m;
  const double expected_div = -1.0 + m * (0.2 * m) / ghat;
  CHECK(geom.covariant_divergence({m}) == Approx(expected_div).margin(1e-12));
}

TEST_CASE("one-dimensional curvature vanishes identically") {
  GeometryEngine geom(scalar_model(0.5, 4.0, 15, 0.01, {}, {{1.0, 1}}));
  for (double m : {0.6, 1.0, 1.7, 3.2}) {
    CHECK(geom.curvature_scalar({m}) == 0.0);
  }
  // The affine connection does not vanish: Gamma = -1/M for this metric.
  auto gamma = geom.affine_connection({1.0});
  REQUIRE(gamma.size() == 1);
  CHECK(gamma[0](0, 0) == Approx(-1.0).margin(1e-12));
}

TEST_CASE("reciprocal noise coefficient gives the mirrored connection") {
  FieldPtr recip = std::make_shared<AnalyticField>(
      [](const std::vector<double>& p) { return 1.0 / p[0]; },
      [](const std::vector<double>& p, int) { return -1.0 / (p[0] * p[0]); },
      [](const std::vector<double>& p, int, int) {
        return 2.0 / (p[0] * p[0] * p[0]);
      });
  ModelSpec m;
  m.variables = {Variable{"x", 1, 0.5, 4.0, 15}};
  m.dt = 0.01;
  m.drift = {nullptr};
  m.noise = NoiseMatrixSpec(1, 1);
  m.noise.set_entry(0, 0, recip);
  GeometryEngine geom(std::move(m));
  auto gamma = geom.affine_connection({1.0});
  CHECK(gamma[0](0, 0) == Approx(1.0).margin(1e-12));
  CHECK(geom.curvature_scalar({1.0}) == 0.0);
}

TEST_CASE("constant metric short-circuits connection and curvature") {
  GeometryEngine geom(diag2_model({-1, -1}, {1, 1}, {5, 5}, 0.1,
                                  make_constant_field(1.0),
                                  make_constant_field(0.5)));
  CHECK(geom.constant_metric());
  GeometryBundle b = geom.bundle({0.3, -0.4}, GeometryLevel::full, 0);
  CHECK(b.g_upper(0, 0) == Approx(1.0));
  CHECK(b.g_upper(1, 1) == Approx(0.25));
  CHECK(b.g_upper(0, 1) == 0.0);
  CHECK(b.g_lower(1, 1) == Approx(4.0));
  REQUIRE(b.gamma.size() == 2);
  for (const auto& g : b.gamma) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  CHECK(b.R == 0.0);
}

TEST_CASE("polar coordinates produce the textbook connection and zero "
          "curvature") {
  GeometryEngine geom(polar_model());
  const double r = 2.0;
  auto gamma = geom.affine_connection({r, 1.0});
  REQUIRE(gamma.size() == 2);
  CHECK(gamma[0](1, 1) == Approx(-r).margin(1e-10));
  CHECK(gamma[0](0, 0) == Approx(0.0).margin(1e-12));
  CHECK(gamma[1](0, 1) == Approx(1.0 / r).margin(1e-10));
  CHECK(gamma[1](1, 0) == Approx(1.0 / r).margin(1e-10));
  for (double rr : {0.7, 1.0, 1.9, 2.8}) {
    CHECK(geom.curvature_scalar({rr, 0.3}) == Approx(0.0).margin(1e-8));
  }
}

TEST_CASE("sphere curvature matches the closed form") {
  const double a = 1.7;
  GeometryEngine geom(sphere_model(a));
  const double expected = 2.0 / (a * a);
  for (double theta : {0.45, 0.8, M_PI / 2, 2.1, M_PI - 0.45}) {
    CHECK(geom.curvature_scalar({theta, 1.3}) ==
          Approx(expected).margin(1e-6));
  }
  // The curvature term enters the midpoint Lagrangian scaled by its
  // coefficient, so two conventions differ by exactly R/12.
  GeometryBundle b = geom.bundle({1.1, 0.7}, GeometryLevel::full, 0);
  Eigen::VectorXd mdot(2);
  mdot << 0.2, -0.1;
  double l6 = GeometryEngine::feynman_lagrangian(b, mdot, 1.0 / 6.0);
  double l12 = GeometryEngine::feynman_lagrangian(b, mdot, 1.0 / 12.0);
  CHECK(l6 - l12 == Approx(b.R / 12.0).margin(1e-12));
}

TEST_CASE("metric inverse, connection symmetry, and derivative cross-checks") {
  // Two-dimensional diagonal noise with polynomial state dependence.
  PolynomialField n0 = PolynomialField::sum(PolynomialField::constant(1.0),
                                            PolynomialField::monomial(0.3, 0, 2));
  PolynomialField n1 = PolynomialField::sum(
      PolynomialField::sum(PolynomialField::constant(0.7),
                           PolynomialField::monomial(0.2, 1, 2)),
      PolynomialField({PolyTerm{0.1, {{0, 1}, {1, 1}}, {}, "", 0, 0}}));
  ModelSpec spec = diag2_model({-1.5, -1.5}, {1.5, 1.5}, {7, 7}, 0.01,
                               make_field(n0), make_field(n1));
  GeometryEngine geom(std::move(spec));

  RandomStream rng(2041, 0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> p = {rng.uniform() * 2.0 - 1.0,
                             rng.uniform() * 2.0 - 1.0};
    GeometryBundle b = geom.bundle(p, GeometryLevel::full, 0);
    Eigen::MatrixXd eye = b.g_upper * b.g_lower;
    CHECK((eye - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-10);
    for (const auto& g : b.gamma) {
      CHECK((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
    // Finite-difference check of the stored metric derivatives.
    const double step = 1e-5;
    for (int k = 0; k < 2; ++k) {
      std::vector<double> hi = p, lo = p;
      hi[k] += step;
      lo[k] -= step;
      Eigen::MatrixXd fd = (geom.diffusion_matrix(hi) -
                            geom.diffusion_matrix(lo)) /
                           (2.0 * step);
      CHECK((fd - b.d_g_upper[k]).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
}

TEST_CASE("curvature is invariant under variable relabeling") {
  // Model A: noise diag(1 + 0.3 x^2, 0.7 + 0.2 y^2 + 0.1 x y).
  PolynomialField a0 = PolynomialField::sum(PolynomialField::constant(1.0),
                                            PolynomialField::monomial(0.3, 0, 2));
  PolynomialField a1 = PolynomialField::sum(
      PolynomialField::sum(PolynomialField::constant(0.7),
                           PolynomialField::monomial(0.2, 1, 2)),
      PolynomialField({PolyTerm{0.1, {{0, 1}, {1, 1}}, {}, "", 0, 0}}));
  // Model B swaps the two variables, so channel roles trade places and every
  // coordinate index flips.
  PolynomialField b0 = PolynomialField::sum(
      PolynomialField::sum(PolynomialField::constant(0.7),
                           PolynomialField::monomial(0.2, 0, 2)),
      PolynomialField({PolyTerm{0.1, {{0, 1}, {1, 1}}, {}, "", 0, 0}}));
  PolynomialField b1 = PolynomialField::sum(PolynomialField::constant(1.0),
                                            PolynomialField::monomial(0.3, 1, 2));
  GeometryEngine ga(diag2_model({-1.5, -1.5}, {1.5, 1.5}, {7, 7}, 0.01,
                                make_field(a0), make_field(a1)));
  GeometryEngine gb(diag2_model({-1.5, -1.5}, {1.5, 1.5}, {7, 7}, 0.01,
                                make_field(b0), make_field(b1)));
  for (auto [x, y] : std::vector<std::pair<double, double>>{
           {0.4, -0.9}, {-1.1, 0.2}, {0.0, 0.8}, {1.2, 1.2}}) {
    CHECK(ga.curvature_scalar({x, y}) ==
          Approx(gb.curvature_scalar({y, x})).margin(1e-8));
  }
}

TEST_CASE("midpoint Lagrangian arithmetic on hand-checked cases") {
  // Pure diffusion, unit noise, unit velocity: only the kinetic term.
  GeometryEngine free_particle(scalar_model(-4, 4, 9, 0.1, {}, {{1.0, 0}}));
  CHECK(free_particle.feynman_lagrangian({0.0}, vec1(1.0)) == Approx(0.5));

  // Constant drift 1, noise 1/2, velocity 2: (2-1)^2 / (2 * 0.25) = 2.
  GeometryEngine drifted(scalar_model(-4, 4, 9, 0.1, {{1.0, 0}}, {{0.5, 0}}));
  CHECK(drifted.feynman_lagrangian({0.0}, vec1(2.0)) == Approx(2.0));

  // Moving exactly with the mean drift leaves the divergence and curvature
  // terms. Checked on the polar model where both are nontrivial.
  GeometryEngine polar(polar_model());
  GeometryBundle b = polar.bundle({1.7, 0.9}, GeometryLevel::full, 0);
  CHECK(GeometryEngine::feynman_lagrangian(b, b.h) ==
        Approx(0.5 * b.h_div + b.R / 6.0).margin(1e-10));
}

TEST_CASE("prepoint Lagrangian subtracts the potential directly") {
  ModelSpec spec = scalar_model(-4, 4, 9, 0.1, {}, {{1.0, 0}});
  spec.potential = make_constant_field(2.0);
  GeometryEngine geom(std::move(spec));
  CHECK(geom.prepoint_lagrangian({0.3}, vec1(0.0)) == Approx(-2.0));
  CHECK(geom.feynman_lagrangian({0.3}, vec1(0.0)) == Approx(-2.0));
}

TEST_CASE("constant diffusion separates the discretizations by the "
          "divergence term") {
  GeometryEngine geom(scalar_model(-6, 6, 201, 0.01, {{-1.0, 1}}, {{1.0, 0}}));
  GeometryBundle b = geom.bundle({0.7}, GeometryLevel::full, 0);
  // With a constant metric the mean and induced drifts coincide with the
  // bare drift.
  CHECK(b.h[0] == b.g_drift[0]);
  CHECK(b.h[0] == Approx(-0.7));
  double fey = GeometryEngine::feynman_lagrangian(b, vec1(0.3));
  double pre = GeometryEngine::prepoint_lagrangian(b, vec1(0.3));
  CHECK(fey - pre == Approx(0.5 * b.h_div).margin(1e-14));
  CHECK(fey == Approx(0.0).margin(1e-14));
  CHECK(pre == Approx(0.5).margin(1e-14));
}

TEST_CASE("degenerate diffusion raises the dedicated error") {
  GeometryEngine geom(scalar_model(-4, 4, 15, 0.01, {}, {{1.0, 1}}));
  CHECK_THROWS_AS(geom.bundle({0.0}, GeometryLevel::metric, 0),
                  degenerate_metric_error);
  CHECK_THROWS_WITH(
      geom.bundle({0.0}, GeometryLevel::metric, 0),
      Catch::Matchers::ContainsSubstring("metric factorization failed"));
  // The dedicated error is a numerical error for coarse-grained handlers.
  try {
    geom.bundle({0.0}, GeometryLevel::metric, 0);
    FAIL("expected a throw");
  } catch (const numerical_error&) {
    SUCCEED();
  }
}

TEST_CASE("constraints join the potential seen by the Lagrangians") {
  ModelSpec spec = test_support::load_config_model("two_cell.cfg");
  ConstraintSpec::Entry e;
  e.epoch = 3;
  e.var = 0;
  e.cell = 1;
  e.value = 0.25;
  spec.constraints.add(e);
  GeometryEngine geom(std::move(spec));
  Eigen::VectorXd mdot = Eigen::VectorXd::Zero(2);
  std::vector<double> p = {0.5, 2.0};
  double without = geom.prepoint_lagrangian(p, mdot, 0);
  double with = geom.prepoint_lagrangian(p, mdot, 3);
  // The active epoch subtracts multiplier * state of the targeted cell.
  CHECK(with - without == Approx(-0.25 * 2.0).margin(1e-14));
}
