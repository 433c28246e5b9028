#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "statpath/statpath.hpp"

using namespace statpath;
using Catch::Approx;
using test_support::scalar_model;

namespace {

double mass_of(const Distribution& d) {
  double s = 0.0;
  for (double w : d.weights()) s += w;
  return s;
}

// L1 distance between a distribution and the exact Gaussian cell masses on
// the same mesh (one-dimensional).
double gauss_l1(const Distribution& d, double mu, double sigma) {
  const MeshAxis& ax = d.mesh().axis(0);
  double l1 = 0.0;
  for (int i = 0; i < ax.n; ++i) {
    double a = ax.lo + i * ax.spacing();
    double mass = test_support::gauss_mass(a, a + ax.spacing(), mu, sigma);
    if (i == 0) mass += test_support::normal_cdf(a, mu, sigma);
    if (i == ax.n - 1)
      mass += 1.0 - test_support::normal_cdf(a + ax.spacing(), mu, sigma);
    l1 += std::abs(d[i] - mass);
  }
  return l1;
}

}  // namespace

TEST_CASE("pure diffusion generator has the central stencil") {
  ModelSpec spec = scalar_model(-1, 1, 5, 0.01, {}, {{1.0, 0}});
  FDOperator op(spec);
  const auto& A = op.matrix();
  const double inv = 1.0 / (0.4 * 0.4);
  // Interior column: classic [1, -2, 1] / (2 dM^2).
  CHECK(A.coeff(2, 2) == Approx(-inv).margin(1e-12));
  CHECK(A.coeff(1, 2) == Approx(0.5 * inv).margin(1e-12));
  CHECK(A.coeff(3, 2) == Approx(0.5 * inv).margin(1e-12));
  // Reflecting boundary cell has a single face.
  CHECK(A.coeff(0, 0) == Approx(-0.5 * inv).margin(1e-12));
  CHECK(A.coeff(1, 0) == Approx(0.5 * inv).margin(1e-12));
  CHECK(A.coeff(2, 0) == 0.0);
}

TEST_CASE("generator columns conserve mass exactly") {
  ModelSpec spec = test_support::load_config_model("ou.cfg");
  FDOperator op(spec);
  const auto& A = op.matrix();
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(A.rows());
  Eigen::VectorXd colsum = A.transpose() * ones;
  CHECK(colsum.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(op.max_stable_dt() > 0.0);
  CHECK(op.max_stable_dt() < 1.0);
}

TEST_CASE("propagation conserves mass and positivity over long horizons") {
  ModelSpec spec = test_support::load_config_model("ou.cfg");
  FDOperator op(spec);
  Distribution p0 = Distribution::delta(spec.mesh(), {1.0});
  Distribution p1 = propagate_fpe(op, p0, 1.0);
  CHECK(std::abs(mass_of(p1) - 1.0) < 1e-10);
  double min_w = 0.0;
  for (double w : p1.weights()) min_w = std::min(min_w, w);
  CHECK(min_w >= -1e-12);
}

TEST_CASE("zero time returns the input and negative time is rejected") {
  ModelSpec spec = scalar_model(-1, 1, 5, 0.01, {}, {{1.0, 0}});
  FDOperator op(spec);
  Distribution p0 = Distribution::delta(spec.mesh(), {0.3});
  Distribution back = propagate_fpe(op, p0, 0.0);
  CHECK(back.weights() == p0.weights());
  CHECK_THROWS_AS(propagate_fpe(op, p0, -0.5), config_error);
}

TEST_CASE("free diffusion spreads with the exact variance") {
  ModelSpec spec = scalar_model(-6, 6, 241, 0.01, {}, {{1.0, 0}});
  FDOperator op(spec);
  // Cell 120 of 241 on [-6, 6] is centered exactly at zero.
  Distribution p0 = Distribution::delta(spec.mesh(), {0.0});
  CHECK(p0[120] == Approx(1.0));
  Distribution p1 = propagate_fpe(op, p0, 0.5);
  CHECK(p1.mean()[0] == Approx(0.0).margin(1e-10));
  CHECK(p1.variance(0) == Approx(0.5).epsilon(0.01));
  CHECK(gauss_l1(p1, 0.0, std::sqrt(0.5)) < 0.01);
}

TEST_CASE("relaxation propagator reproduces the transient moments") {
  ModelSpec spec = test_support::load_config_model("ou.cfg");
  FDOperator op(spec);
  Distribution p0 = Distribution::delta(spec.mesh(), {1.0});
  Distribution p1 = propagate_fpe(op, p0, 1.0);
  const double mean = std::exp(-1.0);
  const double var = 0.5 * (1.0 - std::exp(-2.0));
  CHECK(p1.mean()[0] == Approx(mean).epsilon(0.01));
  CHECK(p1.variance(0) == Approx(var).epsilon(0.01));
}

TEST_CASE("the discretized stationary law is a fixed point") {
  // The exponential-fitted fluxes balance exactly on the point-sampled
  // Gaussian with variance ghat^2 / (2 a), so one step must not move it.
  ModelSpec spec = test_support::load_config_model("ou.cfg");
  FDOperator op(spec);
  const StateMesh& mesh = spec.mesh();
  std::vector<double> w(mesh.total_cells());
  for (std::size_t i = 0; i < w.size(); ++i) {
    double c = mesh.cell_center(i)[0];
    w[i] = std::exp(-c * c);  // variance 1/2
  }
  Distribution p0(mesh, std::move(w));
  p0.normalize();
  Distribution p1 = propagate_fpe(op, p0, spec.dt);
  double linf = p1.linf_distance(p0);
  CHECK(linf < 1e-6);
  // Many steps do not drift off the fixed point either.
  Distribution p100 = propagate_fpe(op, p0, 100.0 * spec.dt);
  CHECK(p100.linf_distance(p0) < 1e-6);
}

TEST_CASE("refining the mesh shrinks the error at second order") {
  auto solve = [](int cells) {
    ModelSpec spec = scalar_model(-6, 6, cells, 0.01, {{-1.0, 1}}, {{1.0, 0}});
    FDOperator op(spec);
    Distribution p0 = Distribution::delta(spec.mesh(), {1.0});
    Distribution p1 = propagate_fpe(op, p0, 1.0);
    double sigma = std::sqrt(0.5 * (1.0 - std::exp(-2.0)));
    return gauss_l1(p1, std::exp(-1.0), sigma);
  };
  double coarse = solve(75);
  double fine = solve(150);
  CHECK(coarse / fine >= 3.0);
  CHECK(coarse / fine <= 6.0);
}

TEST_CASE("a constant sink drains mass at the stated rate") {
  ModelSpec spec = scalar_model(-1, 1, 21, 0.01, {}, {{1.0, 0}});
  spec.potential = make_constant_field(-0.2);
  FDOperator op(spec);
  Distribution p0 = Distribution::uniform(spec.mesh());
  Distribution p1 = propagate_fpe(op, p0, 0.01);
  CHECK(std::abs(mass_of(p1) - std::exp(-0.002)) < 1e-5);
}

TEST_CASE("absorbing edges lose mass monotonically") {
  ModelSpec spec = scalar_model(-0.5, 0.5, 21, 0.01, {}, {{1.0, 0}});
  FpeOptions opt;
  opt.boundary = BoundaryMode::absorbing;
  FDOperator op(spec, opt);
  Distribution p = Distribution::delta(spec.mesh(), {0.0});
  double prev = mass_of(p);
  for (int k = 0; k < 5; ++k) {
    p = propagate_fpe(op, p, 0.1);
    double m = mass_of(p);
    CHECK(m < prev);
    prev = m;
  }
  CHECK(prev < 0.5);
}

TEST_CASE("the implicit method agrees with the explicit one") {
  ModelSpec spec = test_support::load_config_model("ou.cfg");
  FDOperator expl(spec);
  FpeOptions copt;
  copt.method = FpeMethod::crank_nicolson;
  FDOperator impl(spec, copt);
  Distribution p0 = Distribution::delta(spec.mesh(), {1.0});
  Distribution a = propagate_fpe(expl, p0, 0.5);
  Distribution b = propagate_fpe(impl, p0, 0.5, 0.005);
  CHECK(a.l1_distance(b) < 5e-4);
  CHECK(std::abs(mass_of(b) - 1.0) < 1e-8);
}

TEST_CASE("two coupled dimensions relax independently when uncoupled") {
  ModelSpec spec = test_support::load_config_model("two_cell.cfg");
  FDOperator op(spec);
  Distribution p0 = Distribution::delta(spec.mesh(), {0.3, -0.4});
  Distribution p1 = propagate_fpe(op, p0, 0.1);
  const double decay = std::exp(-0.1);
  CHECK(p1.mean()[0] == Approx(0.3 * decay).margin(0.005));
  CHECK(p1.mean()[1] == Approx(-0.4 * decay).margin(0.005));
  CHECK(p1.covariance(0, 1) == Approx(0.0).margin(1e-6));
  CHECK(std::abs(mass_of(p1) - 1.0) < 1e-10);
}

TEST_CASE("more than three dimensions are refused with a redirect") {
  ModelSpec spec = test_support::load_config_model("coupled_cells.cfg");
  REQUIRE(spec.dim() == 4);
  CHECK_THROWS_MATCHES(
      build_fd_operator(spec), config_error,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
          "at most 3 dimensions; use the transition-kernel propagator")));
}

TEST_CASE("vanishing diffusion on a face degenerates the metric") {
  // Noise coefficient M crosses zero at a face center, so the bundle there
  // cannot be factorized.
  ModelSpec spec = scalar_model(-1, 1, 4, 0.01, {}, {{1.0, 1}});
  CHECK_THROWS_MATCHES(
      build_fd_operator(spec), degenerate_metric_error,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
          "metric factorization failed at (0)")));
}
