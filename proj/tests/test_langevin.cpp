#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "statpath/statpath.hpp"

using namespace statpath;
using Catch::Approx;
using test_support::scalar_model;

TEST_CASE("deterministic step applies two midpoint refinements") {
  // Linear relaxation with the noise channel switched off. Predictor lands
  // at 0.99; the two midpoint refinements move it to 0.99005 and then
  // 0.99004975.
  ModelSpec spec = scalar_model(-2, 2, 9, 0.01, {{-1.0, 1}}, {{0.0, 0}});
  LangevinOptions opt;
  opt.store_trajectories = true;
  EnsembleResult res = simulate_ensemble(spec, {1.0}, 1, 1, 42, opt);
  REQUIRE(res.trajectories().size() == 1);
  const auto& states = res.trajectories()[0].states;
  REQUIRE(states.size() == 2);
  CHECK(states[1][0] == Approx(0.99004975).margin(1e-12));
}

TEST_CASE("zero drift and zero noise leave the state unchanged") {
  ModelSpec spec = scalar_model(-2, 2, 9, 0.01, {}, {{0.0, 0}});
  LangevinOptions opt;
  opt.store_trajectories = true;
  EnsembleResult res = simulate_ensemble(spec, {0.625}, 3, 20, 7, opt);
  for (const auto& traj : res.trajectories()) {
    REQUIRE(traj.states.size() == 21);
    for (const auto& s : traj.states) CHECK(s[0] == 0.625);
  }
}

TEST_CASE("noiseless relaxation tracks the exact exponential") {
  ModelSpec spec = scalar_model(-2, 2, 9, 0.01, {{-1.0, 1}}, {{0.0, 0}});
  LangevinOptions opt;
  opt.store_trajectories = true;
  EnsembleResult res = simulate_ensemble(spec, {1.0}, 1, 100, 42, opt);
  double final_state = res.trajectories()[0].states[100][0];
  CHECK(std::abs(final_state - std::exp(-1.0)) <= 1e-5);
}

TEST_CASE("one diffusion step reproduces the increment moments") {
  ModelSpec spec = scalar_model(-4, 4, 81, 0.01, {}, {{1.0, 0}});
  const long n = 100000;
  EnsembleResult res = simulate_ensemble(spec, {0.0}, n, 1, 9001);
  // Mean within 3 standard errors of zero, variance within 3 standard
  // errors of dt.
  CHECK(std::abs(res.mean_at(1)[0]) < 3.2 * 0.1 / std::sqrt(double(n)));
  CHECK(std::abs(res.variance_at(1, 0) - 0.01) <
        3.2 * 0.01 * std::sqrt(2.0 / double(n - 1)));
}

TEST_CASE("relaxation ensemble matches the transient moments") {
  // dM = -M dt + dW from M = 1: mean e^{-t}, variance (1 - e^{-2t}) / 2.
  ModelSpec spec = scalar_model(-6, 6, 201, 0.01, {{-1.0, 1}}, {{1.0, 0}});
  const long n = 100000;
  EnsembleResult res = simulate_ensemble(spec, {1.0}, n, 200, 311);
  const double t = 2.0;
  const double mean = std::exp(-t);
  const double var = 0.5 * (1.0 - std::exp(-2.0 * t));
  CHECK(std::abs(res.mean_at(200)[0] - mean) < 0.0075);
  CHECK(std::abs(res.variance_at(200, 0) - var) < 0.0075);
  CHECK(res.count_at(200) == n);
  CHECK(res.epoch_of_time(2.0) == 200);
  CHECK_THROWS_AS(res.epoch_of_time(2.0055), config_error);
}

TEST_CASE("pure diffusion histogram matches the Gaussian kernel") {
  ModelSpec spec = scalar_model(-4, 4, 81, 0.01, {}, {{1.0, 0}});
  const long n = 100000;
  EnsembleResult res = simulate_ensemble(spec, {0.0}, n, 50, 5150);
  REQUIRE(res.has_joint_histograms());
  Distribution hist = res.histogram_at(0.5);
  double l1 = test_support::gauss_hist_l1(hist.weights(), -4.0, 4.0, 0.0,
                                          std::sqrt(0.5));
  CHECK(l1 <= 0.03);
  // The per-dimension marginal of a one-dimensional model is the same data.
  auto marg = res.marginal_histogram_at(0.5, 0);
  double diff = 0.0;
  for (std::size_t i = 0; i < marg.size(); ++i)
    diff = std::max(diff, std::abs(marg[i] - hist.weights()[i]));
  CHECK(diff < 1e-12);
}

TEST_CASE("multiplicative noise follows the Stratonovich growth law") {
  // dM = c M dW read in the Stratonovich sense has E[M_t] = e^{c^2 t / 2};
  // the Ito reading would keep E[M_t] = M_0. With c = 0.5, t = 0.2 the two
  // predictions differ by 15 standard errors at this sample size.
  ModelSpec spec = scalar_model(0.05, 6.0, 61, 0.01, {}, {{0.5, 1}});
  const long n = 20000;
  EnsembleResult res = simulate_ensemble(spec, {1.0}, n, 20, 271828);
  double mean = res.mean_at(20)[0];
  CHECK(std::abs(mean - std::exp(0.025)) < 0.005);
  CHECK(std::abs(mean - 1.0) > 0.015);
}

TEST_CASE("ensembles are bit-reproducible for a fixed seed") {
  ModelSpec spec = scalar_model(-6, 6, 201, 0.01, {{-1.0, 1}}, {{1.0, 0}});
  LangevinOptions opt;
  opt.store_trajectories = true;
  EnsembleResult a = simulate_ensemble(spec, {0.5}, 5, 50, 777, opt);
  EnsembleResult b = simulate_ensemble(spec, {0.5}, 5, 50, 777, opt);
  REQUIRE(a.trajectories().size() == b.trajectories().size());
  for (std::size_t k = 0; k < a.trajectories().size(); ++k) {
    CHECK(a.trajectories()[k].states == b.trajectories()[k].states);
  }
  EnsembleResult c = simulate_ensemble(spec, {0.5}, 5, 50, 778, opt);
  bool any_diff = false;
  for (std::size_t k = 0; k < a.trajectories().size(); ++k)
    any_diff = any_diff || (a.trajectories()[k].states !=
                            c.trajectories()[k].states);
  CHECK(any_diff);
}

TEST_CASE("reflecting boundaries keep every state inside the range") {
  // Strong diffusion in a narrow box exercises the mirror rule constantly.
  ModelSpec spec = scalar_model(-1, 1, 11, 0.05, {}, {{1.5, 0}});
  LangevinOptions opt;
  opt.store_trajectories = true;
  EnsembleResult res = simulate_ensemble(spec, {0.0}, 20, 400, 1234, opt);
  CHECK(res.count_at(400) == 20);
  for (const auto& traj : res.trajectories())
    for (const auto& s : traj.states) {
      CHECK(s[0] >= -1.0);
      CHECK(s[0] <= 1.0);
    }
}

TEST_CASE("absorbing boundaries remove trajectories that exit") {
  ModelSpec spec = scalar_model(-0.5, 0.5, 5, 0.01, {}, {{1.0, 0}});
  LangevinOptions opt;
  opt.boundary = BoundaryMode::absorbing;
  const long n = 2000;
  EnsembleResult res = simulate_ensemble(spec, {0.0}, n, 200, 99, opt);
  CHECK(res.count_at(0) == n);
  for (int s = 1; s <= 200; ++s) CHECK(res.count_at(s) <= res.count_at(s - 1));
  // By t = 2 the lowest diffusion mode has decayed by e^{-pi^2} and nearly
  // every walker has been absorbed.
  CHECK(res.count_at(200) < n / 20);
}

TEST_CASE("runaway drift reports the failing trajectory and epoch") {
  ModelSpec spec = scalar_model(-1, 1, 9, 0.01, {{1e200, 0}}, {{1.0, 0}});
  CHECK_THROWS_MATCHES(
      simulate_ensemble(spec, {0.0}, 3, 10, 5),
      numerical_error,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
          "trajectory 0 at epoch 1")));
}

TEST_CASE("start points outside the declared range are rejected") {
  ModelSpec spec = scalar_model(-1, 1, 9, 0.01, {}, {{1.0, 0}});
  CHECK_THROWS_MATCHES(
      simulate_ensemble(spec, {1.5}, 1, 1, 5), config_error,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("start point outside range")));
}

TEST_CASE("distribution starts sample the initial law") {
  // Starting from a two-point distribution, epoch-zero statistics reproduce
  // its mean and the two spikes.
  ModelSpec spec = scalar_model(-6, 6, 201, 0.01, {}, {{0.0, 0}});
  Distribution init = Distribution::delta(spec.mesh(), {1.0});
  Distribution other = Distribution::delta(spec.mesh(), {-2.0});
  std::vector<double> w(init.weights());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = 0.25 * w[i] + 0.75 * other.weights()[i];
  Distribution mixed(spec.mesh(), std::move(w));
  const long n = 40000;
  EnsembleResult res = simulate_ensemble(spec, mixed, n, 1, 60601);
  // E[M_0] = 0.25 * 1 + 0.75 * (-2) = -1.25, within sampling error.
  CHECK(std::abs(res.mean_at(0)[0] + 1.25) < 0.03);
  EnsembleResult res2 = simulate_ensemble(spec, mixed, n, 1, 60601);
  CHECK(res2.mean_at(0)[0] == res.mean_at(0)[0]);
}
