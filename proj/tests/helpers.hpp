#pragma once

// Shared fixtures for the test suite: locating the shipped config files,
// building small models programmatically, and exact Gaussian bin masses for
// histogram comparisons.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "statpath/statpath.hpp"

namespace test_support {

inline std::string config_path(const std::string& name) {
#ifdef STATPATH_CONFIG_DIR
  return std::string(STATPATH_CONFIG_DIR) + "/" + name;
#else
  return "configs/" + name;
#endif
}

inline std::string config_text(const std::string& name) {
  return statpath::read_text_file(config_path(name));
}

inline statpath::ModelSpec load_config_model(const std::string& name) {
  return statpath::load_model(config_text(name));
}

/// One-variable model with polynomial drift and a single polynomial noise
/// channel, each given as {coefficient, power} monomials in the variable.
inline statpath::ModelSpec scalar_model(
    double lo, double hi, int n, double dt,
    const std::vector<std::pair<double, int>>& drift_terms,
    const std::vector<std::pair<double, int>>& noise_terms) {
  using statpath::PolynomialField;
  statpath::ModelSpec m;
  m.variables = {statpath::Variable{"x", 1, lo, hi, n}};
  m.dt = dt;
  auto poly_of = [](const std::vector<std::pair<double, int>>& ts) {
    PolynomialField p;
    for (const auto& [c, k] : ts)
      p = PolynomialField::sum(p, PolynomialField::monomial(c, 0, k));
    return p;
  };
  m.drift.push_back(drift_terms.empty()
                        ? statpath::FieldPtr{}
                        : statpath::make_field(poly_of(drift_terms)));
  m.noise = statpath::NoiseMatrixSpec(1, 1);
  m.noise.set_entry(0, 0, statpath::make_field(poly_of(noise_terms)));
  return m;
}

/// Two-variable single-cell model with a diagonal noise matrix given as two
/// analytic fields (one per channel/dimension).
inline statpath::ModelSpec diag2_model(std::array<double, 2> lo,
                                       std::array<double, 2> hi,
                                       std::array<int, 2> n, double dt,
                                       statpath::FieldPtr n0,
                                       statpath::FieldPtr n1) {
  statpath::ModelSpec m;
  m.variables = {statpath::Variable{"x", 1, lo[0], hi[0], n[0]},
                 statpath::Variable{"y", 2, lo[1], hi[1], n[1]}};
  m.dt = dt;
  m.drift = {nullptr, nullptr};
  m.noise = statpath::NoiseMatrixSpec(2, 2);
  m.noise.set_entry(0, 0, std::move(n0));
  m.noise.set_entry(1, 1, std::move(n1));
  return m;
}

inline double normal_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

/// Exact Gaussian mass of [lo, hi).
inline double gauss_mass(double lo, double hi, double mu, double sigma) {
  return normal_cdf(hi, mu, sigma) - normal_cdf(lo, mu, sigma);
}

/// L1 distance between an empirical histogram over uniform bins on
/// [lo, hi] (counts, overflow clamped into the end bins by the caller) and
/// the exact Gaussian masses on the same bins, with tail mass outside the
/// range folded into the end bins.
inline double gauss_hist_l1(const std::vector<double>& counts, double lo,
                            double hi, double mu, double sigma) {
  double total = 0.0;
  for (double c : counts) total += c;
  const int n = static_cast<int>(counts.size());
  const double w = (hi - lo) / n;
  double l1 = 0.0;
  for (int i = 0; i < n; ++i) {
    double a = lo + i * w, b = a + w;
    double mass = gauss_mass(a, b, mu, sigma);
    if (i == 0) mass += normal_cdf(a, mu, sigma);
    if (i == n - 1) mass += 1.0 - normal_cdf(b, mu, sigma);
    l1 += std::abs(counts[i] / total - mass);
  }
  return l1;
}

/// Bins scalar samples into k uniform bins over [lo, hi], clamping outliers
/// into the end bins.
inline std::vector<double> bin_samples(const std::vector<double>& xs,
                                       double lo, double hi, int k) {
  std::vector<double> counts(k, 0.0);
  const double w = (hi - lo) / k;
  for (double x : xs) {
    int i = static_cast<int>(std::floor((x - lo) / w));
    if (i < 0) i = 0;
    if (i >= k) i = k - 1;
    counts[i] += 1.0;
  }
  return counts;
}

}  // namespace test_support
