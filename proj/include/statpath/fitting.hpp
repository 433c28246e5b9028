#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "statpath/config.hpp"
#include "statpath/errors.hpp"
#include "statpath/geometry.hpp"
#include "statpath/lattice.hpp"
#include "statpath/mesh.hpp"
#include "statpath/model.hpp"
#include "statpath/optimize.hpp"
#include "statpath/path_integral.hpp"
#include "statpath/timeseries.hpp"

namespace statpath {

struct FreeCoefficient {
  std::string name;
  double initial = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// A declarative model with named free coefficients. Terms tagged with the
/// same name share one parameter; instantiating at a coefficient vector
/// writes the values back into the declaration and builds the model.
class FitTemplate {
public:
  explicit FitTemplate(ModelDecl decl) : decl_(std::move(decl)) {
    auto visit = [&](const TermDecl& t) {
      if (t.fit_name.empty()) return;
      for (auto& c : coeffs_) {
        if (c.name == t.fit_name) {
          if (c.lo != t.fit_lo || c.hi != t.fit_hi)
            throw config_error("free coefficient '" + t.fit_name +
                               "' is declared with inconsistent bounds");
          return;
        }
      }
      if (!(std::isfinite(t.fit_lo) && std::isfinite(t.fit_hi)))
        throw config_error("free coefficient '" + t.fit_name +
                           "' needs finite bounds");
      if (t.fit_lo > t.fit_hi)
        throw config_error("free coefficient '" + t.fit_name +
                           "' has inverted bounds");
      if (t.coeff < t.fit_lo || t.coeff > t.fit_hi)
        throw config_error("free coefficient '" + t.fit_name +
                           "' has an initial value outside its bounds");
      coeffs_.push_back({t.fit_name, t.coeff, t.fit_lo, t.fit_hi});
    };
    for (const auto& terms : decl_.drift_terms)
      for (const auto& t : terms) visit(t);
    for (const auto& ne : decl_.noise_entries)
      for (const auto& t : ne.terms) visit(t);
    for (const auto& t : decl_.potential_terms) visit(t);
    if (coeffs_.empty())
      throw config_error(
          "the model declares no free coefficients; tag terms to fit");
  }

  static FitTemplate from_model(const ModelSpec& spec) {
    if (!spec.declaration)
      throw config_error(
          "model has no declarative description to build a template from");
    return FitTemplate(*spec.declaration);
  }

  const ModelDecl& declaration() const { return decl_; }
  const std::vector<FreeCoefficient>& coefficients() const { return coeffs_; }
  int size() const { return static_cast<int>(coeffs_.size()); }

  Eigen::VectorXd initial() const {
    Eigen::VectorXd x(size());
    for (int i = 0; i < size(); ++i) x[i] = coeffs_[i].initial;
    return x;
  }
  Eigen::VectorXd lower_bounds() const {
    Eigen::VectorXd x(size());
    for (int i = 0; i < size(); ++i) x[i] = coeffs_[i].lo;
    return x;
  }
  Eigen::VectorXd upper_bounds() const {
    Eigen::VectorXd x(size());
    for (int i = 0; i < size(); ++i) x[i] = coeffs_[i].hi;
    return x;
  }

  bool inside_bounds(const Eigen::VectorXd& x) const {
    for (int i = 0; i < size(); ++i)
      if (x[i] < coeffs_[i].lo || x[i] > coeffs_[i].hi) return false;
    return true;
  }

  ModelDecl instantiated_declaration(const Eigen::VectorXd& x) const {
    if (x.size() != size())
      throw config_error("coefficient vector length mismatch");
    ModelDecl d = decl_;
    auto apply = [&](TermDecl& t) {
      if (t.fit_name.empty()) return;
      for (int i = 0; i < size(); ++i)
        if (coeffs_[i].name == t.fit_name) {
          t.coeff = x[i];
          return;
        }
    };
    for (auto& terms : d.drift_terms)
      for (auto& t : terms) apply(t);
    for (auto& ne : d.noise_entries)
      for (auto& t : ne.terms) apply(t);
    for (auto& t : d.potential_terms) apply(t);
    return d;
  }

  /// Builds and validates the model at the given coefficients; throws if the
  /// resulting diffusion is not positive definite on the mesh.
  ModelSpec instantiate(const Eigen::VectorXd& x) const {
    return build_model(instantiated_declaration(x));
  }

private:
  ModelDecl decl_;
  std::vector<FreeCoefficient> coeffs_;
};

/// Treats an observed series as a discretized path of the model and returns
/// its action and accumulated measure-prefactor logs. The negative log path
/// likelihood is action - log_prefactor_sum.
inline PathAction action_of_data(const GeometryEngine& geom,
                                 const TimeSeries& data, Discretization disc,
                                 double riemann_coeff = 1.0 / 6.0) {
  if (data.epochs.size() < 2)
    throw config_error("need at least two observations");
  return path_action(geom, data.observations, data.dt(), disc, riemann_coeff,
                     0);
}

struct FitOptions {
  Discretization disc = Discretization::prepoint;
  AnnealingOptions anneal;
  NelderMeadOptions polish;
  bool polish_enabled = true;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  double nll = 0.0;  // action - log_prefactor_sum at the optimum
  double action = 0.0;
  double log_prefactor_sum = 0.0;
  long evaluations = 0;
  std::vector<AnnealingTracePoint> trace;
  ModelSpec fitted;  // model instantiated at the fitted coefficients

  // Filled by callers that request them; not part of the core fit.
  std::optional<double> information;
  std::vector<std::pair<Eigen::VectorXd, double>> minima;

  double per_step_nll(std::size_t increments) const {
    return nll / static_cast<double>(increments);
  }
};

namespace detail {

/// Negative log path likelihood of the data under the template at x,
/// +infinity outside bounds or wherever the candidate cannot be evaluated
/// (non-positive-definite diffusion, degenerate metric at a data point).
inline double fit_objective(const FitTemplate& tmpl, const TimeSeries& data,
                            Discretization disc, const Eigen::VectorXd& x) {
  if (!tmpl.inside_bounds(x))
    return std::numeric_limits<double>::infinity();
  try {
    ModelSpec spec = tmpl.instantiate(x);
    GeometryEngine geom(spec);
    PathAction pa = action_of_data(geom, data, disc);
    double nll = pa.action - pa.log_prefactor_sum;
    return std::isfinite(nll) ? nll
                              : std::numeric_limits<double>::infinity();
  } catch (const numerical_error&) {
    return std::numeric_limits<double>::infinity();
  } catch (const config_error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Two-phase coefficient estimation: simulated annealing over the bound box,
/// then a derivative-free simplex polish. Deterministic for a given seed.
inline FitResult fit(const FitTemplate& tmpl, const TimeSeries& data,
                     std::uint64_t seed, const FitOptions& opt = {}) {
  const std::size_t increments =
      data.epochs.size() >= 1 ? data.epochs.size() - 1 : 0;
  if (static_cast<std::size_t>(tmpl.size()) >= increments)
    throw config_error(
        "data too short: need more increments than free coefficients (" +
        std::to_string(tmpl.size()) + " free, " +
        std::to_string(increments) + " increments)");

  long evals = 0;
  auto objective = [&](const Eigen::VectorXd& x) {
    ++evals;
    return detail::fit_objective(tmpl, data, opt.disc, x);
  };

  AnnealingResult sa;
  try {
    sa = simulated_annealing_minimize(objective, tmpl.lower_bounds(),
                                      tmpl.upper_bounds(), tmpl.initial(),
                                      seed, opt.anneal);
  } catch (const nonconvergence_error&) {
    std::string bounds;
    for (const auto& c : tmpl.coefficients()) {
      if (!bounds.empty()) bounds += ", ";
      bounds += c.name + " in [" + std::to_string(c.lo) + ", " +
                std::to_string(c.hi) + "]";
    }
    throw nonconvergence_error(
        "every annealing restart was infeasible: no coefficient vector in "
        "the bound box yields positive-definite diffusion; bounds: " +
        bounds);
  }

  Eigen::VectorXd x_best = sa.x;
  double f_best = sa.value;
  if (opt.polish_enabled) {
    NelderMeadResult nm = nelder_mead_minimize(objective, x_best, opt.polish);
    if (nm.value < f_best) {
      x_best = nm.x;
      f_best = nm.value;
    }
  }

  FitResult out;
  for (const auto& c : tmpl.coefficients()) out.names.push_back(c.name);
  out.coefficients = x_best;
  out.evaluations = evals;
  out.trace = std::move(sa.trace);
  out.fitted = tmpl.instantiate(x_best);
  GeometryEngine geom(out.fitted);
  PathAction pa = action_of_data(geom, data, opt.disc);
  out.action = pa.action;
  out.log_prefactor_sum = pa.log_prefactor_sum;
  out.nll = pa.action - pa.log_prefactor_sum;
  return out;
}

/// Relative-entropy comparison functional between two distributions on one
/// mesh: the negated divergence of P from the reference, always <= 0 and
/// zero exactly when the weights coincide.
inline double information(const Distribution& P, const Distribution& P_ref) {
  if (!(P.mesh() == P_ref.mesh()))
    throw config_error("information requires both distributions on one mesh");
  double I = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    double w = P[i];
    if (w <= 0.0) continue;
    double r = P_ref[i];
    if (r <= 0.0)
      throw numerical_error(
          "support violation: probability mass at cell " + std::to_string(i) +
          " where the reference has none");
    I -= w * std::log(w / r);
  }
  return I;
}

/// Reference propagation with the scalar-curvature coefficient halved
/// (1/6 -> 1/12): the slow-varying stationary-phase reference state. For
/// flat metrics this is exactly the standard propagation.
inline Distribution wkb_reference(const GeometryEngine& geom,
                                  const Distribution& P0, int n_steps,
                                  KernelOptions opt = {}) {
  opt.riemann_coeff = 1.0 / 12.0;
  TransitionKernel K = build_kernel(geom, P0.mesh(), geom.spec().dt,
                                    Discretization::midpoint, opt);
  return propagate(K, P0, n_steps).distribution;
}

inline Distribution uniform_reference(const StateMesh& mesh) {
  return Distribution::uniform(mesh);
}

struct ScanOptions {
  int points_per_axis = 11;
  int epoch_stride = 1;  // evaluate on every k-th observation
  Discretization disc = Discretization::prepoint;
  std::size_t max_points = 1'000'000;
};

struct ScanPoint {
  Eigen::VectorXd coefficients;
  double objective = 0.0;
};

/// Coarse grid search over the free-coefficient box. Returns every interior
/// grid point none of whose axis neighbors is smaller (plateau ties count as
/// minima), sorted by objective; each is a candidate seed for a local fit.
inline std::vector<ScanPoint> scan_minima(const FitTemplate& tmpl,
                                          const TimeSeries& data,
                                          const ScanOptions& opt = {}) {
  const int K = tmpl.size();
  if (opt.points_per_axis < 1)
    throw config_error("scan needs at least one point per axis");
  if (opt.epoch_stride < 1) throw config_error("epoch stride must be >= 1");

  TimeSeries sub;
  if (opt.epoch_stride == 1) {
    sub = data;
  } else {
    for (std::size_t i = 0; i < data.epochs.size();
         i += static_cast<std::size_t>(opt.epoch_stride)) {
      sub.epochs.push_back(data.epochs[i]);
      sub.observations.push_back(data.observations[i]);
    }
    sub.uniform_dt = data.uniform_dt;
    if (sub.epochs.size() < 2)
      throw config_error("epoch stride leaves fewer than two observations");
  }

  std::size_t total = 1;
  for (int i = 0; i < K; ++i) {
    total *= static_cast<std::size_t>(opt.points_per_axis);
    if (total > opt.max_points)
      throw config_error("scan grid exceeds the point budget");
  }

  const int n = opt.points_per_axis;
  Eigen::VectorXd lo = tmpl.lower_bounds(), hi = tmpl.upper_bounds();
  auto coord = [&](int axis, int idx) {
    return n == 1 ? 0.5 * (lo[axis] + hi[axis])
                  : lo[axis] + (hi[axis] - lo[axis]) * idx / (n - 1);
  };

  std::vector<double> values(total);
  std::vector<int> idx(K, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    Eigen::VectorXd x(K);
    std::size_t rem = flat;
    for (int a = K - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % n);
      rem /= n;
    }
    for (int a = 0; a < K; ++a) x[a] = coord(a, idx[a]);
    values[flat] = detail::fit_objective(tmpl, sub, opt.disc, x);
  }

  std::vector<ScanPoint> minima;
  std::vector<std::size_t> strides(K, 1);
  for (int a = K - 2; a >= 0; --a)
    strides[a] = strides[a + 1] * static_cast<std::size_t>(n);
  for (std::size_t flat = 0; flat < total; ++flat) {
    if (!std::isfinite(values[flat])) continue;
    std::size_t rem = flat;
    bool interior = true;
    for (int a = 0; a < K; ++a) {
      int ia = static_cast<int>(rem / strides[a] % n);
      if (ia == 0 || ia == n - 1) {
        interior = false;
        break;
      }
    }
    if (!interior) continue;
    bool is_min = true;
    for (int a = 0; a < K && is_min; ++a) {
      if (values[flat - strides[a]] < values[flat] ||
          values[flat + strides[a]] < values[flat])
        is_min = false;
    }
    if (!is_min) continue;
    Eigen::VectorXd x(K);
    rem = flat;
    for (int a = K - 1; a >= 0; --a) {
      x[a] = coord(a, static_cast<int>(rem % n));
      rem /= n;
    }
    minima.push_back({x, values[flat]});
  }
  std::sort(minima.begin(), minima.end(),
            [](const ScanPoint& a, const ScanPoint& b) {
              return a.objective < b.objective;
            });
  return minima;
}

struct CredibleInterval {
  double lo = 0.0;
  double hi = 0.0;
};

struct PredictSummary {
  std::vector<double> mean;
  Eigen::MatrixXd covariance;
  std::vector<CredibleInterval> intervals;  // per flattened dimension
  double credible_mass = 0.9;
};

struct PredictResult {
  Distribution distribution;
  PredictSummary summary;
  std::vector<double> mass_drift;
};

struct PredictOptions {
  Discretization disc = Discretization::midpoint;
  KernelOptions kernel;
  double credible_mass = 0.9;
  int first_epoch = 0;
};

namespace detail {

inline double marginal_quantile(const std::vector<double>& masses,
                                const MeshAxis& axis, double q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    acc += masses[i];
    if (acc >= q - 1e-15) return axis.center(static_cast<int>(i));
  }
  return axis.center(axis.n - 1);
}

inline PredictSummary summarize(const Distribution& dist,
                                double credible_mass) {
  PredictSummary s;
  s.credible_mass = credible_mass;
  s.mean = dist.mean();
  const int D = dist.mesh().dim();
  s.covariance.resize(D, D);
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b) s.covariance(a, b) = dist.covariance(a, b);
  const double tail = 0.5 * (1.0 - credible_mass);
  for (int d = 0; d < D; ++d) {
    std::vector<double> m = dist.marginal(d);
    const MeshAxis& axis = dist.mesh().axis(d);
    s.intervals.push_back({marginal_quantile(m, axis, tail),
                           marginal_quantile(m, axis, 1.0 - tail)});
  }
  return s;
}

}  // namespace detail

/// Forecast by path-integral propagation over the horizon, summarized by
/// moments and per-variable central credible intervals read off the mesh.
inline PredictResult predict(const GeometryEngine& geom,
                             const Distribution& P0, int horizon,
                             const PredictOptions& opt = {}) {
  if (horizon < 0) throw config_error("horizon must be non-negative");
  PredictResult out{P0, {}, {}};
  if (horizon > 0) {
    LatticePropagateOptions po;
    po.disc = opt.disc;
    po.kernel = opt.kernel;
    po.first_epoch = opt.first_epoch;
    PropagateResult pr = lattice_kernel_propagate(geom, P0, horizon, po);
    out.distribution = std::move(pr.distribution);
    out.mass_drift = std::move(pr.mass_drift);
  }
  out.summary = detail::summarize(out.distribution, opt.credible_mass);
  return out;
}

inline PredictResult predict(const GeometryEngine& geom,
                             const std::vector<double>& state, int horizon,
                             const PredictOptions& opt = {}) {
  return predict(geom, Distribution::delta(geom.spec().mesh(), state),
                 horizon, opt);
}

}  // namespace statpath
