#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/geometry.hpp"
#include "statpath/langevin.hpp"
#include "statpath/mesh.hpp"
#include "statpath/model.hpp"
#include "statpath/optimize.hpp"
#include "statpath/rng.hpp"

namespace statpath {

/// Which state the short-time Lagrangian and measure are evaluated at:
/// midpoint uses 0.5*(M_s + M_{s+1}) with the determinant factor at the
/// post-point; prepoint evaluates everything at M_s and carries no explicit
/// Riemannian terms.
enum class Discretization { midpoint, prepoint };

inline const char* discretization_name(Discretization d) {
  return d == Discretization::midpoint ? "midpoint" : "prepoint";
}

struct KernelOptions {
  BoundaryMode boundary = BoundaryMode::reflecting;
  double window_sigmas = 8.0;      // half-width of the kernel stencil
  double riemann_coeff = 1.0 / 6.0;
  int epoch = 0;
  bool include_potential = true;
  std::size_t max_entries = 50'000'000;
  // Mesh-consistency rule: single-step standard deviation must be at least
  // this many cell widths, so the kernel spans >= 3 cells per column.
  double min_sigma_cells = 1.5;
};

/// Column-stochastic single-step propagator: entry (beta, alpha) is the
/// probability mass moved from cell alpha to cell beta in one step of dt.
/// Built without the potential, folded at the boundary, column-normalized,
/// then scaled by exp(dt*V) so a potential shows up as per-step gain/loss.
class TransitionKernel {
public:
  TransitionKernel(StateMesh mesh, Discretization disc, double dt,
                   BoundaryMode boundary,
                   Eigen::SparseMatrix<double> matrix,
                   std::vector<double> residuals)
      : mesh_(std::move(mesh)), disc_(disc), dt_(dt), boundary_(boundary),
        K_(std::move(matrix)), residuals_(std::move(residuals)) {}

  const StateMesh& mesh() const { return mesh_; }
  Discretization discretization() const { return disc_; }
  double dt() const { return dt_; }
  BoundaryMode boundary() const { return boundary_; }
  const Eigen::SparseMatrix<double>& matrix() const { return K_; }

  double entry(std::size_t beta, std::size_t alpha) const {
    return K_.coeff(static_cast<int>(beta), static_cast<int>(alpha));
  }

  double column_sum(std::size_t alpha) const {
    double s = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(
             K_, static_cast<int>(alpha));
         it; ++it)
      s += it.value();
    return s;
  }

  /// Per-column |mass - 1| of the potential-free kernel before the final
  /// normalization (the truncation/folding error the normalization removed).
  const std::vector<double>& normalization_residuals() const {
    return residuals_;
  }

private:
  StateMesh mesh_;
  Discretization disc_;
  double dt_;
  BoundaryMode boundary_;
  Eigen::SparseMatrix<double> K_;
  std::vector<double> residuals_;
};

/// Builds the single-step kernel on the given mesh (defaults to the model's
/// own mesh via the overload below).
inline TransitionKernel build_kernel(const GeometryEngine& geom,
                                     const StateMesh& mesh, double dt,
                                     Discretization disc,
                                     const KernelOptions& opt = {}) {
  const int D = mesh.dim();
  if (D != geom.dim())
    throw config_error("mesh dimension does not match the model");
  if (!(dt > 0.0)) throw config_error("kernel time step must be positive");
  const std::size_t N = mesh.total_cells();
  const double cellvol = mesh.cell_volume();
  const double log_norm =
      -0.5 * static_cast<double>(D) * std::log(2.0 * M_PI * dt);

  // Pass 1: mesh-consistency scan. The per-variable kernel width
  // sqrt(g^{GG} dt) must be at least min_sigma_cells cell spacings at every
  // column, or the kernel degenerates to an unresolvable near-delta.
  {
    std::vector<double> min_gGG(D, std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < N; ++a) {
      GeometryBundle b = geom.bundle(mesh.cell_center(a),
                                     GeometryLevel::metric, opt.epoch);
      for (int G = 0; G < D; ++G)
        min_gGG[G] = std::min(min_gGG[G], b.g_upper(G, G));
    }
    for (int G = 0; G < D; ++G) {
      double dM = mesh.axis(G).spacing();
      double sigma = std::sqrt(min_gGG[G] * dt);
      if (sigma < opt.min_sigma_cells * dM) {
        double dt_needed =
            (opt.min_sigma_cells * dM) * (opt.min_sigma_cells * dM) /
            min_gGG[G];
        double dM_needed = sigma / opt.min_sigma_cells;
        std::ostringstream os;
        os << "mesh consistency failure on axis " << G
           << ": single-step width " << sigma << " < " << opt.min_sigma_cells
           << " * cell spacing " << dM << "; increase dt to >= " << dt_needed
           << " or refine the axis to spacing <= " << dM_needed;
        throw config_error(os.str());
      }
    }
  }

  // Pass 2: per-column construction with reflecting (or absorbing) folds.
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> residuals(N, 0.0);
  std::vector<double> col_values(N, 0.0);
  std::vector<std::size_t> col_touched;
  std::size_t total_entries = 0;

  std::vector<int> radius(D);
  for (std::size_t a = 0; a < N; ++a) {
    const std::vector<int> a_idx = mesh.multi_index(a);
    const std::vector<double> x_a = mesh.cell_center(a_idx);
    GeometryBundle pre = geom.bundle(x_a, GeometryLevel::drift, opt.epoch);

    std::size_t window = 1;
    for (int G = 0; G < D; ++G) {
      double dM = mesh.axis(G).spacing();
      double sigma = std::sqrt(pre.g_upper(G, G) * dt);
      double shift = std::abs(pre.g_drift[G]) * dt;
      radius[G] =
          static_cast<int>(std::ceil((shift + opt.window_sigmas * sigma) /
                                     dM)) +
          1;
      window *= static_cast<std::size_t>(2 * radius[G] + 1);
    }
    total_entries += window;
    if (total_entries > opt.max_entries)
      throw config_error(
          "transition kernel exceeds the dense-entry budget; use the lattice "
          "sweep sampler for systems of this size");

    col_touched.clear();
    // Enumerate raw (unfolded) targets in the window.
    std::vector<int> off(D, 0);
    for (int G = 0; G < D; ++G) off[G] = -radius[G];
    while (true) {
      std::vector<double> x_b(D);
      std::vector<int> folded(D);
      bool absorbed = false;
      for (int G = 0; G < D; ++G) {
        int raw = a_idx[G] + off[G];
        x_b[G] = mesh.axis(G).lo + (raw + 0.5) * mesh.axis(G).spacing();
        if (raw < 0 || raw >= mesh.axis(G).n) {
          if (opt.boundary == BoundaryMode::absorbing) {
            absorbed = true;
            break;
          }
          folded[G] = reflect_index(raw, mesh.axis(G).n);
        } else {
          folded[G] = raw;
        }
      }
      if (!absorbed) {
        Eigen::VectorXd mdot(D);
        for (int G = 0; G < D; ++G) mdot[G] = (x_b[G] - x_a[G]) / dt;
        double logk;
        if (disc == Discretization::prepoint) {
          Eigen::VectorXd v = mdot - pre.g_drift;
          double L_kin = 0.5 * v.dot(pre.g_lower * v);
          logk = log_norm + 0.5 * std::log(pre.det_g) - dt * L_kin;
        } else {
          std::vector<double> mid(D);
          for (int G = 0; G < D; ++G) mid[G] = 0.5 * (x_a[G] + x_b[G]);
          GeometryBundle bm =
              geom.bundle(mid, GeometryLevel::full, opt.epoch);
          Eigen::VectorXd v = mdot - bm.h;
          double L_nopot = 0.5 * v.dot(bm.g_lower * v) + 0.5 * bm.h_div +
                           opt.riemann_coeff * bm.R;
          GeometryBundle post =
              geom.bundle(x_b, GeometryLevel::metric, opt.epoch);
          logk = log_norm + 0.5 * std::log(post.det_g) - dt * L_nopot;
        }
        double val = std::exp(logk) * cellvol;
        if (val > 0.0) {
          std::size_t b = mesh.flat_index(folded);
          if (col_values[b] == 0.0) col_touched.push_back(b);
          col_values[b] += val;
        }
      }
      // Advance the odometer.
      int G = D - 1;
      while (G >= 0) {
        if (++off[G] <= radius[G]) break;
        off[G] = -radius[G];
        --G;
      }
      if (G < 0) break;
    }

    double sum = 0.0;
    for (std::size_t b : col_touched) sum += col_values[b];
    residuals[a] = std::abs(sum - 1.0);
    if (!(sum > 0.0))
      throw numerical_error("kernel column lost all mass at cell " +
                            std::to_string(a));
    const double inv =
        (opt.boundary == BoundaryMode::reflecting) ? 1.0 / sum : 1.0;

    // Potential factor, applied after normalization so that V = 0 keeps
    // columns exactly stochastic and a constant V scales them by exp(V dt).
    // Epoch-indexed linear constraint terms join the potential here.
    const ModelSpec& spec = geom.spec();
    const bool has_V =
        opt.include_potential &&
        (spec.has_potential() || !spec.constraints.empty());
    auto V_at = [&](const std::vector<double>& x) {
      double v = spec.potential ? spec.potential->value(x, opt.epoch) : 0.0;
      return v + spec.constraint_potential(x, opt.epoch);
    };
    double col_V = 1.0;
    if (has_V && disc == Discretization::prepoint)
      col_V = std::exp(dt * V_at(x_a));
    std::sort(col_touched.begin(), col_touched.end());
    for (std::size_t b : col_touched) {
      double v = col_values[b] * inv;
      col_values[b] = 0.0;
      if (has_V && disc == Discretization::midpoint) {
        std::vector<double> mid = mesh.cell_center(b);
        for (int G = 0; G < D; ++G) mid[G] = 0.5 * (mid[G] + x_a[G]);
        v *= std::exp(dt * V_at(mid));
      } else {
        v *= col_V;
      }
      trip.emplace_back(static_cast<int>(b), static_cast<int>(a), v);
    }
  }

  Eigen::SparseMatrix<double> K(static_cast<int>(N), static_cast<int>(N));
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();
  return TransitionKernel(mesh, disc, dt, opt.boundary, std::move(K),
                          std::move(residuals));
}

inline TransitionKernel build_kernel(const GeometryEngine& geom, double dt,
                                     Discretization disc,
                                     const KernelOptions& opt = {}) {
  return build_kernel(geom, geom.spec().mesh(), dt, disc, opt);
}

struct PropagateResult {
  Distribution distribution;
  std::vector<double> mass_drift;  // per-step |mass - 1| before renormalizing
};

/// Repeated single-step folds, renormalizing after each step and recording
/// how much mass the step lost or gained before renormalization.
inline PropagateResult propagate(const TransitionKernel& kernel,
                                 const Distribution& P0, int n_steps) {
  if (P0.mesh() != kernel.mesh())
    throw config_error("distribution mesh does not match the kernel");
  if (n_steps < 0) throw config_error("step count must be non-negative");
  const std::size_t N = kernel.mesh().total_cells();
  Eigen::VectorXd p(N);
  for (std::size_t i = 0; i < N; ++i) p[i] = P0[i];
  PropagateResult out{P0, {}};
  out.mass_drift.reserve(n_steps);
  for (int s = 0; s < n_steps; ++s) {
    p = kernel.matrix() * p;
    double mass = p.sum();
    out.mass_drift.push_back(std::abs(mass - 1.0));
    if (!(mass > 0.0))
      throw numerical_error("propagation lost all probability mass at step " +
                            std::to_string(s + 1));
    p /= mass;
  }
  std::vector<double> w(N);
  for (std::size_t i = 0; i < N; ++i) w[i] = p[i];
  out.distribution = Distribution(kernel.mesh(), std::move(w));
  return out;
}

struct PathAction {
  double action = 0.0;             // sum over steps of dt * L_s
  double log_prefactor_sum = 0.0;  // sum of measure-factor logs
  std::vector<double> step_lagrangians;

  double log_weight() const { return -action + log_prefactor_sum; }
};

/// Discrete action of a state path under either evaluation rule, with the
/// log of the measure prefactors returned separately so callers can form
/// full log-probabilities.
inline PathAction path_action(const GeometryEngine& geom,
                              const std::vector<std::vector<double>>& states,
                              double dt, Discretization disc,
                              double riemann_coeff = 1.0 / 6.0,
                              int first_epoch = 0) {
  if (states.size() < 2)
    throw config_error("a path needs at least two states");
  const int D = geom.dim();
  const double log_norm =
      -0.5 * static_cast<double>(D) * std::log(2.0 * M_PI * dt);
  PathAction out;
  out.step_lagrangians.reserve(states.size() - 1);
  for (std::size_t s = 0; s + 1 < states.size(); ++s) {
    const auto& a = states[s];
    const auto& b = states[s + 1];
    if (static_cast<int>(a.size()) != D || static_cast<int>(b.size()) != D)
      throw config_error("path state dimension does not match model");
    Eigen::VectorXd mdot(D);
    for (int G = 0; G < D; ++G) mdot[G] = (b[G] - a[G]) / dt;
    const int epoch = first_epoch + static_cast<int>(s);
    double L, log_pref;
    if (disc == Discretization::prepoint) {
      GeometryBundle bb = geom.bundle(a, GeometryLevel::drift, epoch);
      L = GeometryEngine::prepoint_lagrangian(bb, mdot);
      log_pref = log_norm + 0.5 * std::log(bb.det_g);
    } else {
      std::vector<double> mid(D);
      for (int G = 0; G < D; ++G) mid[G] = 0.5 * (a[G] + b[G]);
      GeometryBundle bm = geom.bundle(mid, GeometryLevel::full, epoch);
      L = GeometryEngine::feynman_lagrangian(bm, mdot, riemann_coeff);
      GeometryBundle post = geom.bundle(b, GeometryLevel::metric, epoch);
      log_pref = log_norm + 0.5 * std::log(post.det_g);
    }
    out.action += dt * L;
    out.log_prefactor_sum += log_pref;
    out.step_lagrangians.push_back(L);
  }
  return out;
}

struct PathSample {
  std::vector<std::vector<double>> states;
  double action = 0.0;
  double log_prefactor_sum = 0.0;
  double el_residual = 0.0;  // max-norm of d(action)/d(interior state)
  bool converged = false;
};

struct MppOptions {
  Discretization disc = Discretization::midpoint;
  int restarts = 4;
  std::uint64_t seed = 2026;  // for restart perturbations only
  QuasiNewtonOptions qn;
};

/// Minimizes the discrete action over the u interior states between fixed
/// endpoints, quasi-Newton from the straight-line path with randomized
/// restarts on failure. Never throws on non-convergence: the best path found
/// is returned with converged = false.
inline PathSample most_probable_path(const GeometryEngine& geom,
                                     const std::vector<double>& start,
                                     const std::vector<double>& end, int u,
                                     const MppOptions& opt = {}) {
  if (u < 1) throw config_error("need at least one intermediate epoch");
  const int D = geom.dim();
  const double dt = geom.spec().dt;

  auto assemble = [&](const Eigen::VectorXd& x) {
    std::vector<std::vector<double>> states(u + 2,
                                            std::vector<double>(D, 0.0));
    states.front() = start;
    states.back() = end;
    for (int s = 0; s < u; ++s)
      for (int G = 0; G < D; ++G) states[s + 1][G] = x[s * D + G];
    return states;
  };
  auto objective = [&](const Eigen::VectorXd& x) -> double {
    try {
      return path_action(geom, assemble(x), dt, opt.disc).action;
    } catch (const numerical_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd x0(u * D);
  for (int s = 0; s < u; ++s) {
    double f = static_cast<double>(s + 1) / static_cast<double>(u + 1);
    for (int G = 0; G < D; ++G)
      x0[s * D + G] = start[G] + f * (end[G] - start[G]);
  }

  QuasiNewtonResult best;
  best.value = std::numeric_limits<double>::infinity();
  RandomStream rng(opt.seed, 0);
  for (int attempt = 0; attempt < std::max(1, opt.restarts); ++attempt) {
    Eigen::VectorXd init = x0;
    if (attempt > 0) {
      double scale = 0.1 * attempt;
      for (int i = 0; i < init.size(); ++i)
        init[i] += rng.normal() * scale * std::max(1.0, std::abs(init[i]));
    }
    QuasiNewtonResult r = quasi_newton_minimize(objective, init, {}, opt.qn);
    if (r.value < best.value) best = r;
    if (best.converged) break;
  }

  PathSample out;
  out.states = assemble(best.x);
  PathAction pa = path_action(geom, out.states, dt, opt.disc);
  out.action = pa.action;
  out.log_prefactor_sum = pa.log_prefactor_sum;
  out.el_residual =
      fd_gradient(objective, best.x).cwiseAbs().maxCoeff();
  out.converged = best.converged;
  return out;
}

struct PathSamplerOptions {
  Discretization disc = Discretization::midpoint;
  int burn_in_sweeps = 400;
  int thin = 5;
  double shift_move_fraction = 0.1;
  double acceptance_lo = 0.2;
  double acceptance_hi = 0.6;
  int tune_interval_sweeps = 20;
  double initial_width_scale = 1.0;
};

struct PathSamplerResult {
  // samples[k][s][G]: recorded path k, epoch s (endpoints included).
  std::vector<std::vector<std::vector<double>>> samples;
  double acceptance_rate = 0.0;  // after tuning froze
  double width_scale = 0.0;      // tuned proposal scale
  double iact = 1.0;  // integrated autocorrelation of a probe coordinate
};

/// Metropolis sampling of discretized paths with fixed start and either a
/// fixed end (conditional bridge) or a free final state sampled like the
/// interior. Single-site Gaussian proposals, width auto-tuned during burn-in
/// to a [acceptance_lo, acceptance_hi] rate and frozen afterwards;
/// occasional whole-path shift moves fight slow modes. Deterministic per
/// seed.
inline PathSamplerResult sample_paths_metropolis(
    const GeometryEngine& geom, const std::vector<double>& start,
    const std::optional<std::vector<double>>& end, int u, long n_samples,
    std::uint64_t seed, const PathSamplerOptions& opt = {}) {
  if (u < 1) throw config_error("need at least one intermediate epoch");
  if (n_samples < 1) throw config_error("need at least one sample");
  const int D = geom.dim();
  const double dt = geom.spec().dt;
  const ModelSpec& spec = geom.spec();
  const bool free_end = !end.has_value();
  const int S = u + 2;                 // states 0..u+1
  const int first_free = 1;
  const int last_free = free_end ? u + 1 : u;

  std::vector<std::vector<double>> path(S, start);
  if (!free_end) {
    path.back() = *end;
    for (int s = 1; s <= u; ++s) {
      double f = static_cast<double>(s) / static_cast<double>(u + 1);
      for (int G = 0; G < D; ++G)
        path[s][G] = start[G] + f * ((*end)[G] - start[G]);
    }
  }

  // Per-step log weight: -dt*L(step) + measure prefactor of the step.
  auto step_logw = [&](int s) -> double {
    Eigen::VectorXd mdot(D);
    for (int G = 0; G < D; ++G)
      mdot[G] = (path[s + 1][G] - path[s][G]) / dt;
    if (opt.disc == Discretization::prepoint) {
      GeometryBundle b = geom.bundle(path[s], GeometryLevel::drift, s);
      return -dt * GeometryEngine::prepoint_lagrangian(b, mdot) +
             0.5 * std::log(b.det_g);
    }
    std::vector<double> mid(D);
    for (int G = 0; G < D; ++G)
      mid[G] = 0.5 * (path[s][G] + path[s + 1][G]);
    GeometryBundle bm = geom.bundle(mid, GeometryLevel::full, s);
    GeometryBundle post =
        geom.bundle(path[s + 1], GeometryLevel::metric, s);
    return -dt * GeometryEngine::feynman_lagrangian(bm, mdot) +
           0.5 * std::log(post.det_g);
  };

  std::vector<double> logw(S - 1);
  for (int s = 0; s < S - 1; ++s) logw[s] = step_logw(s);

  // Proposal widths per dimension from the start point's one-step spread.
  std::vector<double> base_width(D);
  {
    GeometryBundle b = geom.bundle(start, GeometryLevel::metric, 0);
    for (int G = 0; G < D; ++G)
      base_width[G] = std::sqrt(b.g_upper(G, G) * dt);
  }
  double scale = opt.initial_width_scale;

  RandomStream rng(seed, 0);
  auto in_range = [&](const std::vector<double>& x) {
    for (int G = 0; G < D; ++G) {
      const Variable& v = spec.variable_of_dim(G);
      if (x[G] < v.lo || x[G] > v.hi) return false;
    }
    return true;
  };

  long window_props = 0, window_accepts = 0;
  long run_props = 0, run_accepts = 0;
  bool tuning = true;

  auto site_move = [&](int site) {
    std::vector<double> prop = path[site];
    for (int G = 0; G < D; ++G)
      prop[G] += rng.normal() * scale * base_width[G];
    ++window_props;
    if (!tuning) ++run_props;
    if (!in_range(prop)) return;
    std::vector<double> old = path[site];
    double old_w = 0.0, new_w = 0.0;
    int lo_step = site - 1;
    int hi_step = std::min(site, S - 2);
    for (int s = std::max(lo_step, 0); s <= hi_step; ++s) old_w += logw[s];
    path[site] = prop;
    std::vector<double> neww(hi_step - std::max(lo_step, 0) + 1);
    bool ok = true;
    try {
      for (int s = std::max(lo_step, 0); s <= hi_step; ++s) {
        neww[s - std::max(lo_step, 0)] = step_logw(s);
        new_w += neww[s - std::max(lo_step, 0)];
      }
    } catch (const numerical_error&) {
      ok = false;
    }
    if (ok && std::log(rng.uniform() + 1e-300) < new_w - old_w) {
      for (int s = std::max(lo_step, 0); s <= hi_step; ++s)
        logw[s] = neww[s - std::max(lo_step, 0)];
      ++window_accepts;
      if (!tuning) ++run_accepts;
    } else {
      path[site] = old;
    }
  };

  auto shift_move = [&] {
    std::vector<double> delta(D);
    for (int G = 0; G < D; ++G)
      delta[G] = rng.normal() * scale * base_width[G];
    ++window_props;
    if (!tuning) ++run_props;
    std::vector<std::vector<double>> old_path = path;
    std::vector<double> old_logw = logw;
    double old_sum = 0.0;
    for (double w : logw) old_sum += w;
    for (int s = first_free; s <= last_free; ++s)
      for (int G = 0; G < D; ++G) path[s][G] += delta[G];
    bool ok = true;
    for (int s = first_free; s <= last_free && ok; ++s)
      ok = in_range(path[s]);
    double new_sum = 0.0;
    if (ok) {
      try {
        for (int s = 0; s < S - 1; ++s) {
          logw[s] = step_logw(s);
          new_sum += logw[s];
        }
      } catch (const numerical_error&) {
        ok = false;
      }
    }
    if (ok && std::log(rng.uniform() + 1e-300) < new_sum - old_sum) {
      ++window_accepts;
      if (!tuning) ++run_accepts;
    } else {
      path = old_path;
      logw = old_logw;
    }
  };

  auto sweep = [&] {
    for (int site = first_free; site <= last_free; ++site) {
      if (rng.uniform() < opt.shift_move_fraction)
        shift_move();
      else
        site_move(site);
    }
  };

  // Burn-in with width tuning toward the target acceptance band.
  int sweeps_done = 0;
  while (sweeps_done < opt.burn_in_sweeps) {
    window_props = window_accepts = 0;
    for (int k = 0; k < opt.tune_interval_sweeps &&
                    sweeps_done < opt.burn_in_sweeps;
         ++k, ++sweeps_done)
      sweep();
    if (window_props > 0) {
      double rate = static_cast<double>(window_accepts) /
                    static_cast<double>(window_props);
      if (rate < opt.acceptance_lo)
        scale /= 1.3;
      else if (rate > opt.acceptance_hi)
        scale *= 1.3;
    }
  }
  tuning = false;

  PathSamplerResult out;
  out.width_scale = scale;
  out.samples.reserve(n_samples);
  std::vector<double> probe;
  probe.reserve(n_samples);
  const int probe_site = std::min((first_free + last_free) / 2 + 1, last_free);
  while (static_cast<long>(out.samples.size()) < n_samples) {
    for (int k = 0; k < opt.thin; ++k) sweep();
    out.samples.push_back(path);
    probe.push_back(path[probe_site][0]);
  }
  out.acceptance_rate = run_props > 0
                            ? static_cast<double>(run_accepts) /
                                  static_cast<double>(run_props)
                            : 0.0;
  if (out.acceptance_rate < 0.05 || out.acceptance_rate > 0.95)
    throw nonconvergence_error(
        "path sampler acceptance rate " +
        std::to_string(out.acceptance_rate) +
        " stayed outside [0.05, 0.95] after tuning; the model's path "
        "distribution is pathological at this step size");

  // Integrated autocorrelation time of the probe coordinate (initial
  // positive-sequence truncation), in units of recorded samples.
  {
    const std::size_t n = probe.size();
    double mean = 0.0;
    for (double v : probe) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : probe) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    double tau = 1.0;
    if (var > 0.0) {
      for (std::size_t lag = 1; lag < n / 2; ++lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i)
          c += (probe[i] - mean) * (probe[i + lag] - mean);
        c /= static_cast<double>(n - lag) * var;
        if (c <= 0.0) break;
        tau += 2.0 * c;
      }
    }
    out.iact = tau;
  }
  return out;
}

}  // namespace statpath
