#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/field.hpp"
#include "statpath/geometry.hpp"
#include "statpath/mesh.hpp"
#include "statpath/model.hpp"
#include "statpath/path_integral.hpp"
#include "statpath/rng.hpp"

namespace statpath {

/// Joint state of every variable in every cell at one epoch, in flattened
/// dimension order (cell-major, variable-minor).
struct LatticeState {
  int epoch = 0;
  std::vector<double> values;
};

inline bool field_time_dependent(const FieldPtr& f) {
  if (!f) return false;
  if (auto* p = dynamic_cast<const PolynomialEvaluator*>(f.get()))
    return p->poly().has_schedule();
  return false;  // analytic fields ignore the epoch argument
}

/// True when stepping the model depends on the epoch index: scheduled
/// coefficients anywhere, or active constraint multipliers.
inline bool model_time_dependent(const ModelSpec& spec) {
  if (!spec.constraints.empty()) return true;
  for (const auto& f : spec.drift)
    if (field_time_dependent(f)) return true;
  for (int i = 0; i < spec.noise.channels(); ++i)
    for (const auto& [d, f] : spec.noise.channel_entries(i))
      if (field_time_dependent(f)) return true;
  return field_time_dependent(spec.potential);
}

/// Full joint Lagrangian for one step of the many-cell system. Cell-cell
/// coupling enters through nearest-neighbor terms in the drift/noise fields
/// and through any off-diagonal diffusion blocks; epoch-indexed constraint
/// multipliers join the potential with the usual sign (the potential enters
/// the Lagrangian negated).
inline double lattice_lagrangian(const GeometryEngine& geom,
                                 const LatticeState& a, const LatticeState& b,
                                 Discretization disc) {
  const int D = geom.dim();
  if (static_cast<int>(a.values.size()) != D ||
      static_cast<int>(b.values.size()) != D)
    throw config_error("lattice state dimension does not match the model");
  if (b.epoch != a.epoch + 1)
    throw config_error("lattice step requires consecutive epochs");
  const double dt = geom.spec().dt;
  Eigen::VectorXd mdot(D);
  for (int G = 0; G < D; ++G)
    mdot[G] = (b.values[G] - a.values[G]) / dt;
  if (disc == Discretization::prepoint) {
    GeometryBundle bb =
        geom.bundle(a.values, GeometryLevel::drift, a.epoch);
    return GeometryEngine::prepoint_lagrangian(bb, mdot);
  }
  std::vector<double> mid(D);
  for (int G = 0; G < D; ++G) mid[G] = 0.5 * (a.values[G] + b.values[G]);
  GeometryBundle bm = geom.bundle(mid, GeometryLevel::full, a.epoch);
  return GeometryEngine::feynman_lagrangian(bm, mdot);
}

struct LatticePropagateOptions {
  Discretization disc = Discretization::midpoint;
  KernelOptions kernel;
  int first_epoch = 0;
  int max_joint_dims = 6;
  std::size_t max_joint_cells = 1'000'000;
};

/// Exact dense fold over the joint tensor-product mesh. Only viable at desk
/// scale; larger systems must use the checkerboard sweep sampler. For an
/// autonomous model this is a single kernel applied repeatedly (and for one
/// cell it is exactly the single-cell propagation); scheduled coefficients
/// or constraints force a per-epoch rebuild.
inline PropagateResult lattice_kernel_propagate(
    const GeometryEngine& geom, const Distribution& P0, int n_steps,
    const LatticePropagateOptions& opt = {}) {
  const ModelSpec& spec = geom.spec();
  if (spec.dim() > opt.max_joint_dims ||
      spec.mesh().total_cells() > opt.max_joint_cells)
    throw config_error(
        "joint state space exceeds the dense propagation budget (" +
        std::to_string(opt.max_joint_dims) + " dimensions, " +
        std::to_string(opt.max_joint_cells) +
        " cells); use the checkerboard sweep sampler instead");
  if (!model_time_dependent(spec)) {
    KernelOptions ko = opt.kernel;
    ko.epoch = opt.first_epoch;
    TransitionKernel K = build_kernel(geom, P0.mesh(), spec.dt,
                                      opt.disc, ko);
    return propagate(K, P0, n_steps);
  }
  PropagateResult out{P0, {}};
  for (int s = 0; s < n_steps; ++s) {
    KernelOptions ko = opt.kernel;
    ko.epoch = opt.first_epoch + s;
    TransitionKernel K = build_kernel(geom, P0.mesh(), spec.dt,
                                      opt.disc, ko);
    PropagateResult step = propagate(K, out.distribution, 1);
    out.distribution = std::move(step.distribution);
    out.mass_drift.push_back(step.mass_drift.front());
  }
  return out;
}

struct SweepOptions {
  Discretization disc = Discretization::prepoint;
  double initial_width_scale = 1.0;
  int burn_in_sweeps = 200;
  int tune_interval_sweeps = 20;
  double acceptance_lo = 0.2;
  double acceptance_hi = 0.6;
  bool fix_first = true;  // keep the initial lattice state as a condition
  bool fix_last = false;
};

struct SweepDiagnostics {
  std::vector<long> cell_proposals;
  std::vector<long> cell_accepts;
  std::vector<double> action_trace;  // total path action after each sweep
  long sweeps = 0;
  double width_scale = 0.0;

  double cell_acceptance(int cell) const {
    return cell_proposals[cell] > 0
               ? static_cast<double>(cell_accepts[cell]) /
                     static_cast<double>(cell_proposals[cell])
               : 0.0;
  }
  double overall_acceptance() const {
    long p = 0, a = 0;
    for (std::size_t i = 0; i < cell_proposals.size(); ++i) {
      p += cell_proposals[i];
      a += cell_accepts[i];
    }
    return p > 0 ? static_cast<double>(a) / static_cast<double>(p) : 0.0;
  }
};

/// Cellular Metropolis over a whole chain of lattice states. Each sweep
/// visits cells in two-color checkerboard order (all dark cells at every
/// free epoch, then all light cells), proposing a joint Gaussian move of one
/// cell's variables at one epoch and accepting against
/// exp(-(sum_s dt L_s)/temperature). Nearest-neighbor coupling means cells
/// of one color interact only through the fixed other color, so the dark
/// half-sweep could run concurrently; updates here are sequential and
/// deterministic per seed. Proposal width is tuned during burn-in toward the
/// target acceptance band and then frozen.
class LatticeSampler {
public:
  LatticeSampler(const GeometryEngine& geom,
                 std::vector<LatticeState> chain, double temperature,
                 std::uint64_t seed, const SweepOptions& opt = {})
      : geom_(geom), spec_(geom.spec()), chain_(std::move(chain)),
        temperature_(temperature), opt_(opt), rng_(seed, 0),
        scale_(opt.initial_width_scale) {
    if (chain_.size() < 2)
      throw config_error("lattice chain needs at least two epochs");
    if (!(temperature_ > 0.0))
      throw config_error("temperature must be positive");
    const int D = spec_.dim();
    for (std::size_t s = 0; s < chain_.size(); ++s) {
      if (static_cast<int>(chain_[s].values.size()) != D)
        throw config_error("lattice chain state dimension mismatch");
      if (s > 0 && chain_[s].epoch != chain_[s - 1].epoch + 1)
        throw config_error("lattice chain epochs must be consecutive");
      for (int d = 0; d < D; ++d) {
        const Variable& v = spec_.variable_of_dim(d);
        if (chain_[s].values[d] < v.lo || chain_[s].values[d] > v.hi)
          throw validation_error("lattice chain state outside the range of " +
                                 spec_.dim_name(d));
      }
    }
    base_width_.resize(D);
    GeometryBundle b0 = geom_.bundle(chain_.front().values,
                                     GeometryLevel::metric,
                                     chain_.front().epoch);
    for (int d = 0; d < D; ++d)
      base_width_[d] = std::sqrt(b0.g_upper(d, d) * spec_.dt);
    diag_.cell_proposals.assign(spec_.n_cells(), 0);
    diag_.cell_accepts.assign(spec_.n_cells(), 0);
    step_action_.resize(chain_.size() - 1);
    for (std::size_t s = 0; s + 1 < chain_.size(); ++s)
      step_action_[s] = step_action(s);
  }

  const std::vector<LatticeState>& chain() const { return chain_; }
  const SweepDiagnostics& diagnostics() const { return diag_; }
  double temperature() const { return temperature_; }
  void set_temperature(double t) {
    if (!(t > 0.0)) throw config_error("temperature must be positive");
    temperature_ = t;
  }

  double total_action() const {
    double a = 0.0;
    for (double s : step_action_) a += s;
    return a;
  }

  /// One full checkerboard sweep over all free (epoch, cell) sites.
  void sweep() {
    const int S = static_cast<int>(chain_.size());
    const int first = opt_.fix_first ? 1 : 0;
    const int last = opt_.fix_last ? S - 2 : S - 1;
    for (int color = 0; color < 2; ++color)
      for (int s = first; s <= last; ++s)
        for (int cell = 0; cell < spec_.n_cells(); ++cell)
          if (cell_color(cell) == color) update_site(s, cell);
    ++diag_.sweeps;
    diag_.action_trace.push_back(total_action());
    if (tuning_) maybe_tune();
  }

  /// n sweeps; after burn-in completes, verifies the tuned acceptance rate
  /// is not degenerate.
  void run(int n_sweeps) {
    for (int k = 0; k < n_sweeps; ++k) sweep();
  }

  /// Freezes tuning and validates the acceptance rate; called automatically
  /// once burn-in sweeps have elapsed.
  void finalize_tuning() {
    if (!tuning_) return;
    tuning_ = false;
    diag_.width_scale = scale_;
    double rate = window_props_ > 0
                      ? static_cast<double>(window_accepts_) /
                            static_cast<double>(window_props_)
                      : 0.0;
    if (rate < 0.05 || rate > 0.95)
      throw nonconvergence_error(
          "lattice sweep acceptance rate " + std::to_string(rate) +
          " is degenerate after tuning; adjust the step size or model");
  }

private:
  int cell_color(int cell) const {
    int r = cell / spec_.lattice.cols;
    int c = cell % spec_.lattice.cols;
    return (r + c) % 2;
  }

  double step_action(std::size_t s) const {
    return spec_.dt *
           lattice_lagrangian(geom_, chain_[s], chain_[s + 1], opt_.disc);
  }

  void update_site(int s, int cell) {
    const int n_vars = spec_.n_vars();
    std::vector<double> old_vals(n_vars);
    std::vector<double> prop(n_vars);
    bool in_range = true;
    for (int v = 0; v < n_vars; ++v) {
      int d = spec_.flat_dim(v, cell);
      old_vals[v] = chain_[s].values[d];
      prop[v] = old_vals[v] + rng_.normal() * scale_ * base_width_[d];
      const Variable& var = spec_.variable_of_dim(d);
      if (prop[v] < var.lo || prop[v] > var.hi) in_range = false;
    }
    ++diag_.cell_proposals[cell];
    ++window_props_;
    if (!in_range) return;

    const int lo_step = std::max(s - 1, 0);
    const int hi_step = std::min(s, static_cast<int>(chain_.size()) - 2);
    double old_action = 0.0;
    for (int t = lo_step; t <= hi_step; ++t) old_action += step_action_[t];
    for (int v = 0; v < n_vars; ++v)
      chain_[s].values[spec_.flat_dim(v, cell)] = prop[v];
    double new_action = 0.0;
    std::vector<double> new_steps(hi_step - lo_step + 1);
    bool ok = true;
    try {
      for (int t = lo_step; t <= hi_step; ++t) {
        new_steps[t - lo_step] = step_action(t);
        new_action += new_steps[t - lo_step];
      }
    } catch (const numerical_error&) {
      ok = false;
    }
    double log_accept = -(new_action - old_action) / temperature_;
    if (ok && std::log(rng_.uniform() + 1e-300) < log_accept) {
      for (int t = lo_step; t <= hi_step; ++t)
        step_action_[t] = new_steps[t - lo_step];
      ++diag_.cell_accepts[cell];
      ++window_accepts_;
    } else {
      for (int v = 0; v < n_vars; ++v)
        chain_[s].values[spec_.flat_dim(v, cell)] = old_vals[v];
    }
  }

  void maybe_tune() {
    if (diag_.sweeps >= opt_.burn_in_sweeps) {
      finalize_tuning();  // judges the window accumulated since last reset
      return;
    }
    if (diag_.sweeps % opt_.tune_interval_sweeps == 0 && window_props_ > 0) {
      double rate = static_cast<double>(window_accepts_) /
                    static_cast<double>(window_props_);
      if (rate < opt_.acceptance_lo)
        scale_ /= 1.3;
      else if (rate > opt_.acceptance_hi)
        scale_ *= 1.3;
      window_props_ = window_accepts_ = 0;
    }
  }

  const GeometryEngine& geom_;
  const ModelSpec& spec_;
  std::vector<LatticeState> chain_;
  double temperature_;
  SweepOptions opt_;
  RandomStream rng_;
  double scale_;
  std::vector<double> base_width_;
  std::vector<double> step_action_;
  SweepDiagnostics diag_;
  bool tuning_ = true;
  long window_props_ = 0;
  long window_accepts_ = 0;
};

/// One-shot form of the sweep operation: advances the chain by one
/// checkerboard sweep and reports diagnostics.
inline SweepDiagnostics checkerboard_sweep(const GeometryEngine& geom,
                                           std::vector<LatticeState>& chain,
                                           double temperature,
                                           std::uint64_t seed,
                                           const SweepOptions& opt = {}) {
  LatticeSampler sampler(geom, chain, temperature, seed, opt);
  sampler.sweep();
  chain = sampler.chain();
  return sampler.diagnostics();
}

/// Constant-valued chain builder: every epoch set to the same joint state.
inline std::vector<LatticeState> constant_chain(
    const ModelSpec& spec, const std::vector<double>& values, int epochs,
    int first_epoch = 0) {
  if (epochs < 2) throw config_error("chain needs at least two epochs");
  if (static_cast<int>(values.size()) != spec.dim())
    throw config_error("chain state dimension does not match the model");
  std::vector<LatticeState> chain(epochs);
  for (int s = 0; s < epochs; ++s)
    chain[s] = LatticeState{first_epoch + s, values};
  return chain;
}

}  // namespace statpath
