#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/mesh.hpp"
#include "statpath/model.hpp"
#include "statpath/rng.hpp"

namespace statpath {

enum class BoundaryMode { reflecting, absorbing };

/// One realization of the stochastic rate equations.
struct Trajectory {
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<std::vector<double>> states;  // per epoch, flattened dims

  std::size_t n_epochs() const { return states.size(); }
  double time_of(std::size_t s) const { return dt * static_cast<double>(s); }
};

struct LangevinOptions {
  BoundaryMode boundary = BoundaryMode::reflecting;
  bool store_trajectories = false;
  // Joint histograms are kept per epoch only when the mesh is no larger than
  // this; per-dimension marginal histograms are always kept.
  std::size_t histogram_cell_budget = 1u << 20;
};

/// Ensemble summary: per-epoch sample moments (unbiased covariance), joint
/// histograms on the model mesh (when affordable), per-dimension marginal
/// histograms, and optionally the raw trajectories.
class EnsembleResult {
public:
  EnsembleResult(const ModelSpec& spec, int n_steps,
                 const LangevinOptions& opt)
      : mesh_(spec.mesh()), dt_(spec.dt), n_dims_(spec.dim()),
        n_epochs_(n_steps + 1), boundary_(opt.boundary) {
    joint_histograms_ = mesh_.total_cells() <= opt.histogram_cell_budget;
    if (joint_histograms_)
      joint_counts_.assign(
          static_cast<std::size_t>(n_epochs_) * mesh_.total_cells(), 0.0);
    marginal_counts_.assign(n_dims_, {});
    for (int d = 0; d < n_dims_; ++d)
      marginal_counts_[d].assign(
          static_cast<std::size_t>(n_epochs_) * mesh_.axis(d).n, 0.0);
    sum_.assign(static_cast<std::size_t>(n_epochs_) * n_dims_, 0.0);
    sum2_.assign(static_cast<std::size_t>(n_epochs_) * n_dims_ * n_dims_,
                 0.0);
    count_.assign(n_epochs_, 0);
  }

  void absorb_state(int epoch, const std::vector<double>& x) {
    ++count_[epoch];
    for (int d = 0; d < n_dims_; ++d) {
      sum_[static_cast<std::size_t>(epoch) * n_dims_ + d] += x[d];
      for (int e = 0; e < n_dims_; ++e)
        sum2_[(static_cast<std::size_t>(epoch) * n_dims_ + d) * n_dims_ + e] +=
            x[d] * x[e];
    }
    auto mi = mesh_.locate(x);
    if (joint_histograms_)
      joint_counts_[static_cast<std::size_t>(epoch) * mesh_.total_cells() +
                    mesh_.flat_index(mi)] += 1.0;
    for (int d = 0; d < n_dims_; ++d)
      marginal_counts_[d][static_cast<std::size_t>(epoch) * mesh_.axis(d).n +
                          mi[d]] += 1.0;
  }

  void add_trajectory(Trajectory t) { trajectories_.push_back(std::move(t)); }

  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const StateMesh& mesh() const { return mesh_; }
  int n_epochs() const { return n_epochs_; }
  int n_dims() const { return n_dims_; }
  double dt() const { return dt_; }
  long count_at(int epoch) const { return count_[epoch]; }

  int epoch_of_time(double t) const {
    double s = t / dt_;
    int epoch = static_cast<int>(std::lround(s));
    if (std::abs(s - epoch) > 1e-9 * std::max(1.0, std::abs(s)))
      throw config_error("time " + std::to_string(t) +
                         " is not an integer number of steps");
    if (epoch < 0 || epoch >= n_epochs_)
      throw config_error("time " + std::to_string(t) +
                         " is outside the simulated horizon");
    return epoch;
  }

  bool has_joint_histograms() const { return joint_histograms_; }

  /// Normalized joint histogram on the model mesh at a simulated epoch time.
  Distribution histogram_at(double t) const {
    if (!joint_histograms_)
      throw config_error(
          "joint histograms were not kept (mesh exceeds the budget)");
    int epoch = epoch_of_time(t);
    std::vector<double> w(
        joint_counts_.begin() +
            static_cast<std::ptrdiff_t>(epoch) *
                static_cast<std::ptrdiff_t>(mesh_.total_cells()),
        joint_counts_.begin() +
            (static_cast<std::ptrdiff_t>(epoch) + 1) *
                static_cast<std::ptrdiff_t>(mesh_.total_cells()));
    Distribution out(mesh_, std::move(w));
    out.normalize();
    return out;
  }

  /// Normalized marginal histogram of one dimension at an epoch time.
  std::vector<double> marginal_histogram_at(double t, int d) const {
    int epoch = epoch_of_time(t);
    int n = mesh_.axis(d).n;
    std::vector<double> w(
        marginal_counts_[d].begin() + static_cast<std::ptrdiff_t>(epoch) * n,
        marginal_counts_[d].begin() +
            (static_cast<std::ptrdiff_t>(epoch) + 1) * n);
    double s = 0.0;
    for (double v : w) s += v;
    if (s > 0.0)
      for (double& v : w) v /= s;
    return w;
  }

  std::vector<double> mean_at(int epoch) const {
    std::vector<double> m(n_dims_);
    long n = count_[epoch];
    if (n == 0) throw numerical_error("no surviving trajectories at epoch");
    for (int d = 0; d < n_dims_; ++d)
      m[d] = sum_[static_cast<std::size_t>(epoch) * n_dims_ + d] /
             static_cast<double>(n);
    return m;
  }

  /// Unbiased sample covariance across trajectories at one epoch.
  double covariance_at(int epoch, int d, int e) const {
    long n = count_[epoch];
    if (n < 2)
      throw numerical_error("need at least two trajectories for covariance");
    double sd = sum_[static_cast<std::size_t>(epoch) * n_dims_ + d];
    double se = sum_[static_cast<std::size_t>(epoch) * n_dims_ + e];
    double sde =
        sum2_[(static_cast<std::size_t>(epoch) * n_dims_ + d) * n_dims_ + e];
    return (sde - sd * se / static_cast<double>(n)) /
           static_cast<double>(n - 1);
  }

  double variance_at(int epoch, int d) const {
    return covariance_at(epoch, d, d);
  }

private:
  StateMesh mesh_;
  double dt_;
  int n_dims_;
  int n_epochs_;
  BoundaryMode boundary_;
  bool joint_histograms_ = false;
  std::vector<double> joint_counts_;
  std::vector<std::vector<double>> marginal_counts_;
  std::vector<double> sum_;
  std::vector<double> sum2_;
  std::vector<long> count_;
  std::vector<Trajectory> trajectories_;
};

namespace langevin_detail {

/// Mirrors an overshoot back into [lo, hi].
inline double reflect_value(double x, double lo, double hi) {
  for (int guard = 0; guard < 64; ++guard) {
    if (x >= lo && x <= hi) return x;
    if (x < lo)
      x = 2.0 * lo - x;
    else
      x = 2.0 * hi - x;
  }
  throw numerical_error("trajectory overshoot too large to reflect");
}

}  // namespace langevin_detail

/// One Stratonovich-consistent step: Euler predictor, then two fixed-point
/// refinements evaluating drift and noise at the midpoint
/// 0.5 * (M_s + M_{s+1}), sharing the same noise increments.
/// Returns false under an absorbing boundary when the step exits the range
/// (the caller stops the trajectory); reflecting mirrors the overshoot.
inline bool langevin_step(const ModelSpec& spec, std::vector<double>& state,
                          double dt, RandomStream& rng, BoundaryMode boundary,
                          int epoch = 0) {
  const int D = spec.dim();
  const int NC = spec.noise.channels();
  const double sqrt_dt = std::sqrt(dt);
  std::vector<double> w(NC);
  for (int i = 0; i < NC; ++i) w[i] = rng.normal() * sqrt_dt;

  std::vector<double> next(D), mid(D);
  auto apply = [&](const std::vector<double>& eval_point) {
    for (int d = 0; d < D; ++d)
      next[d] = state[d] + spec.drift_value(d, eval_point, epoch) * dt;
    for (int i = 0; i < NC; ++i)
      for (const auto& [d, f] : spec.noise.channel_entries(i))
        next[d] += f->value(eval_point, epoch) * w[i];
  };
  apply(state);  // Euler predictor
  for (int iter = 0; iter < 2; ++iter) {
    for (int d = 0; d < D; ++d) mid[d] = 0.5 * (state[d] + next[d]);
    apply(mid);
  }

  for (int d = 0; d < D; ++d) {
    if (!std::isfinite(next[d]))
      throw numerical_error("state became non-finite in dimension " +
                            spec.dim_name(d));
    const Variable& v = spec.variable_of_dim(d);
    if (next[d] < v.lo || next[d] > v.hi) {
      if (boundary == BoundaryMode::absorbing) return false;
      next[d] = langevin_detail::reflect_value(next[d], v.lo, v.hi);
    }
  }
  state = next;
  return true;
}

/// Simulates n_traj independent trajectories for n_steps steps of the
/// model's dt, starting from a fixed point. Deterministic given the seed:
/// each trajectory uses its own substream keyed by (seed, trajectory index),
/// so any execution order gives identical results.
inline EnsembleResult simulate_ensemble(const ModelSpec& spec,
                                        const std::vector<double>& start,
                                        long n_traj, int n_steps,
                                        std::uint64_t seed,
                                        const LangevinOptions& opt = {}) {
  if (n_traj < 1) throw config_error("ensemble needs at least one trajectory");
  if (n_steps < 0) throw config_error("step count must be non-negative");
  if (static_cast<int>(start.size()) != spec.dim())
    throw config_error("start point dimension does not match model");
  for (int d = 0; d < spec.dim(); ++d) {
    const Variable& v = spec.variable_of_dim(d);
    if (start[d] < v.lo || start[d] > v.hi)
      throw config_error("start point outside range of " + spec.dim_name(d));
  }

  EnsembleResult result(spec, n_steps, opt);
  for (long tr = 0; tr < n_traj; ++tr) {
    RandomStream rng(seed, static_cast<std::uint64_t>(tr));
    std::vector<double> x = start;
    Trajectory traj;
    if (opt.store_trajectories) {
      traj.seed = seed;
      traj.dt = spec.dt;
      traj.states.reserve(n_steps + 1);
    }
    result.absorb_state(0, x);
    if (opt.store_trajectories) traj.states.push_back(x);
    for (int s = 0; s < n_steps; ++s) {
      bool alive;
      try {
        alive = langevin_step(spec, x, spec.dt, rng, opt.boundary, s);
      } catch (const numerical_error& e) {
        throw numerical_error("trajectory " + std::to_string(tr) +
                              " at epoch " + std::to_string(s + 1) + ": " +
                              e.what());
      }
      if (!alive) break;  // absorbed; stops contributing
      result.absorb_state(s + 1, x);
      if (opt.store_trajectories) traj.states.push_back(x);
    }
    if (opt.store_trajectories) result.add_trajectory(std::move(traj));
  }
  return result;
}

/// Convenience overload: samples each trajectory's start from a distribution
/// (cell by cumulative weight, then uniform within the cell), using the
/// trajectory's own substream so determinism is preserved.
inline EnsembleResult simulate_ensemble(const ModelSpec& spec,
                                        const Distribution& initial,
                                        long n_traj, int n_steps,
                                        std::uint64_t seed,
                                        const LangevinOptions& opt = {}) {
  if (n_traj < 1) throw config_error("ensemble needs at least one trajectory");
  if (initial.mesh() != spec.mesh())
    throw config_error("initial distribution mesh does not match model");

  // Cumulative masses for inverse-CDF cell sampling.
  std::vector<double> cdf(initial.weights().size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    acc += initial.weights()[i];
    cdf[i] = acc;
  }
  if (!(acc > 0.0)) throw config_error("initial distribution has no mass");

  EnsembleResult result(spec, n_steps, opt);
  const StateMesh& mesh = initial.mesh();
  for (long tr = 0; tr < n_traj; ++tr) {
    RandomStream rng(seed, static_cast<std::uint64_t>(tr));
    double u = rng.uniform() * acc;
    std::size_t cell =
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    if (cell >= cdf.size()) cell = cdf.size() - 1;
    auto mi = mesh.multi_index(cell);
    std::vector<double> x(spec.dim());
    for (int d = 0; d < spec.dim(); ++d) {
      const MeshAxis& a = mesh.axis(d);
      x[d] = a.lo + (mi[d] + rng.uniform()) * a.spacing();
    }
    Trajectory traj;
    if (opt.store_trajectories) {
      traj.seed = seed;
      traj.dt = spec.dt;
    }
    result.absorb_state(0, x);
    if (opt.store_trajectories) traj.states.push_back(x);
    for (int s = 0; s < n_steps; ++s) {
      bool alive;
      try {
        alive = langevin_step(spec, x, spec.dt, rng, opt.boundary, s);
      } catch (const numerical_error& e) {
        throw numerical_error("trajectory " + std::to_string(tr) +
                              " at epoch " + std::to_string(s + 1) + ": " +
                              e.what());
      }
      if (!alive) break;
      result.absorb_state(s + 1, x);
      if (opt.store_trajectories) traj.states.push_back(x);
    }
    if (opt.store_trajectories) result.add_trajectory(std::move(traj));
  }
  return result;
}

}  // namespace statpath
