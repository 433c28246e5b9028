#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/rng.hpp"

namespace statpath {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;

/// Central finite-difference gradient with per-coordinate scaled steps.
inline Eigen::VectorXd fd_gradient(const ObjectiveFn& f,
                                   const Eigen::VectorXd& x,
                                   double rel_step = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (int i = 0; i < x.size(); ++i) {
    double h = rel_step * std::max(1.0, std::abs(x[i]));
    double xi = x[i];
    xp[i] = xi + h;
    double fp = f(xp);
    xp[i] = xi - h;
    double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct QuasiNewtonOptions {
  int max_iterations = 500;
  double grad_tol = 1e-10;
  double step_tol = 1e-14;
  double fd_rel_step = 1e-6;
};

struct QuasiNewtonResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// BFGS with backtracking Armijo line search. The gradient callback may be
/// empty, in which case central finite differences are used.
inline QuasiNewtonResult quasi_newton_minimize(
    const ObjectiveFn& f, const Eigen::VectorXd& x0,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad = {},
    const QuasiNewtonOptions& opt = {}) {
  const int n = static_cast<int>(x0.size());
  auto gradient = [&](const Eigen::VectorXd& x) {
    return grad ? grad(x) : fd_gradient(f, x, opt.fd_rel_step);
  };

  QuasiNewtonResult res;
  Eigen::VectorXd x = x0;
  double fx = f(x);
  Eigen::VectorXd g = gradient(x);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);  // inverse Hessian

  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it;
    double gn = g.norm();
    if (gn <= opt.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd p = -H * g;
    if (p.dot(g) >= 0.0) {  // lost descent direction; reset curvature
      H.setIdentity();
      p = -g;
    }
    double alpha = 1.0;
    double slope = g.dot(p);
    double f_new = fx;
    Eigen::VectorXd x_new = x;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = x + alpha * p;
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted || (x_new - x).norm() <= opt.step_tol) break;
    Eigen::VectorXd g_new = gradient(x_new);
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      Eigen::VectorXd Hy = H * y;
      double yHy = y.dot(Hy);
      // BFGS inverse update.
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }
    x = x_new;
    fx = f_new;
    g = g_new;
  }
  res.x = x;
  res.value = fx;
  res.grad_norm = g.norm();
  if (res.grad_norm <= opt.grad_tol) res.converged = true;
  return res;
}

struct NelderMeadOptions {
  int max_evaluations = 20000;
  double f_tol = 1e-12;
  double x_tol = 1e-12;
  double initial_step = 0.1;  // relative simplex size
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Downhill simplex with standard reflection/expansion/contraction/shrink.
inline NelderMeadResult nelder_mead_minimize(const ObjectiveFn& f,
                                             const Eigen::VectorXd& x0,
                                             const NelderMeadOptions& opt = {}) {
  const int n = static_cast<int>(x0.size());
  NelderMeadResult res;
  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(x0);
  vals.push_back(f(x0));
  res.evaluations = 1;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd p = x0;
    double h = opt.initial_step * std::max(1.0, std::abs(x0[i]));
    p[i] += h;
    pts.push_back(p);
    vals.push_back(f(p));
    ++res.evaluations;
  }

  auto order = [&] {
    std::vector<int> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return vals[a] < vals[b]; });
    std::vector<Eigen::VectorXd> p2;
    std::vector<double> v2;
    for (int i : idx) {
      p2.push_back(pts[i]);
      v2.push_back(vals[i]);
    }
    pts.swap(p2);
    vals.swap(v2);
  };

  while (res.evaluations < opt.max_evaluations) {
    order();
    if (std::abs(vals.back() - vals.front()) <=
            opt.f_tol * (std::abs(vals.front()) + opt.f_tol) &&
        (pts.back() - pts.front()).norm() <= opt.x_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[i];
    centroid /= static_cast<double>(n);

    auto eval = [&](const Eigen::VectorXd& p) {
      ++res.evaluations;
      return f(p);
    };
    Eigen::VectorXd xr = centroid + (centroid - pts.back());
    double fr = eval(xr);
    if (fr < vals.front()) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts.back());
      double fe = eval(xe);
      if (fe < fr) {
        pts.back() = xe;
        vals.back() = fe;
      } else {
        pts.back() = xr;
        vals.back() = fr;
      }
    } else if (fr < vals[n - 1]) {
      pts.back() = xr;
      vals.back() = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (pts.back() - centroid);
      double fc = eval(xc);
      if (fc < vals.back()) {
        pts.back() = xc;
        vals.back() = fc;
      } else {
        for (std::size_t i = 1; i < pts.size(); ++i) {
          pts[i] = pts.front() + 0.5 * (pts[i] - pts.front());
          vals[i] = eval(pts[i]);
        }
      }
    }
  }
  order();
  res.x = pts.front();
  res.value = vals.front();
  return res;
}

struct AnnealingOptions {
  // Initial temperature is probed so roughly this fraction of uphill moves
  // accepts; cooling multiplies temperature by `cooling` every
  // `evals_per_level_per_dim * n` evaluations; a few independent restarts
  // keep the best result.
  double initial_acceptance = 0.8;
  double cooling = 0.95;
  int evals_per_level_per_dim = 50;
  int restarts = 3;
  int max_evaluations_per_restart = 30000;
  double final_temperature_ratio = 1e-4;
  double step_scale = 0.1;  // proposal scale relative to bound width
};

struct AnnealingTracePoint {
  long evaluation = 0;
  double objective = 0.0;
  double temperature = 0.0;  // +inf during the initial probe walk
};

struct AnnealingResult {
  Eigen::VectorXd x;
  double value = 0.0;
  long evaluations = 0;
  std::vector<AnnealingTracePoint> trace;  // best-so-far improvements
};

/// Simulated annealing over a box. The objective may return +infinity to
/// reject infeasible points without counting them as evaluated states.
inline AnnealingResult simulated_annealing_minimize(
    const ObjectiveFn& f, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
    const Eigen::VectorXd& x0, std::uint64_t seed,
    const AnnealingOptions& opt = {}) {
  const int n = static_cast<int>(x0.size());
  AnnealingResult best;
  best.value = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < opt.restarts; ++restart) {
    RandomStream rng(seed, static_cast<std::uint64_t>(restart) + 1);
    double current_T = std::numeric_limits<double>::infinity();
    auto record = [&](double v, const Eigen::VectorXd& at) {
      if (v < best.value) {
        best.value = v;
        best.x = at;
        best.trace.push_back({best.evaluations, v, current_T});
      }
    };
    Eigen::VectorXd x = x0;
    if (restart > 0)
      for (int i = 0; i < n; ++i)
        x[i] = lo[i] + rng.uniform() * (hi[i] - lo[i]);
    double fx = f(x);
    ++best.evaluations;
    record(fx, x);

    auto propose = [&](const Eigen::VectorXd& from) {
      Eigen::VectorXd p = from;
      for (int i = 0; i < n; ++i) {
        p[i] += rng.normal() * opt.step_scale * (hi[i] - lo[i]);
        // Fold back into the box so proposals stay feasible.
        while (p[i] < lo[i] || p[i] > hi[i]) {
          if (p[i] < lo[i]) p[i] = 2.0 * lo[i] - p[i];
          if (p[i] > hi[i]) p[i] = 2.0 * hi[i] - p[i];
        }
      }
      return p;
    };

    // Probe uphill move sizes to set the initial temperature.
    double uphill_sum = 0.0;
    int uphill_count = 0;
    {
      Eigen::VectorXd xp = x;
      double fp = fx;
      for (int probe = 0; probe < std::max(20, 2 * n); ++probe) {
        Eigen::VectorXd q = propose(xp);
        double fq = f(q);
        ++best.evaluations;
        if (std::isfinite(fq)) {
          if (fq > fp) {
            uphill_sum += fq - fp;
            ++uphill_count;
          }
          xp = q;
          fp = fq;
          record(fq, q);
        }
      }
    }
    double mean_uphill = (uphill_count > 0) ? uphill_sum / uphill_count : 1.0;
    double T0 = -mean_uphill / std::log(opt.initial_acceptance);
    if (!(T0 > 0.0) || !std::isfinite(T0)) T0 = 1.0;
    current_T = T0;
    const int level_len = opt.evals_per_level_per_dim * n;

    int evals = 0;
    int level_count = 0;
    while (evals < opt.max_evaluations_per_restart &&
           current_T > T0 * opt.final_temperature_ratio) {
      Eigen::VectorXd q = propose(x);
      double fq = f(q);
      ++evals;
      ++best.evaluations;
      if (std::isfinite(fq)) {
        double dE = fq - fx;
        if (dE <= 0.0 || rng.uniform() < std::exp(-dE / current_T)) {
          x = q;
          fx = fq;
          record(fx, x);
        }
      }
      if (++level_count >= level_len) {
        level_count = 0;
        current_T *= opt.cooling;
      }
    }
  }
  if (!best.x.size())
    throw nonconvergence_error("annealing found no finite objective value");
  return best;
}

}  // namespace statpath
