#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/geometry.hpp"
#include "statpath/mesh.hpp"
#include "statpath/model.hpp"

namespace statpath {

enum class FpeMethod { explicit_euler, crank_nicolson };

struct FpeOptions {
  BoundaryMode boundary = BoundaryMode::reflecting;
  FpeMethod method = FpeMethod::explicit_euler;
  // Explicit stepping subdivides to meet the stability bound by default;
  // disabling that turns an over-long step into an error instead.
  bool allow_substeps = true;
  double stability_safety = 0.9;
  int epoch = 0;  // epoch index used for scheduled coefficients
};

/// Generator matrix A of dP/dt = A P over mesh cells, built from
/// conservative face fluxes:
///   F^G = a_eff P - (g^{GG}/2) dP/dM^G - (1/2) sum_{G'!=G} g^{GG'} dP/dM^{G'}
/// with a_eff = g^G - (1/2) sum_{G'} d g^{GG'}/dM^{G'}, plus a diagonal VP
/// term. Drift-vs-diffusion face weighting uses exponential-fitting weights,
/// which keep off-diagonal stencil entries non-negative and make the
/// constant-coefficient stationary profile exact.
///
/// Supported for at most 3 total dimensions; this solver exists as an
/// independent oracle, not a production propagator.
class FDOperator {
public:
  FDOperator(const ModelSpec& spec, const FpeOptions& opt = {})
      : mesh_(spec.mesh()), opt_(opt) {
    if (spec.dim() > 3)
      throw config_error(
          "finite-difference propagation supports at most 3 dimensions; use "
          "the transition-kernel propagator instead");
    build(spec);
  }

  const StateMesh& mesh() const { return mesh_; }
  const Eigen::SparseMatrix<double>& matrix() const { return A_; }
  const FpeOptions& options() const { return opt_; }

  /// Largest explicit Euler step meeting the positivity/stability bound.
  double max_stable_dt() const {
    double m = 0.0;
    for (int k = 0; k < A_.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(A_, k); it; ++it)
        if (it.row() == it.col()) m = std::max(m, std::abs(it.value()));
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return opt_.stability_safety / m;
  }

private:
  /// Exponential-fitting weight: the fraction of the advected mass taken
  /// from the downstream cell. delta(w) = 1/w - 1/(e^w - 1), delta(0)=1/2.
  static double fitting_weight(double w) {
    if (std::abs(w) < 1e-6) return 0.5 - w / 12.0;
    if (w > 700.0) return 1.0 / w;
    if (w < -700.0) return 1.0 / w + 1.0;
    return 1.0 / w - 1.0 / std::expm1(w);
  }

  void build(const ModelSpec& spec) {
    GeometryEngine geom(spec);
    const int D = mesh_.dim();
    const std::size_t N = mesh_.total_cells();
    std::vector<Eigen::Triplet<double>> trip;

    // One pass per dimension over all interior faces.
    for (int G = 0; G < D; ++G) {
      const double dM = mesh_.axis(G).spacing();
      std::vector<int> mi(D, 0);
      // Enumerate cells; the face considered is (mi, mi + e_G).
      for (std::size_t flat = 0; flat < N; ++flat) {
        mi = mesh_.multi_index(flat);
        if (mi[G] + 1 >= mesh_.axis(G).n) continue;  // no upper face partner
        std::vector<double> face = mesh_.cell_center(mi);
        face[G] += 0.5 * dM;

        GeometryBundle b = geom.bundle(face, GeometryLevel::drift,
                                       opt_.epoch);
        double a_eff = b.g_drift[G];
        for (int Gp = 0; Gp < D; ++Gp)
          a_eff -= 0.5 * b.d_g_upper[Gp](G, Gp);
        const double diff = 0.5 * b.g_upper(G, G);
        if (!(diff > 0.0))
          throw numerical_error(
              "diffusion vanished on a face; the generator would lose "
              "parabolicity");

        std::vector<int> hi_mi = mi;
        hi_mi[G] += 1;
        const std::size_t lo = flat;
        const std::size_t hi = mesh_.flat_index(hi_mi);

        // Flux as a linear form over cell weights; each contribution c_j P_j
        // enters cell lo with -c_j/dM and cell hi with +c_j/dM, so columns
        // conserve exactly.
        auto add_flux = [&](std::size_t j, double c) {
          trip.emplace_back(static_cast<int>(lo), static_cast<int>(j),
                            -c / dM);
          trip.emplace_back(static_cast<int>(hi), static_cast<int>(j),
                            c / dM);
        };

        const double w = a_eff * dM / diff;
        const double delta = fitting_weight(w);
        add_flux(lo, a_eff * (1.0 - delta) + diff / dM);
        add_flux(hi, a_eff * delta - diff / dM);

        // Cross-diffusion: -(1/2) g^{GG'} dP/dM^{G'} at the face, with the
        // face derivative averaged from the two adjacent cells' central
        // differences (mirrored at edges, consistent with zero flux).
        for (int Gp = 0; Gp < D; ++Gp) {
          if (Gp == G) continue;
          double cross = -0.5 * b.g_upper(G, Gp);
          if (cross == 0.0) continue;
          const double dMp = mesh_.axis(Gp).spacing();
          for (int side = 0; side < 2; ++side) {
            const std::vector<int>& base = (side == 0) ? mi : hi_mi;
            for (int dir = -1; dir <= 1; dir += 2) {
              std::vector<int> nb = base;
              nb[Gp] = reflect_index(nb[Gp] + dir, mesh_.axis(Gp).n);
              add_flux(mesh_.flat_index(nb),
                       cross * 0.5 * dir / (2.0 * dMp));
            }
          }
        }
      }
    }

    // Potential term: +V P on the diagonal.
    if (spec.has_potential()) {
      for (std::size_t flat = 0; flat < N; ++flat) {
        double v = spec.potential->value(mesh_.cell_center(flat), opt_.epoch);
        trip.emplace_back(static_cast<int>(flat), static_cast<int>(flat), v);
      }
    }

    if (opt_.boundary == BoundaryMode::absorbing) {
      // Absorbing edges: mass crossing the outermost faces leaves the mesh.
      // Realized as an outflow-only flux at each boundary face.
      for (int G = 0; G < D; ++G) {
        const double dM = mesh_.axis(G).spacing();
        for (std::size_t flat = 0; flat < N; ++flat) {
          auto mi = mesh_.multi_index(flat);
          for (int side = 0; side < 2; ++side) {
            bool at_edge = (side == 0) ? (mi[G] == 0)
                                       : (mi[G] == mesh_.axis(G).n - 1);
            if (!at_edge) continue;
            std::vector<double> face = mesh_.cell_center(mi);
            face[G] += (side == 0 ? -0.5 : 0.5) * dM;
            GeometryBundle b =
                geom.bundle(face, GeometryLevel::drift, opt_.epoch);
            double diff = 0.5 * b.g_upper(G, G);
            // Outflow approximated by half-cell diffusion against a zero
            // ghost value plus any outward advection.
            double a_eff = b.g_drift[G];
            for (int Gp = 0; Gp < D; ++Gp)
              a_eff -= 0.5 * b.d_g_upper[Gp](G, Gp);
            double outward = (side == 0) ? -a_eff : a_eff;
            double rate = diff / (dM * dM) + std::max(outward, 0.0) / dM;
            trip.emplace_back(static_cast<int>(flat), static_cast<int>(flat),
                              -rate);
          }
        }
      }
    }

    A_.resize(static_cast<int>(N), static_cast<int>(N));
    A_.setFromTriplets(trip.begin(), trip.end());
    A_.makeCompressed();
  }

  StateMesh mesh_;
  FpeOptions opt_;
  Eigen::SparseMatrix<double> A_;
};

inline FDOperator build_fd_operator(const ModelSpec& spec,
                                    const FpeOptions& opt = {}) {
  return FDOperator(spec, opt);
}

/// Advances P0 by time t under the operator, explicit Euler (subdivided to
/// the stability bound) or Crank-Nicolson. Mass is conserved by construction
/// for V=0 with reflecting boundaries; emerging negative weights beyond
/// -1e-12 are an error, never clipped.
inline Distribution propagate_fpe(const FDOperator& op,
                                  const Distribution& P0, double t,
                                  double dt_hint = 0.0) {
  if (t < 0.0) throw config_error("propagation time must be non-negative");
  if (P0.mesh() != op.mesh())
    throw config_error("distribution mesh does not match the operator");
  if (t == 0.0) return P0;

  const std::size_t N = op.mesh().total_cells();
  Eigen::VectorXd p(N);
  for (std::size_t i = 0; i < N; ++i) p[i] = P0[i];

  const FpeOptions& opt = op.options();
  if (opt.method == FpeMethod::explicit_euler) {
    double dt = (dt_hint > 0.0) ? dt_hint : t;
    double bound = op.max_stable_dt();
    if (dt > bound) {
      if (!opt.allow_substeps)
        throw numerical_error(
            "explicit step violates the stability bound; max admissible dt "
            "is " +
            std::to_string(bound));
      dt = bound;
    }
    long n = static_cast<long>(std::ceil(t / dt - 1e-12));
    if (n < 1) n = 1;
    double h = t / static_cast<double>(n);
    for (long s = 0; s < n; ++s) p += h * (op.matrix() * p);
  } else {
    double dt = (dt_hint > 0.0) ? dt_hint : std::min(t, op.max_stable_dt());
    long n = static_cast<long>(std::ceil(t / dt - 1e-12));
    if (n < 1) n = 1;
    double h = t / static_cast<double>(n);
    Eigen::SparseMatrix<double> I(static_cast<int>(N), static_cast<int>(N));
    I.setIdentity();
    Eigen::SparseMatrix<double> lhs = I - (h / 2.0) * op.matrix();
    Eigen::SparseMatrix<double> rhs = I + (h / 2.0) * op.matrix();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(lhs);
    if (lu.info() != Eigen::Success)
      throw numerical_error("implicit step factorization failed");
    for (long s = 0; s < n; ++s) {
      Eigen::VectorXd q = rhs * p;
      p = lu.solve(q);
    }
  }

  std::vector<double> w(N);
  for (std::size_t i = 0; i < N; ++i) {
    if (p[i] < -1e-12)
      throw numerical_error(
          "propagation produced a negative weight beyond tolerance "
          "(discretization bug, not clipped)");
    w[i] = p[i];
  }
  return Distribution(op.mesh(), std::move(w));
}

}  // namespace statpath
