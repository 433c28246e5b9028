#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/model.hpp"

namespace statpath {

/// How much of the derived geometry a caller needs. Each level includes the
/// previous ones.
enum class GeometryLevel {
  metric,  // g_upper, g_lower, det_g
  drift,   // + induced drift, first metric derivatives, potential
  mean,    // + mean drift h, covariant divergence
  full     // + affine connection, curvature scalar
};

/// Everything the short-time propagators need at one state-space point.
struct GeometryBundle {
  std::vector<double> point;
  Eigen::MatrixXd g_upper;  // diffusion matrix g^{GG'}
  Eigen::MatrixXd g_lower;  // its inverse, the state-space metric
  double det_g = 0.0;       // det(g_lower) > 0

  Eigen::VectorXd g_drift;                 // induced drift g^G
  std::vector<Eigen::MatrixXd> d_g_upper;  // [K] = d g_upper / dM^K
  double potential = 0.0;

  Eigen::VectorXd h;    // mean drift h^G
  double h_div = 0.0;   // covariant divergence h^G_{;G}

  std::vector<Eigen::MatrixXd> gamma;  // [F](J,K) affine connection
  double R = 0.0;                      // curvature scalar

  double log_sqrt_det() const { return 0.5 * std::log(det_g); }
};

/// Computes induced drift, metric, connection, curvature, and Lagrangian
/// values for a model. Pure functions of immutable inputs; safe to share
/// across threads.
///
/// All derivatives are exact: polynomial fields differentiate symbolically
/// and closed-form fields supply their own derivative rules. When every noise
/// entry is state- and epoch-independent the metric block is computed once at
/// construction and reused (the connection and curvature then vanish
/// identically).
class GeometryEngine {
public:
  explicit GeometryEngine(ModelSpec spec, double degeneracy_tol = 1e-12)
      : spec_(std::move(spec)), tol_(degeneracy_tol) {
    constant_metric_ = spec_.noise.all_constant();
    if (constant_metric_) {
      std::vector<double> origin(spec_.dim(), 0.0);
      cached_g_upper_ = build_g_upper(origin, 0);
      factor_metric(origin, cached_g_upper_, cached_g_lower_, cached_det_g_);
    }
  }

  const ModelSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim(); }
  bool constant_metric() const { return constant_metric_; }

  GeometryBundle bundle(const std::vector<double>& p,
                        GeometryLevel level = GeometryLevel::full,
                        int epoch = 0) const {
    GeometryBundle b;
    b.point = p;
    const int D = dim();

    if (constant_metric_) {
      b.g_upper = cached_g_upper_;
      b.g_lower = cached_g_lower_;
      b.det_g = cached_det_g_;
      if (level == GeometryLevel::metric) return b;
      b.d_g_upper.assign(D, Eigen::MatrixXd::Zero(D, D));
      b.potential = potential_value(p, epoch);
      b.g_drift = drift_values(p, epoch);  // correction vanishes
      if (level == GeometryLevel::drift) return b;
      b.h = b.g_drift;
      double div = 0.0;
      for (int G = 0; G < D; ++G)
        if (spec_.drift[G]) div += spec_.drift[G]->partial(p, G, epoch);
      b.h_div = div;
      if (level == GeometryLevel::mean) return b;
      b.gamma.assign(D, Eigen::MatrixXd::Zero(D, D));
      b.R = 0.0;
      return b;
    }

    // Noise values and derivatives, gathered once per channel entry.
    struct Entry {
      int d;
      double v;
      Eigen::VectorXd d1;   // [K]
      Eigen::MatrixXd d2;   // (K, L)
    };
    std::vector<std::vector<Entry>> channels(spec_.noise.channels());
    const bool need_d1 = level >= GeometryLevel::drift;
    const bool need_d2 = level >= GeometryLevel::mean;
    for (int i = 0; i < spec_.noise.channels(); ++i) {
      for (const auto& [d, f] : spec_.noise.channel_entries(i)) {
        Entry e;
        e.d = d;
        e.v = f->value(p, epoch);
        if (need_d1) {
          e.d1.resize(D);
          for (int K = 0; K < D; ++K) e.d1[K] = f->partial(p, K, epoch);
        }
        if (need_d2) {
          e.d2.resize(D, D);
          for (int K = 0; K < D; ++K)
            for (int L = K; L < D; ++L)
              e.d2(K, L) = e.d2(L, K) = f->second_partial(p, K, L, epoch);
        }
        channels[i].push_back(std::move(e));
      }
    }

    b.g_upper = Eigen::MatrixXd::Zero(D, D);
    for (const auto& ch : channels)
      for (const auto& a : ch)
        for (const auto& c : ch) b.g_upper(a.d, c.d) += a.v * c.v;
    factor_metric(p, b.g_upper, b.g_lower, b.det_g);
    if (level == GeometryLevel::metric) return b;

    // First metric derivatives d_K g^{GG'}.
    b.d_g_upper.assign(D, Eigen::MatrixXd::Zero(D, D));
    for (const auto& ch : channels)
      for (const auto& a : ch)
        for (const auto& c : ch)
          for (int K = 0; K < D; ++K)
            b.d_g_upper[K](a.d, c.d) += a.d1[K] * c.v + a.v * c.d1[K];

    b.potential = potential_value(p, epoch);

    // Induced drift g^G = f^G + 1/2 sum_i n_i^{G'} d_{G'} n_i^G.
    b.g_drift = drift_values(p, epoch);
    for (const auto& ch : channels)
      for (const auto& a : ch)      // supplies n_i^{G'} with G' = a.d
        for (const auto& c : ch)    // supplies d_{G'} n_i^G with G = c.d
          b.g_drift[c.d] += 0.5 * a.v * c.d1[a.d];
    if (level == GeometryLevel::drift) return b;

    // Second metric derivatives.
    std::vector<std::vector<Eigen::MatrixXd>> ddG(
        D, std::vector<Eigen::MatrixXd>(D));
    for (int K = 0; K < D; ++K)
      for (int L = K; L < D; ++L) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(D, D);
        for (const auto& ch : channels)
          for (const auto& a : ch)
            for (const auto& c : ch)
              m(a.d, c.d) += a.d2(K, L) * c.v + a.d1[K] * c.d1[L] +
                             a.d1[L] * c.d1[K] + a.v * c.d2(K, L);
        ddG[K][L] = m;
        if (L != K) ddG[L][K] = m;
      }

    // d_K g_lower = -g_lower (d_K g_upper) g_lower, and the log-determinant
    // gradient u_K = d_K ln det(g_lower) = -tr(g_lower d_K g_upper).
    std::vector<Eigen::MatrixXd> dgl(D);
    Eigen::VectorXd u(D);
    for (int K = 0; K < D; ++K) {
      dgl[K] = -b.g_lower * b.d_g_upper[K] * b.g_lower;
      u[K] = -(b.g_lower * b.d_g_upper[K]).trace();
    }

    // h^G = g^G - 1/2 sum_{G'} [ 1/2 u_{G'} g^{GG'} + d_{G'} g^{GG'} ].
    b.h = b.g_drift;
    for (int G = 0; G < D; ++G) {
      double s = 0.0;
      for (int Gp = 0; Gp < D; ++Gp)
        s += 0.5 * u[Gp] * b.g_upper(G, Gp) + b.d_g_upper[Gp](G, Gp);
      b.h[G] -= 0.5 * s;
    }

    // h^G_{;G} = sum_G [ 1/2 u_G h^G + d_G h^G ].
    {
      Eigen::MatrixXd du(D, D);  // du(K, L) = d_K u_L
      for (int K = 0; K < D; ++K)
        for (int L = 0; L < D; ++L)
          du(K, L) = -(dgl[K] * b.d_g_upper[L]).trace() -
                     (b.g_lower * ddG[K][L]).trace();

      double div = 0.0;
      for (int G = 0; G < D; ++G) {
        // d_G of the induced drift's components.
        double d_gdrift = spec_.drift[G]
                              ? spec_.drift[G]->partial(p, G, epoch)
                              : 0.0;
        for (const auto& ch : channels)
          for (const auto& a : ch)
            for (const auto& c : ch)
              if (c.d == G)
                d_gdrift += 0.5 * (a.d1[G] * c.d1[a.d] + a.v * c.d2(G, a.d));
        // d_G of the metric-divergence part of h^G.
        double d_corr = 0.0;
        for (int Gp = 0; Gp < D; ++Gp)
          d_corr += 0.5 * du(G, Gp) * b.g_upper(G, Gp) +
                    0.5 * u[Gp] * b.d_g_upper[G](G, Gp) +
                    ddG[G][Gp](G, Gp);
        double d_h = d_gdrift - 0.5 * d_corr;
        div += 0.5 * u[G] * b.h[G] + d_h;
      }
      b.h_div = div;
    }
    if (level == GeometryLevel::mean) return b;

    // Affine connection (standard Christoffel symbols of the second kind).
    b.gamma.assign(D, Eigen::MatrixXd::Zero(D, D));
    for (int F = 0; F < D; ++F)
      for (int J = 0; J < D; ++J)
        for (int K = J; K < D; ++K) {
          double s = 0.0;
          for (int L = 0; L < D; ++L)
            s += b.g_upper(L, F) *
                 (dgl[K](J, L) + dgl[J](K, L) - dgl[L](J, K));
          b.gamma[F](J, K) = b.gamma[F](K, J) = 0.5 * s;
        }

    // Curvature scalar; identically zero in one dimension.
    if (D == 1) {
      b.R = 0.0;
      return b;
    }

    // Second derivatives of g_lower, then the connection's derivatives.
    std::vector<std::vector<Eigen::MatrixXd>> ddgl(
        D, std::vector<Eigen::MatrixXd>(D));
    for (int K = 0; K < D; ++K)
      for (int L = 0; L < D; ++L)
        ddgl[K][L] = -(dgl[L] * b.d_g_upper[K] * b.g_lower +
                       b.g_lower * ddG[K][L] * b.g_lower +
                       b.g_lower * b.d_g_upper[K] * dgl[L]);

    // dgamma[M][F](J,K) = d_M Gamma^F_{JK}
    std::vector<std::vector<Eigen::MatrixXd>> dgamma(
        D, std::vector<Eigen::MatrixXd>(D, Eigen::MatrixXd::Zero(D, D)));
    for (int M = 0; M < D; ++M)
      for (int F = 0; F < D; ++F)
        for (int J = 0; J < D; ++J)
          for (int K = J; K < D; ++K) {
            double s = 0.0;
            for (int L = 0; L < D; ++L) {
              s += b.d_g_upper[M](L, F) *
                   (dgl[K](J, L) + dgl[J](K, L) - dgl[L](J, K));
              s += b.g_upper(L, F) * (ddgl[K][M](J, L) + ddgl[J][M](K, L) -
                                      ddgl[L][M](J, K));
            }
            dgamma[M][F](J, K) = dgamma[M][F](K, J) = 0.5 * s;
          }

    // Ricci tensor R_{JL} = sum_K [ d_K Gamma^K_{LJ} - d_L Gamma^K_{KJ}
    //   + Gamma^K_{KM} Gamma^M_{LJ} - Gamma^K_{LM} Gamma^M_{KJ} ],
    // then R = g^{JL} R_{JL}. Sign convention: the round sphere has R > 0.
    double R = 0.0;
    for (int J = 0; J < D; ++J)
      for (int L = 0; L < D; ++L) {
        double ric = 0.0;
        for (int K = 0; K < D; ++K) {
          ric += dgamma[K][K](L, J) - dgamma[L][K](K, J);
          for (int M = 0; M < D; ++M)
            ric += b.gamma[K](K, M) * b.gamma[M](L, J) -
                   b.gamma[K](L, M) * b.gamma[M](K, J);
        }
        R += b.g_upper(J, L) * ric;
      }
    b.R = R;
    return b;
  }

  // ---- Named single-quantity entry points ----

  Eigen::MatrixXd diffusion_matrix(const std::vector<double>& p,
                                   int epoch = 0) const {
    return bundle(p, GeometryLevel::metric, epoch).g_upper;
  }

  Eigen::VectorXd induced_drift(const std::vector<double>& p,
                                int epoch = 0) const {
    return bundle(p, GeometryLevel::drift, epoch).g_drift;
  }

  Eigen::VectorXd mean_drift_h(const std::vector<double>& p,
                               int epoch = 0) const {
    return bundle(p, GeometryLevel::mean, epoch).h;
  }

  double covariant_divergence(const std::vector<double>& p,
                              int epoch = 0) const {
    return bundle(p, GeometryLevel::mean, epoch).h_div;
  }

  std::vector<Eigen::MatrixXd> affine_connection(const std::vector<double>& p,
                                                 int epoch = 0) const {
    return bundle(p, GeometryLevel::full, epoch).gamma;
  }

  double curvature_scalar(const std::vector<double>& p, int epoch = 0) const {
    return bundle(p, GeometryLevel::full, epoch).R;
  }

  /// L = 1/2 (Mdot - h)^T g_lower (Mdot - h) + 1/2 h^G_{;G}
  ///     + riemann_coeff * R - V.
  /// The default riemann_coeff is the midpoint rule's 1/6; the reference
  /// state used by the information functional subtracts R/12 from this.
  double feynman_lagrangian(const std::vector<double>& p,
                            const Eigen::VectorXd& mdot, int epoch = 0,
                            double riemann_coeff = 1.0 / 6.0) const {
    GeometryBundle b = bundle(p, GeometryLevel::full, epoch);
    return feynman_lagrangian(b, mdot, riemann_coeff);
  }

  static double feynman_lagrangian(const GeometryBundle& b,
                                   const Eigen::VectorXd& mdot,
                                   double riemann_coeff = 1.0 / 6.0) {
    Eigen::VectorXd v = mdot - b.h;
    return 0.5 * v.dot(b.g_lower * v) + 0.5 * b.h_div + riemann_coeff * b.R -
           b.potential;
  }

  /// Prepoint form: 1/2 (Mdot - g)^T g_lower (Mdot - g) - V, no explicit
  /// Riemannian terms.
  double prepoint_lagrangian(const std::vector<double>& p,
                             const Eigen::VectorXd& mdot,
                             int epoch = 0) const {
    GeometryBundle b = bundle(p, GeometryLevel::drift, epoch);
    return prepoint_lagrangian(b, mdot);
  }

  static double prepoint_lagrangian(const GeometryBundle& b,
                                    const Eigen::VectorXd& mdot) {
    Eigen::VectorXd v = mdot - b.g_drift;
    return 0.5 * v.dot(b.g_lower * v) - b.potential;
  }

private:
  Eigen::MatrixXd build_g_upper(const std::vector<double>& p,
                                int epoch) const {
    return spec_.diffusion_at(p, epoch);
  }

  Eigen::VectorXd drift_values(const std::vector<double>& p,
                               int epoch) const {
    const int D = dim();
    Eigen::VectorXd f(D);
    for (int G = 0; G < D; ++G)
      f[G] = spec_.drift[G] ? spec_.drift[G]->value(p, epoch) : 0.0;
    return f;
  }

  // Includes any epoch-indexed linear constraint terms, so every Lagrangian
  // built from a bundle sees the constrained potential.
  double potential_value(const std::vector<double>& p, int epoch) const {
    double v = spec_.potential ? spec_.potential->value(p, epoch) : 0.0;
    return v + spec_.constraint_potential(p, epoch);
  }

  void factor_metric(const std::vector<double>& p,
                     const Eigen::MatrixXd& g_upper, Eigen::MatrixXd& g_lower,
                     double& det_g) const {
    const int D = static_cast<int>(g_upper.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(g_upper);
    if (llt.info() != Eigen::Success)
      throw degenerate_metric_error("metric factorization failed at " +
                                    point_string(p));
    double det_gu = 1.0;
    for (int i = 0; i < D; ++i) {
      double l = llt.matrixL()(i, i);
      if (!(l > 0.0))
        throw degenerate_metric_error("metric factorization failed at " +
                                      point_string(p));
      det_gu *= l * l;
    }
    g_lower = llt.solve(Eigen::MatrixXd::Identity(D, D));
    det_g = 1.0 / det_gu;
    double diag = 1.0;
    for (int i = 0; i < D; ++i) diag *= g_lower(i, i);
    if (!(det_g > 0.0) || !(det_g >= tol_ * diag))
      throw degenerate_metric_error("metric is degenerate at " +
                                    point_string(p));
  }

  static std::string point_string(const std::vector<double>& p) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ")";
    return os.str();
  }

  ModelSpec spec_;
  double tol_;
  bool constant_metric_ = false;
  Eigen::MatrixXd cached_g_upper_;
  Eigen::MatrixXd cached_g_lower_;
  double cached_det_g_ = 0.0;
};

}  // namespace statpath
