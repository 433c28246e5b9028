#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "statpath/errors.hpp"

namespace statpath {

/// One uniform cell-centered axis: n cells covering [lo, hi], centers at
/// lo + (i + 1/2) * spacing.
struct MeshAxis {
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;

  double spacing() const { return (hi - lo) / n; }
  double center(int i) const { return lo + (i + 0.5) * spacing(); }

  bool operator==(const MeshAxis& o) const {
    return lo == o.lo && hi == o.hi && n == o.n;
  }
};

/// Reflects an out-of-range cell index back into [0, n): the mirror image of
/// index -1 is 0, of n is n-1, folding repeatedly for large overshoots.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return (i < n) ? i : period - 1 - i;
}

/// Tensor product of uniform axes with row-major flattening (last axis
/// fastest). Immutable after construction.
class StateMesh {
public:
  StateMesh() = default;
  explicit StateMesh(std::vector<MeshAxis> axes) : axes_(std::move(axes)) {
    strides_.resize(axes_.size());
    std::size_t total = 1;
    for (int d = static_cast<int>(axes_.size()) - 1; d >= 0; --d) {
      const auto& a = axes_[d];
      if (a.n <= 0)
        throw config_error("mesh axis " + std::to_string(d) +
                           " has non-positive cell count");
      if (!(a.hi > a.lo))
        throw config_error("mesh axis " + std::to_string(d) +
                           " has empty range");
      strides_[d] = total;
      total *= static_cast<std::size_t>(a.n);
    }
    total_ = total;
  }

  int dim() const { return static_cast<int>(axes_.size()); }
  std::size_t total_cells() const { return total_; }
  const std::vector<MeshAxis>& axes() const { return axes_; }
  const MeshAxis& axis(int d) const { return axes_[d]; }

  double cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes_) v *= a.spacing();
    return v;
  }

  std::size_t flat_index(const std::vector<int>& multi) const {
    std::size_t f = 0;
    for (int d = 0; d < dim(); ++d) {
      if (multi[d] < 0 || multi[d] >= axes_[d].n)
        throw config_error("mesh index out of range on axis " +
                           std::to_string(d));
      f += static_cast<std::size_t>(multi[d]) * strides_[d];
    }
    return f;
  }

  std::vector<int> multi_index(std::size_t flat) const {
    std::vector<int> m(axes_.size());
    for (int d = 0; d < dim(); ++d) {
      m[d] = static_cast<int>(flat / strides_[d]);
      flat %= strides_[d];
    }
    return m;
  }

  std::vector<double> cell_center(const std::vector<int>& multi) const {
    std::vector<double> p(axes_.size());
    for (int d = 0; d < dim(); ++d) p[d] = axes_[d].center(multi[d]);
    return p;
  }

  std::vector<double> cell_center(std::size_t flat) const {
    return cell_center(multi_index(flat));
  }

  /// Index of the cell containing the point, clamped to the mesh.
  std::vector<int> locate(const std::vector<double>& p) const {
    std::vector<int> m(axes_.size());
    for (int d = 0; d < dim(); ++d) {
      int i = static_cast<int>(std::floor((p[d] - axes_[d].lo) /
                                          axes_[d].spacing()));
      m[d] = std::min(std::max(i, 0), axes_[d].n - 1);
    }
    return m;
  }

  bool contains(const std::vector<double>& p) const {
    for (int d = 0; d < dim(); ++d)
      if (p[d] < axes_[d].lo || p[d] > axes_[d].hi) return false;
    return true;
  }

  bool operator==(const StateMesh& o) const { return axes_ == o.axes_; }
  bool operator!=(const StateMesh& o) const { return !(*this == o); }

private:
  std::vector<MeshAxis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t total_ = 1;
};

/// Probability masses over mesh cells: weights sum to 1 when normalized.
/// The mass convention makes the L1 distance between two distributions equal
/// to the integral of the absolute density difference.
class Distribution {
public:
  Distribution() = default;
  Distribution(StateMesh mesh, std::vector<double> weights)
      : mesh_(std::move(mesh)), w_(std::move(weights)) {
    if (w_.size() != mesh_.total_cells())
      throw config_error("distribution weight count does not match mesh");
  }

  static Distribution zero(const StateMesh& mesh) {
    return Distribution(mesh, std::vector<double>(mesh.total_cells(), 0.0));
  }

  static Distribution uniform(const StateMesh& mesh) {
    Distribution d = zero(mesh);
    double v = 1.0 / static_cast<double>(mesh.total_cells());
    for (auto& w : d.w_) w = v;
    return d;
  }

  /// Point mass at p, split across the two bracketing cells per axis so the
  /// distribution's first moment equals p exactly (when p lies between the
  /// first and last cell centers of every axis).
  static Distribution delta(const StateMesh& mesh,
                            const std::vector<double>& p) {
    if (static_cast<int>(p.size()) != mesh.dim())
      throw config_error("delta point dimension does not match mesh");
    const int D = mesh.dim();
    std::vector<std::pair<int, double>> lo_cell(D);  // lower cell, its weight
    for (int d = 0; d < D; ++d) {
      const auto& a = mesh.axis(d);
      double u = (p[d] - a.center(0)) / a.spacing();
      int i = static_cast<int>(std::floor(u));
      double t = u - i;  // fraction assigned to cell i+1
      if (i < 0) { i = 0; t = 0.0; }
      if (i >= a.n - 1) { i = a.n - 1; t = 0.0; }
      lo_cell[d] = {i, 1.0 - t};
    }
    Distribution out = zero(mesh);
    // Enumerate the 2^D corner cells of the bracketing box.
    std::vector<int> multi(D);
    for (unsigned corner = 0; corner < (1u << D); ++corner) {
      double w = 1.0;
      bool valid = true;
      for (int d = 0; d < D; ++d) {
        bool upper = (corner >> d) & 1u;
        double wd = upper ? 1.0 - lo_cell[d].second : lo_cell[d].second;
        int idx = lo_cell[d].first + (upper ? 1 : 0);
        if (wd == 0.0) { valid = false; break; }
        if (idx >= mesh.axis(d).n) { valid = false; break; }
        w *= wd;
        multi[d] = idx;
      }
      if (valid && w > 0.0) out.w_[mesh.flat_index(multi)] += w;
    }
    out.normalize();
    return out;
  }

  /// Discretizes a density: mass per cell = density(center) * cell volume,
  /// then normalized.
  static Distribution from_density(
      const StateMesh& mesh,
      const std::function<double(const std::vector<double>&)>& density) {
    Distribution d = zero(mesh);
    for (std::size_t i = 0; i < mesh.total_cells(); ++i) {
      double v = density(mesh.cell_center(i));
      if (v < 0.0)
        throw validation_error("density evaluates negative at a mesh cell");
      d.w_[i] = v;
    }
    d.normalize();
    return d;
  }

  const StateMesh& mesh() const { return mesh_; }
  const std::vector<double>& weights() const { return w_; }
  std::vector<double>& mutable_weights() { return w_; }
  double operator[](std::size_t i) const { return w_[i]; }
  std::size_t size() const { return w_.size(); }

  double total_mass() const {
    return std::accumulate(w_.begin(), w_.end(), 0.0);
  }

  void normalize() {
    double s = total_mass();
    if (!(s > 0.0))
      throw numerical_error("cannot normalize distribution with zero mass");
    for (auto& w : w_) w /= s;
  }

  std::vector<double> mean() const {
    std::vector<double> m(mesh_.dim(), 0.0);
    for (std::size_t i = 0; i < w_.size(); ++i) {
      if (w_[i] == 0.0) continue;
      auto c = mesh_.cell_center(i);
      for (int d = 0; d < mesh_.dim(); ++d) m[d] += w_[i] * c[d];
    }
    return m;
  }

  double covariance(int d1, int d2) const {
    auto m = mean();
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      if (w_[i] == 0.0) continue;
      auto c = mesh_.cell_center(i);
      s += w_[i] * (c[d1] - m[d1]) * (c[d2] - m[d2]);
    }
    return s;
  }

  double variance(int d) const { return covariance(d, d); }

  /// Sums out all axes but one; returns masses over that axis's cells.
  std::vector<double> marginal(int dim) const {
    std::vector<double> out(mesh_.axis(dim).n, 0.0);
    for (std::size_t i = 0; i < w_.size(); ++i)
      out[mesh_.multi_index(i)[dim]] += w_[i];
    return out;
  }

  double expectation(
      const std::function<double(const std::vector<double>&)>& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i)
      if (w_[i] != 0.0) s += w_[i] * f(mesh_.cell_center(i));
    return s;
  }

  double l1_distance(const Distribution& o) const {
    require_same_mesh(o);
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) s += std::abs(w_[i] - o.w_[i]);
    return s;
  }

  double linf_distance(const Distribution& o) const {
    require_same_mesh(o);
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i)
      s = std::max(s, std::abs(w_[i] - o.w_[i]));
    return s;
  }

private:
  void require_same_mesh(const Distribution& o) const {
    if (mesh_ != o.mesh_)
      throw config_error("distributions are defined on different meshes");
  }

  StateMesh mesh_;
  std::vector<double> w_;
};

}  // namespace statpath
