#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/field.hpp"
#include "statpath/mesh.hpp"
#include "statpath/rng.hpp"

namespace statpath {

/// One state variable of the per-cell system.
struct Variable {
  std::string name;
  int index = 1;  // 1-based position among the declared variables
  double lo = 0.0;
  double hi = 0.0;
  int mesh_points = 0;

  MeshAxis axis() const { return MeshAxis{lo, hi, mesh_points}; }

  bool operator==(const Variable& o) const {
    return name == o.name && index == o.index && lo == o.lo && hi == o.hi &&
           mesh_points == o.mesh_points;
  }
};

/// Cells on a rows x cols grid with 4-neighborhoods. rows = cols = 1 is the
/// degenerate single-cell system; all single-cell math is that special case.
struct LatticeTopology {
  int rows = 1;
  int cols = 1;
  bool periodic = false;

  int cell_count() const { return rows * cols; }
  int cell_id(int r, int c) const { return r * cols + c; }
  int row_of(int cell) const { return cell / cols; }
  int col_of(int cell) const { return cell % cols; }

  /// Neighbor cells in fixed direction order up, down, left, right.
  /// Open boundary skips off-grid directions; periodic wraps, except that a
  /// wrap landing back on the cell itself (single-row or single-column grid)
  /// is dropped rather than reported as a self-neighbor.
  std::vector<int> neighbors(int cell) const {
    const int r = row_of(cell), c = col_of(cell);
    std::vector<int> out;
    auto push = [&](int rr, int cc) {
      if (periodic) {
        rr = (rr + rows) % rows;
        cc = (cc + cols) % cols;
      } else if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) {
        return;
      }
      int id = cell_id(rr, cc);
      if (id != cell) out.push_back(id);
    };
    push(r - 1, c);
    push(r + 1, c);
    push(r, c - 1);
    push(r, c + 1);
    return out;
  }

  /// Offset of one cell relative to another in direction terms, or empty.
  bool adjacent(int a, int b) const {
    for (int n : neighbors(a))
      if (n == b) return true;
    return false;
  }

  bool operator==(const LatticeTopology& o) const {
    return rows == o.rows && cols == o.cols && periodic == o.periodic;
  }
};

/// Direction tokens used by config templates to address neighbor cells.
enum class CellOffset { self, up, down, left, right };

inline const char* cell_offset_name(CellOffset o) {
  switch (o) {
    case CellOffset::self: return "self";
    case CellOffset::up: return "up";
    case CellOffset::down: return "down";
    case CellOffset::left: return "left";
    case CellOffset::right: return "right";
  }
  return "?";
}

/// Resolves a direction from a cell, honoring the topology's boundary rule.
/// Returns -1 when the direction leaves an open-boundary grid (or wraps onto
/// the cell itself).
inline int offset_cell(const LatticeTopology& lat, int cell, CellOffset o) {
  if (o == CellOffset::self) return cell;
  int r = lat.row_of(cell), c = lat.col_of(cell);
  switch (o) {
    case CellOffset::up: r -= 1; break;
    case CellOffset::down: r += 1; break;
    case CellOffset::left: c -= 1; break;
    case CellOffset::right: c += 1; break;
    default: break;
  }
  if (lat.periodic) {
    r = (r + lat.rows) % lat.rows;
    c = (c + lat.cols) % lat.cols;
  } else if (r < 0 || r >= lat.rows || c < 0 || c >= lat.cols) {
    return -1;
  }
  int id = lat.cell_id(r, c);
  return id == cell ? -1 : id;
}

/// The noise coefficient matrix over flattened dimensions: entry (i, d) is
/// the field multiplying white-noise channel i in the equation of motion of
/// dimension d. Stored sparsely; absent entries are identically zero.
class NoiseMatrixSpec {
public:
  NoiseMatrixSpec() = default;
  NoiseMatrixSpec(int channels, int dims) : dims_(dims), rows_(channels) {}

  int channels() const { return static_cast<int>(rows_.size()); }
  int dims() const { return dims_; }

  void set_entry(int channel, int dim, FieldPtr f) {
    if (channel < 0 || channel >= channels())
      throw config_error("noise channel index out of range");
    if (dim < 0 || dim >= dims_)
      throw config_error("noise dimension index out of range");
    for (auto& [d, fld] : rows_[channel]) {
      if (d == dim) {
        fld = std::move(f);
        return;
      }
    }
    rows_[channel].push_back({dim, std::move(f)});
  }

  /// Null when the entry is identically zero.
  const FieldEvaluator* entry(int channel, int dim) const {
    for (const auto& [d, f] : rows_[channel])
      if (d == dim) return f.get();
    return nullptr;
  }

  const std::vector<std::pair<int, FieldPtr>>& channel_entries(int i) const {
    return rows_[i];
  }

  /// True when every entry is state- and epoch-independent, which lets
  /// downstream geometry be computed once instead of per point.
  bool all_constant() const {
    for (const auto& row : rows_)
      for (const auto& [d, f] : row)
        if (!f->is_constant()) return false;
    return true;
  }

private:
  int dims_ = 0;
  std::vector<std::vector<std::pair<int, FieldPtr>>> rows_;
};

/// Per-epoch linear drive multipliers, default zero everywhere.
class ConstraintSpec {
public:
  struct Entry {
    int epoch = 0;  // 0-based epoch within the run schedule
    int var = 0;    // 0-based variable position
    int cell = 0;
    double value = 0.0;

    bool operator==(const Entry& o) const {
      return epoch == o.epoch && var == o.var && cell == o.cell &&
             value == o.value;
    }
  };

  void add(Entry e) {
    if (!std::isfinite(e.value))
      throw config_error("constraint multiplier must be finite");
    entries_.push_back(e);
  }

  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

  int max_epoch() const {
    int m = -1;
    for (const auto& e : entries_) m = std::max(m, e.epoch);
    return m;
  }

  double value(int epoch, int var, int cell) const {
    double s = 0.0;
    for (const auto& e : entries_)
      if (e.epoch == epoch && e.var == var && e.cell == cell) s += e.value;
    return s;
  }

private:
  std::vector<Entry> entries_;
};

/// One factor of a declarative monomial: a variable addressed either in a
/// fixed direction from the owning cell, or "nn" (expand one term copy per
/// nearest neighbor, all nn factors of the term bound to the same neighbor).
struct TermFactor {
  int var = 0;  // 0-based variable position
  bool nn = false;
  CellOffset offset = CellOffset::self;
  int power = 1;

  bool operator==(const TermFactor& o) const {
    return var == o.var && nn == o.nn && offset == o.offset &&
           power == o.power;
  }
};

/// Declarative monomial template, replicated across lattice cells.
struct TermDecl {
  double coeff = 0.0;
  std::vector<TermFactor> factors;
  std::vector<double> schedule;
  std::string fit_name;
  double fit_lo = 0.0;
  double fit_hi = 0.0;

  bool operator==(const TermDecl& o) const {
    return coeff == o.coeff && factors == o.factors &&
           schedule == o.schedule && fit_name == o.fit_name &&
           fit_lo == o.fit_lo && fit_hi == o.fit_hi;
  }
};

/// Declarative noise entry: channel template feeding one variable, optionally
/// of a neighboring cell.
struct NoiseDecl {
  int channel = 1;  // 1-based template channel
  int var = 0;
  CellOffset target = CellOffset::self;
  std::vector<TermDecl> terms;

  bool operator==(const NoiseDecl& o) const {
    return channel == o.channel && var == o.var && target == o.target &&
           terms == o.terms;
  }
};

/// The full declarative model description a config file parses into. Kept on
/// the built ModelSpec so a model can be written back out losslessly.
struct ModelDecl {
  std::vector<Variable> variables;
  LatticeTopology lattice;
  double dt = 0.0;
  std::vector<std::vector<TermDecl>> drift_terms;  // per variable
  std::vector<NoiseDecl> noise_entries;
  std::vector<TermDecl> potential_terms;
  std::vector<ConstraintSpec::Entry> constraint_entries;
};

/// The validated system description every other component consumes.
///
/// The per-cell variables are replicated across lattice cells and flattened:
/// dimension d = cell * n_vars + (variable position). Single-cell systems are
/// the cell_count() == 1 case of the same layout.
class ModelSpec {
public:
  std::vector<Variable> variables;
  LatticeTopology lattice;
  std::vector<FieldPtr> drift;  // per flattened dimension
  NoiseMatrixSpec noise;
  FieldPtr potential;  // null means identically zero
  ConstraintSpec constraints;
  double dt = 0.0;

  // Populated when the model was built from a declarative description;
  // enables lossless write-back of configs.
  std::shared_ptr<const ModelDecl> declaration;

  int n_vars() const { return static_cast<int>(variables.size()); }
  int n_cells() const { return lattice.cell_count(); }
  int dim() const { return n_vars() * n_cells(); }

  int flat_dim(int var, int cell) const { return cell * n_vars() + var; }
  int var_of(int d) const { return d % n_vars(); }
  int cell_of(int d) const { return d / n_vars(); }

  const Variable& variable_of_dim(int d) const {
    return variables[var_of(d)];
  }

  std::string dim_name(int d) const {
    const Variable& v = variable_of_dim(d);
    if (n_cells() == 1) return v.name;
    int cell = cell_of(d);
    return v.name + "@" + std::to_string(lattice.row_of(cell)) + "," +
           std::to_string(lattice.col_of(cell));
  }

  /// Tensor-product mesh over all flattened dimensions.
  StateMesh mesh() const {
    std::vector<MeshAxis> axes;
    axes.reserve(dim());
    for (int d = 0; d < dim(); ++d)
      axes.push_back(variable_of_dim(d).axis());
    return StateMesh(std::move(axes));
  }

  /// Mesh over a single cell's variables (the per-cell marginal space).
  StateMesh cell_mesh() const {
    std::vector<MeshAxis> axes;
    for (const auto& v : variables) axes.push_back(v.axis());
    return StateMesh(std::move(axes));
  }

  bool has_potential() const {
    return potential != nullptr && !is_zero_field(*potential);
  }

  double drift_value(int d, const std::vector<double>& p, int epoch) const {
    return drift[d] ? drift[d]->value(p, epoch) : 0.0;
  }

  /// Linear epoch-indexed penalty terms that join the potential: the sum of
  /// multiplier * state over constraints active at this epoch.
  double constraint_potential(const std::vector<double>& p, int epoch) const {
    double s = 0.0;
    for (const auto& e : constraints.entries())
      if (e.epoch == epoch) s += e.value * p[flat_dim(e.var, e.cell)];
    return s;
  }

  /// Full validation; throws validation_error naming the first violation.
  void validate() const {
    if (variables.empty())
      throw validation_error("model declares no variables");
    for (std::size_t i = 0; i < variables.size(); ++i) {
      const auto& v = variables[i];
      if (v.name.empty())
        throw validation_error("variable " + std::to_string(i + 1) +
                               " has an empty name");
      if (!(v.lo < v.hi))
        throw validation_error("variable " + v.name +
                               " range must satisfy min < max");
      if (v.mesh_points < 3)
        throw validation_error("variable " + v.name +
                               " needs at least 3 mesh points");
      if (v.index != static_cast<int>(i) + 1)
        throw validation_error("variable " + v.name +
                               " has index " + std::to_string(v.index) +
                               ", expected " + std::to_string(i + 1));
      for (std::size_t j = 0; j < i; ++j)
        if (variables[j].name == v.name)
          throw validation_error("duplicate variable name " + v.name);
    }
    if (lattice.rows < 1 || lattice.cols < 1)
      throw validation_error("lattice must have at least one row and column");
    if (static_cast<int>(drift.size()) != dim())
      throw validation_error("drift must declare one component per dimension");
    if (noise.dims() != dim())
      throw validation_error("noise matrix dimension does not match model");
    if (noise.channels() < 1)
      throw validation_error("model declares no noise channels");
    if (!(dt > 0.0))
      throw validation_error("time step must be positive");
    check_nn_reach();
    check_spd();
  }

  /// Builds the diffusion matrix at a point: D^{dd'} = sum_i n_i^d n_i^{d'}.
  Eigen::MatrixXd diffusion_at(const std::vector<double>& p,
                               int epoch = 0) const {
    const int D = dim();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(D, D);
    for (int i = 0; i < noise.channels(); ++i) {
      const auto& row = noise.channel_entries(i);
      for (const auto& [d1, f1] : row) {
        double v1 = f1->value(p, epoch);
        for (const auto& [d2, f2] : row)
          g(d1, d2) += v1 * f2->value(p, epoch);
      }
    }
    return g;
  }

private:
  static bool is_zero_field(const FieldEvaluator& f) {
    auto* pe = dynamic_cast<const PolynomialEvaluator*>(&f);
    return pe != nullptr && pe->poly().terms().empty();
  }

  /// Every polynomial drift/noise component of dimension d may reference only
  /// dimensions of d's own cell and its nearest-neighbor cells.
  void check_nn_reach() const {
    auto reach_ok = [&](int owner_dim, const FieldEvaluator* f,
                        const std::string& what) {
      auto* pe = dynamic_cast<const PolynomialEvaluator*>(f);
      if (pe == nullptr) return;  // closed-form fields are caller-audited
      int owner_cell = cell_of(owner_dim);
      auto nn = lattice.neighbors(owner_cell);
      for (const auto& t : pe->poly().terms()) {
        for (const auto& [d, k] : t.powers) {
          if (d < 0 || d >= dim())
            throw validation_error(what + " references undeclared dimension " +
                                   std::to_string(d));
          int c = cell_of(d);
          bool ok = (c == owner_cell);
          for (int n : nn) ok = ok || (c == n);
          if (!ok)
            throw validation_error(
                what + " references " + dim_name(d) +
                ", which is beyond nearest-neighbor reach of cell " +
                std::to_string(owner_cell));
        }
      }
    };
    for (int d = 0; d < dim(); ++d)
      if (drift[d]) reach_ok(d, drift[d].get(), "drift of " + dim_name(d));
    for (int i = 0; i < noise.channels(); ++i)
      for (const auto& [d, f] : noise.channel_entries(i))
        reach_ok(d, f.get(),
                 "noise channel " + std::to_string(i + 1) + " entry for " +
                     dim_name(d));
  }

  /// Positive-definiteness of the induced diffusion, by direct factorization.
  /// Exhaustive over the mesh when it is small enough; otherwise a
  /// deterministic probe of corners, centers, and pseudo-random points.
  void check_spd() const {
    StateMesh m = mesh();
    const std::size_t budget = 200000;
    auto check_point = [&](const std::vector<double>& p) {
      Eigen::MatrixXd g = diffusion_at(p);
      Eigen::LLT<Eigen::MatrixXd> llt(g);
      bool ok = (llt.info() == Eigen::Success);
      if (ok)
        for (int k = 0; k < g.rows(); ++k)
          if (!(llt.matrixL()(k, k) > 0.0)) ok = false;
      if (!ok) {
        std::ostringstream os;
        os << "diffusion not positive definite at mesh point (";
        for (std::size_t k = 0; k < p.size(); ++k)
          os << (k ? ", " : "") << p[k];
        os << ")";
        throw validation_error(os.str());
      }
    };
    if (m.total_cells() <= budget) {
      for (std::size_t i = 0; i < m.total_cells(); ++i)
        check_point(m.cell_center(i));
      return;
    }
    const int D = m.dim();
    std::vector<int> idx(D);
    auto corner = [&](bool high) {
      for (int d = 0; d < D; ++d) idx[d] = high ? m.axis(d).n - 1 : 0;
      check_point(m.cell_center(m.flat_index(idx)));
    };
    corner(false);
    corner(true);
    for (int d = 0; d < D; ++d) idx[d] = m.axis(d).n / 2;
    check_point(m.cell_center(m.flat_index(idx)));
    RandomStream rng(12345, 0);
    for (int probe = 0; probe < 512; ++probe) {
      for (int d = 0; d < D; ++d)
        idx[d] = static_cast<int>(rng.uniform_index(m.axis(d).n));
      check_point(m.cell_center(m.flat_index(idx)));
    }
  }
};

/// Cell-center coordinates for 1-based per-axis indices.
inline std::vector<double> mesh_point(const StateMesh& mesh,
                                      const std::vector<int>& index_1based) {
  if (static_cast<int>(index_1based.size()) != mesh.dim())
    throw config_error("mesh point index dimension mismatch");
  std::vector<int> zero_based(index_1based.size());
  for (std::size_t d = 0; d < index_1based.size(); ++d) {
    if (index_1based[d] < 1 || index_1based[d] > mesh.axis(d).n)
      throw config_error("mesh point index out of range on axis " +
                         std::to_string(d));
    zero_based[d] = index_1based[d] - 1;
  }
  return mesh.cell_center(zero_based);
}

}  // namespace statpath
