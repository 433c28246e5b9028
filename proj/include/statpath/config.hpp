#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/field.hpp"
#include "statpath/format.hpp"
#include "statpath/model.hpp"

namespace statpath {
namespace config_detail {

struct Line {
  int number = 0;
  std::string text;
};

inline config_error at_line(int n, const std::string& msg) {
  return config_error("line " + std::to_string(n) + ": " + msg);
}

inline CellOffset parse_offset(const std::string& s, int line) {
  if (s == "self") return CellOffset::self;
  if (s == "up") return CellOffset::up;
  if (s == "down") return CellOffset::down;
  if (s == "left") return CellOffset::left;
  if (s == "right") return CellOffset::right;
  throw at_line(line, "unknown cell offset '" + s +
                          "' (expected self, up, down, left, or right)");
}

/// Parses one "term = ..." value into a declarative monomial.
/// Grammar: coeff [* factor]... [| schedule = v...] [| fit = name in [lo, hi]]
/// where factor is name[@offset][^power], offset in {nn,self,up,down,left,
/// right}.
inline TermDecl parse_term(const std::string& value,
                           const std::vector<Variable>& vars, int line) {
  auto parts = text::split(value, '|');
  if (parts.empty() || parts[0].empty())
    throw at_line(line, "empty term");
  TermDecl t;

  auto factors = text::split(parts[0], '*');
  t.coeff = [&] {
    try {
      return text::parse_double(factors[0], "term coefficient");
    } catch (const config_error&) {
      throw at_line(line,
                    "term must start with an explicit numeric coefficient");
    }
  }();
  for (std::size_t i = 1; i < factors.size(); ++i) {
    const std::string& tok = factors[i];
    if (tok.empty()) throw at_line(line, "empty factor in term");
    TermFactor f;
    std::string name = tok;
    std::string rest;
    if (auto caret = name.find('^'); caret != std::string::npos) {
      rest = name.substr(caret + 1);
      name = name.substr(0, caret);
      long p = text::parse_int(rest, "factor power");
      if (p < 1) throw at_line(line, "factor power must be >= 1");
      f.power = static_cast<int>(p);
    }
    if (auto amp = name.find('@'); amp != std::string::npos) {
      std::string off = text::trim(name.substr(amp + 1));
      name = text::trim(name.substr(0, amp));
      if (off == "nn")
        f.nn = true;
      else
        f.offset = parse_offset(off, line);
    }
    name = text::trim(name);
    int vi = -1;
    for (std::size_t v = 0; v < vars.size(); ++v)
      if (vars[v].name == name) vi = static_cast<int>(v);
    if (vi < 0)
      throw at_line(line, "unknown variable '" + name + "' in term");
    f.var = vi;
    t.factors.push_back(f);
  }

  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::string& opt = parts[i];
    auto eq = opt.find('=');
    if (eq == std::string::npos)
      throw at_line(line, "term option must be key = value");
    std::string key = text::trim(opt.substr(0, eq));
    std::string val = text::trim(opt.substr(eq + 1));
    if (key == "schedule") {
      std::string v = val;
      std::replace(v.begin(), v.end(), ',', ' ');
      for (const auto& tok : text::split_ws(v))
        t.schedule.push_back(text::parse_double(tok, "schedule value"));
      if (t.schedule.empty())
        throw at_line(line, "schedule option lists no values");
    } else if (key == "fit") {
      // name in [lo, hi]
      std::istringstream is(val);
      std::string name, kw, bracket;
      is >> name >> kw;
      std::getline(is, bracket);
      bracket = text::trim(bracket);
      if (!text::is_identifier(name) || kw != "in" || bracket.size() < 2 ||
          bracket.front() != '[' || bracket.back() != ']')
        throw at_line(line,
                      "fit option must be 'fit = name in [lo, hi]'");
      auto bounds = text::split(bracket.substr(1, bracket.size() - 2), ',');
      if (bounds.size() != 2)
        throw at_line(line, "fit bounds must be [lo, hi]");
      t.fit_name = name;
      t.fit_lo = text::parse_double(bounds[0], "fit lower bound");
      t.fit_hi = text::parse_double(bounds[1], "fit upper bound");
      if (!std::isfinite(t.fit_lo) || !std::isfinite(t.fit_hi) ||
          !(t.fit_lo < t.fit_hi))
        throw at_line(line, "fit bounds must be finite with lo < hi");
      if (t.coeff < t.fit_lo || t.coeff > t.fit_hi)
        throw at_line(line, "term coefficient lies outside its fit bounds");
    } else {
      throw at_line(line, "unknown term option '" + key + "'");
    }
  }
  return t;
}

}  // namespace config_detail

/// Parses the declarative model grammar into a ModelDecl. Unknown sections
/// and keys are rejected; every error carries a line number.
inline ModelDecl parse_model_decl(const std::string& config_text) {
  using config_detail::at_line;
  namespace cd = config_detail;

  // First pass: split into sections of (header tokens, body lines).
  struct Section {
    int line = 0;
    std::vector<std::string> header;
    std::vector<cd::Line> body;
  };
  std::vector<Section> sections;
  {
    std::istringstream in(config_text);
    std::string raw;
    int n = 0;
    while (std::getline(in, raw)) {
      ++n;
      if (auto hash = raw.find('#'); hash != std::string::npos)
        raw = raw.substr(0, hash);
      std::string line = text::trim(raw);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw at_line(n, "unterminated section header");
        auto header =
            text::split_ws(line.substr(1, line.size() - 2));
        if (header.empty()) throw at_line(n, "empty section header");
        sections.push_back({n, header, {}});
      } else {
        if (sections.empty())
          throw at_line(n, "content before any section header");
        sections.back().body.push_back({n, line});
      }
    }
  }

  ModelDecl decl;
  bool saw_model = false, saw_vars = false, saw_lattice = false;
  bool saw_potential = false, saw_constraints = false;
  std::set<std::string> drift_seen;
  std::set<std::string> noise_seen;
  std::vector<Section*> deferred;  // sections needing variable names

  auto key_value = [&](const cd::Line& l) {
    auto eq = l.text.find('=');
    if (eq == std::string::npos)
      throw at_line(l.number, "expected key = value");
    return std::pair<std::string, std::string>(
        text::trim(l.text.substr(0, eq)), text::trim(l.text.substr(eq + 1)));
  };

  // Model / variables / lattice first, since later sections reference them.
  for (auto& s : sections) {
    const std::string& kind = s.header[0];
    if (kind == "model") {
      if (s.header.size() != 1)
        throw at_line(s.line, "section [model] takes no arguments");
      if (saw_model) throw at_line(s.line, "duplicate [model] section");
      saw_model = true;
      for (const auto& l : s.body) {
        auto [k, v] = key_value(l);
        if (k == "dt") {
          decl.dt = text::parse_double(v, "dt");
          if (!(decl.dt > 0.0))
            throw at_line(l.number, "dt must be positive");
        } else {
          throw at_line(l.number, "unknown key '" + k + "' in [model]");
        }
      }
    } else if (kind == "variables") {
      if (saw_vars) throw at_line(s.line, "duplicate [variables] section");
      saw_vars = true;
      for (const auto& l : s.body) {
        auto [name, v] = key_value(l);
        if (!text::is_identifier(name) || name == "t")
          throw at_line(l.number, "invalid variable name '" + name + "'");
        for (const auto& existing : decl.variables)
          if (existing.name == name)
            throw at_line(l.number, "duplicate variable '" + name + "'");
        auto fields = text::split(v, ',');
        if (fields.size() != 3)
          throw at_line(l.number,
                        "variable declaration must be 'name = lo, hi, n'");
        Variable var;
        var.name = name;
        var.index = static_cast<int>(decl.variables.size()) + 1;
        var.lo = text::parse_double(fields[0], "variable lower bound");
        var.hi = text::parse_double(fields[1], "variable upper bound");
        var.mesh_points =
            static_cast<int>(text::parse_int(fields[2], "variable cells"));
        if (!(var.lo < var.hi))
          throw at_line(l.number, "variable range must satisfy lo < hi");
        if (var.mesh_points < 3)
          throw at_line(l.number, "variable needs at least 3 cells");
        decl.variables.push_back(var);
      }
    } else if (kind == "lattice") {
      if (saw_lattice) throw at_line(s.line, "duplicate [lattice] section");
      saw_lattice = true;
      for (const auto& l : s.body) {
        auto [k, v] = key_value(l);
        if (k == "rows")
          decl.lattice.rows = static_cast<int>(text::parse_int(v, "rows"));
        else if (k == "cols")
          decl.lattice.cols = static_cast<int>(text::parse_int(v, "cols"));
        else if (k == "boundary") {
          if (v == "open")
            decl.lattice.periodic = false;
          else if (v == "periodic")
            decl.lattice.periodic = true;
          else
            throw at_line(l.number,
                          "boundary must be 'open' or 'periodic'");
        } else {
          throw at_line(l.number, "unknown key '" + k + "' in [lattice]");
        }
      }
      if (decl.lattice.rows < 1 || decl.lattice.cols < 1)
        throw at_line(s.line, "lattice must have positive rows and cols");
    } else if (kind == "drift" || kind == "noise" || kind == "potential" ||
               kind == "constraints") {
      deferred.push_back(&s);
    } else {
      throw at_line(s.line, "unknown section [" + kind + "]");
    }
  }

  if (!saw_model) throw config_error("config is missing the [model] section");
  if (!saw_vars || decl.variables.empty())
    throw config_error("config declares no variables");

  decl.drift_terms.assign(decl.variables.size(), {});
  auto var_index = [&](const std::string& name, int line) {
    for (std::size_t v = 0; v < decl.variables.size(); ++v)
      if (decl.variables[v].name == name) return static_cast<int>(v);
    throw at_line(line, "unknown variable '" + name + "'");
  };

  for (Section* sp : deferred) {
    Section& s = *sp;
    const std::string& kind = s.header[0];
    if (kind == "drift") {
      if (s.header.size() != 2)
        throw at_line(s.line, "section must be [drift <variable>]");
      int vi = var_index(s.header[1], s.line);
      if (!drift_seen.insert(s.header[1]).second)
        throw at_line(s.line, "duplicate drift section for " + s.header[1]);
      for (const auto& l : s.body) {
        auto [k, v] = key_value(l);
        if (k != "term")
          throw at_line(l.number, "unknown key '" + k + "' in [drift]");
        decl.drift_terms[vi].push_back(
            cd::parse_term(v, decl.variables, l.number));
      }
    } else if (kind == "noise") {
      if (s.header.size() != 3)
        throw at_line(s.line, "section must be [noise <channel> <variable>]");
      NoiseDecl nd;
      nd.channel =
          static_cast<int>(text::parse_int(s.header[1], "noise channel"));
      if (nd.channel < 1)
        throw at_line(s.line, "noise channel numbers start at 1");
      nd.var = var_index(s.header[2], s.line);
      for (const auto& l : s.body) {
        auto [k, v] = key_value(l);
        if (k == "offset") {
          nd.target = cd::parse_offset(v, l.number);
        } else if (k == "term") {
          nd.terms.push_back(cd::parse_term(v, decl.variables, l.number));
        } else {
          throw at_line(l.number, "unknown key '" + k + "' in [noise]");
        }
      }
      std::string sig = std::to_string(nd.channel) + "/" +
                        std::to_string(nd.var) + "/" +
                        cell_offset_name(nd.target);
      if (!noise_seen.insert(sig).second)
        throw at_line(s.line, "duplicate noise section for channel " +
                                  std::to_string(nd.channel) + ", variable " +
                                  decl.variables[nd.var].name);
      decl.noise_entries.push_back(std::move(nd));
    } else if (kind == "potential") {
      if (s.header.size() != 1)
        throw at_line(s.line, "section [potential] takes no arguments");
      if (saw_potential)
        throw at_line(s.line, "duplicate [potential] section");
      saw_potential = true;
      for (const auto& l : s.body) {
        auto [k, v] = key_value(l);
        if (k != "term")
          throw at_line(l.number, "unknown key '" + k + "' in [potential]");
        decl.potential_terms.push_back(
            cd::parse_term(v, decl.variables, l.number));
      }
    } else {  // constraints
      if (s.header.size() != 1)
        throw at_line(s.line, "section [constraints] takes no arguments");
      if (saw_constraints)
        throw at_line(s.line, "duplicate [constraints] section");
      saw_constraints = true;
      for (const auto& l : s.body) {
        auto [k, v] = key_value(l);
        if (k != "J")
          throw at_line(l.number, "unknown key '" + k + "' in [constraints]");
        auto f = text::split(v, ',');
        if (f.size() != 5)
          throw at_line(l.number,
                        "constraint must be 'J = epoch, variable, row, col, "
                        "value'");
        ConstraintSpec::Entry e;
        e.epoch = static_cast<int>(text::parse_int(f[0], "constraint epoch"));
        e.var = var_index(f[1], l.number);
        int r = static_cast<int>(text::parse_int(f[2], "constraint row"));
        int c = static_cast<int>(text::parse_int(f[3], "constraint col"));
        e.value = text::parse_double(f[4], "constraint value");
        if (e.epoch < 0) throw at_line(l.number, "epoch must be >= 0");
        if (r < 0 || r >= decl.lattice.rows || c < 0 ||
            c >= decl.lattice.cols)
          throw at_line(l.number, "constraint cell outside the lattice");
        e.cell = decl.lattice.cell_id(r, c);
        decl.constraint_entries.push_back(e);
      }
    }
  }

  if (decl.dt <= 0.0)
    throw config_error("config must set a positive dt in [model]");
  return decl;
}

/// Expands one declarative term at a given owning cell into polynomial terms
/// over flattened dimensions. "nn" factors produce one copy per neighbor;
/// directional offsets that leave an open-boundary grid drop the term for
/// that cell.
inline void expand_term(const TermDecl& t, const LatticeTopology& lattice,
                        int n_vars, int cell, std::vector<PolyTerm>& out) {
  bool has_nn = false;
  for (const auto& f : t.factors) has_nn = has_nn || f.nn;
  std::vector<int> binds;
  if (has_nn)
    binds = lattice.neighbors(cell);
  else
    binds.push_back(-1);  // single copy, marker unused
  for (int bound : binds) {
    PolyTerm pt;
    pt.coeff = t.coeff;
    pt.schedule = t.schedule;
    pt.fit_name = t.fit_name;
    pt.fit_lo = t.fit_lo;
    pt.fit_hi = t.fit_hi;
    bool ok = true;
    for (const auto& f : t.factors) {
      int target = f.nn ? bound : offset_cell(lattice, cell, f.offset);
      if (target < 0) {
        ok = false;
        break;
      }
      pt.powers.push_back({target * n_vars + f.var, f.power});
    }
    if (ok) out.push_back(std::move(pt));
  }
}

/// Builds a validated ModelSpec from a declarative description, replicating
/// per-variable templates across all lattice cells.
inline ModelSpec build_model(ModelDecl decl) {
  ModelSpec m;
  m.variables = decl.variables;
  m.lattice = decl.lattice;
  m.dt = decl.dt;
  const int V = static_cast<int>(decl.variables.size());
  const int L = decl.lattice.cell_count();

  if (static_cast<int>(decl.drift_terms.size()) != V)
    decl.drift_terms.resize(V);
  m.drift.resize(V * L);
  for (int cell = 0; cell < L; ++cell) {
    for (int var = 0; var < V; ++var) {
      std::vector<PolyTerm> terms;
      for (const auto& t : decl.drift_terms[var])
        expand_term(t, decl.lattice, V, cell, terms);
      m.drift[cell * V + var] = make_field(PolynomialField(std::move(terms)));
    }
  }

  int K = 0;
  for (const auto& nd : decl.noise_entries) K = std::max(K, nd.channel);
  if (K == 0)
    throw validation_error("model declares no noise channels");
  {
    std::vector<bool> present(K, false);
    for (const auto& nd : decl.noise_entries) present[nd.channel - 1] = true;
    for (int i = 0; i < K; ++i)
      if (!present[i])
        throw validation_error("noise channels must be contiguous from 1; "
                               "channel " +
                               std::to_string(i + 1) + " is missing");
  }
  m.noise = NoiseMatrixSpec(K * L, V * L);
  for (const auto& nd : decl.noise_entries) {
    for (int cell = 0; cell < L; ++cell) {
      int target_cell = offset_cell(decl.lattice, cell, nd.target);
      if (target_cell < 0) continue;
      std::vector<PolyTerm> terms;
      for (const auto& t : nd.terms)
        expand_term(t, decl.lattice, V, cell, terms);
      PolynomialField poly{std::move(terms)};
      if (poly.terms().empty()) continue;
      m.noise.set_entry(cell * K + (nd.channel - 1),
                        target_cell * V + nd.var,
                        make_field(std::move(poly)));
    }
  }

  if (!decl.potential_terms.empty()) {
    std::vector<PolyTerm> terms;
    for (int cell = 0; cell < L; ++cell)
      for (const auto& t : decl.potential_terms)
        expand_term(t, decl.lattice, V, cell, terms);
    m.potential = make_field(PolynomialField(std::move(terms)));
  }

  for (const auto& e : decl.constraint_entries) m.constraints.add(e);

  m.declaration = std::make_shared<ModelDecl>(std::move(decl));
  m.validate();
  return m;
}

inline ModelSpec load_model(const std::string& config_text) {
  return build_model(parse_model_decl(config_text));
}

namespace config_detail {

inline std::string format_term(const TermDecl& t,
                               const std::vector<Variable>& vars) {
  std::ostringstream os;
  os << "term = " << text::fmt_double(t.coeff);
  for (const auto& f : t.factors) {
    os << " * " << vars[f.var].name;
    if (f.nn)
      os << "@nn";
    else if (f.offset != CellOffset::self)
      os << "@" << cell_offset_name(f.offset);
    if (f.power != 1) os << "^" << f.power;
  }
  if (!t.schedule.empty()) {
    os << " | schedule =";
    for (double v : t.schedule) os << " " << text::fmt_double(v);
  }
  if (!t.fit_name.empty()) {
    os << " | fit = " << t.fit_name << " in [" << text::fmt_double(t.fit_lo)
       << ", " << text::fmt_double(t.fit_hi) << "]";
  }
  os << "\n";
  return os.str();
}

}  // namespace config_detail

/// Writes a model back to the config grammar. Requires the model to have been
/// built from a declarative description (loading the output reproduces the
/// model).
inline std::string serialize_model(const ModelSpec& m) {
  if (!m.declaration)
    throw config_error(
        "model was not built from a declarative description and cannot be "
        "serialized");
  const ModelDecl& d = *m.declaration;
  std::ostringstream os;
  os << "[model]\n"
     << "dt = " << text::fmt_double(d.dt) << "\n\n";
  os << "[variables]\n";
  for (const auto& v : d.variables)
    os << v.name << " = " << text::fmt_double(v.lo) << ", "
       << text::fmt_double(v.hi) << ", " << v.mesh_points << "\n";
  os << "\n[lattice]\n"
     << "rows = " << d.lattice.rows << "\n"
     << "cols = " << d.lattice.cols << "\n"
     << "boundary = " << (d.lattice.periodic ? "periodic" : "open") << "\n";
  for (std::size_t v = 0; v < d.variables.size(); ++v) {
    if (d.drift_terms.size() <= v || d.drift_terms[v].empty()) continue;
    os << "\n[drift " << d.variables[v].name << "]\n";
    for (const auto& t : d.drift_terms[v])
      os << config_detail::format_term(t, d.variables);
  }
  for (const auto& nd : d.noise_entries) {
    os << "\n[noise " << nd.channel << " " << d.variables[nd.var].name
       << "]\n";
    if (nd.target != CellOffset::self)
      os << "offset = " << cell_offset_name(nd.target) << "\n";
    for (const auto& t : nd.terms)
      os << config_detail::format_term(t, d.variables);
  }
  if (!d.potential_terms.empty()) {
    os << "\n[potential]\n";
    for (const auto& t : d.potential_terms)
      os << config_detail::format_term(t, d.variables);
  }
  if (!d.constraint_entries.empty()) {
    os << "\n[constraints]\n";
    for (const auto& e : d.constraint_entries)
      os << "J = " << e.epoch << ", " << d.variables[e.var].name << ", "
         << d.lattice.row_of(e.cell) << ", " << d.lattice.col_of(e.cell)
         << ", " << text::fmt_double(e.value) << "\n";
  }
  return os.str();
}

struct ExtractedSection {
  int line = 0;                     // header line number in the original file
  std::vector<std::string> header;  // tokens inside the brackets
  std::vector<config_detail::Line> body;
};

/// Pulls out every section whose first header token is in `names`, blanking
/// the consumed lines in the returned remainder so that parse_model_decl
/// error line numbers still refer to the original file.
inline std::pair<std::vector<ExtractedSection>, std::string> extract_sections(
    const std::string& config_text, const std::set<std::string>& names) {
  std::vector<ExtractedSection> taken;
  std::string remainder;
  std::istringstream in(config_text);
  std::string raw;
  int n = 0;
  bool capturing = false;
  while (std::getline(in, raw)) {
    ++n;
    std::string stripped = raw;
    if (auto hash = stripped.find('#'); hash != std::string::npos)
      stripped = stripped.substr(0, hash);
    std::string line = text::trim(stripped);
    if (!line.empty() && line.front() == '[') {
      if (line.back() != ']')
        throw config_detail::at_line(n, "unterminated section header");
      auto header = text::split_ws(line.substr(1, line.size() - 2));
      if (header.empty())
        throw config_detail::at_line(n, "empty section header");
      capturing = names.count(header[0]) > 0;
      if (capturing) {
        taken.push_back({n, header, {}});
        remainder += "\n";
        continue;
      }
    } else if (capturing) {
      if (!line.empty()) taken.back().body.push_back({n, line});
      remainder += "\n";
      continue;
    }
    remainder += raw;
    remainder += "\n";
  }
  return {std::move(taken), std::move(remainder)};
}

}  // namespace statpath
