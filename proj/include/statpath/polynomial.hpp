#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "statpath/errors.hpp"

namespace statpath {

/// One monomial term: coeff * prod_d M_d^k_d, powers stored sparsely as
/// (dimension, exponent) pairs sorted by dimension.
///
/// An optional per-epoch schedule scales the coefficient:
/// coeff(s) = coeff * schedule[min(s, schedule.size()-1)]. Empty schedule
/// means autonomous.
struct PolyTerm {
  double coeff = 0.0;
  std::vector<std::pair<int, int>> powers;
  std::vector<double> schedule;

  // Fitting metadata; empty fit_name means the coefficient is fixed.
  std::string fit_name;
  double fit_lo = 0.0;
  double fit_hi = 0.0;

  double coeff_at(int epoch) const {
    if (schedule.empty()) return coeff;
    std::size_t i = std::min<std::size_t>(
        epoch < 0 ? 0 : static_cast<std::size_t>(epoch), schedule.size() - 1);
    return coeff * schedule[i];
  }

  bool same_shape(const PolyTerm& o) const {
    return powers == o.powers && schedule == o.schedule &&
           fit_name == o.fit_name;
  }
};

/// Multivariate polynomial over the flattened (variable, cell) dimensions.
/// Partial derivatives are exact (power rule), never finite differences.
class PolynomialField {
public:
  PolynomialField() = default;
  explicit PolynomialField(std::vector<PolyTerm> terms)
      : terms_(std::move(terms)) {
    canonicalize();
  }

  static PolynomialField constant(double c) {
    PolyTerm t;
    t.coeff = c;
    return PolynomialField({t});
  }

  /// coeff * M_dim^power
  static PolynomialField monomial(double coeff, int dim, int power = 1) {
    PolyTerm t;
    t.coeff = coeff;
    if (power != 0) t.powers.push_back({dim, power});
    return PolynomialField({t});
  }

  const std::vector<PolyTerm>& terms() const { return terms_; }
  std::vector<PolyTerm>& mutable_terms() { return terms_; }

  bool is_constant() const {
    for (const auto& t : terms_)
      if (!t.powers.empty() || !t.schedule.empty()) return false;
    return true;
  }

  bool has_schedule() const {
    for (const auto& t : terms_)
      if (!t.schedule.empty()) return true;
    return false;
  }

  /// Largest dimension index referenced, or -1 for constants.
  int max_dim() const {
    int m = -1;
    for (const auto& t : terms_)
      for (const auto& [d, k] : t.powers) m = std::max(m, d);
    return m;
  }

  template <typename PointLike>
  double value(const PointLike& p, int epoch = 0) const {
    double sum = 0.0;
    for (const auto& t : terms_) {
      double v = t.coeff_at(epoch);
      for (const auto& [d, k] : t.powers) v *= ipow(p[d], k);
      sum += v;
    }
    return sum;
  }

  template <typename PointLike>
  double partial(const PointLike& p, int dim, int epoch = 0) const {
    double sum = 0.0;
    for (const auto& t : terms_) {
      double v = t.coeff_at(epoch);
      bool hit = false;
      for (const auto& [d, k] : t.powers) {
        if (d == dim) {
          hit = true;
          v *= k * ipow(p[d], k - 1);
        } else {
          v *= ipow(p[d], k);
        }
      }
      if (hit) sum += v;
    }
    return sum;
  }

  template <typename PointLike>
  double second_partial(const PointLike& p, int d1, int d2,
                        int epoch = 0) const {
    double sum = 0.0;
    for (const auto& t : terms_) {
      double v = t.coeff_at(epoch);
      if (d1 == d2) {
        int k1 = exponent_of(t, d1);
        if (k1 < 2) continue;
        for (const auto& [d, k] : t.powers)
          v *= (d == d1) ? k * (k - 1) * ipow(p[d], k - 2) : ipow(p[d], k);
      } else {
        int k1 = exponent_of(t, d1), k2 = exponent_of(t, d2);
        if (k1 < 1 || k2 < 1) continue;
        for (const auto& [d, k] : t.powers) {
          if (d == d1)
            v *= k * ipow(p[d], k - 1);
          else if (d == d2)
            v *= k * ipow(p[d], k - 1);
          else
            v *= ipow(p[d], k);
        }
      }
      sum += v;
    }
    return sum;
  }

  /// Exact symbolic partial derivative with respect to one dimension.
  PolynomialField differentiate(int dim) const {
    std::vector<PolyTerm> out;
    for (const auto& t : terms_) {
      int k = exponent_of(t, dim);
      if (k == 0) continue;
      PolyTerm d = t;
      d.coeff *= k;
      d.fit_name.clear();  // derived coefficients are not directly fittable
      for (auto& [dd, kk] : d.powers)
        if (dd == dim) kk -= 1;
      std::erase_if(d.powers, [](const auto& pk) { return pk.second == 0; });
      out.push_back(std::move(d));
    }
    return PolynomialField(std::move(out));
  }

  PolynomialField scaled(double a) const {
    std::vector<PolyTerm> out = terms_;
    for (auto& t : out) t.coeff *= a;
    return PolynomialField(std::move(out));
  }

  static PolynomialField sum(const PolynomialField& a,
                             const PolynomialField& b) {
    std::vector<PolyTerm> out = a.terms_;
    out.insert(out.end(), b.terms_.begin(), b.terms_.end());
    return PolynomialField(std::move(out));
  }

private:
  static double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
  }

  static int exponent_of(const PolyTerm& t, int dim) {
    for (const auto& [d, k] : t.powers)
      if (d == dim) return k;
    return 0;
  }

  /// Sorts powers by dimension and merges terms with identical shape.
  void canonicalize() {
    for (auto& t : terms_) {
      std::sort(t.powers.begin(), t.powers.end());
      std::erase_if(t.powers, [](const auto& pk) { return pk.second == 0; });
      for (const auto& [d, k] : t.powers)
        if (d < 0 || k < 0)
          throw config_error("polynomial term has negative dimension or exponent");
    }
    std::vector<PolyTerm> merged;
    for (auto& t : terms_) {
      bool found = false;
      for (auto& m : merged) {
        if (m.same_shape(t)) {
          m.coeff += t.coeff;
          found = true;
          break;
        }
      }
      if (!found) merged.push_back(std::move(t));
    }
    terms_ = std::move(merged);
  }

  std::vector<PolyTerm> terms_;
};

}  // namespace statpath
