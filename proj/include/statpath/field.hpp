#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "statpath/polynomial.hpp"

namespace statpath {

/// A scalar field over the flattened state space, with exact first and second
/// partials. Epoch indexes discrete time for non-autonomous coefficients.
class FieldEvaluator {
public:
  virtual ~FieldEvaluator() = default;

  virtual double value(const std::vector<double>& p, int epoch) const = 0;
  virtual double partial(const std::vector<double>& p, int dim,
                         int epoch) const = 0;
  virtual double second_partial(const std::vector<double>& p, int d1, int d2,
                                int epoch) const = 0;

  /// True when value is independent of both the state point and the epoch.
  virtual bool is_constant() const { return false; }
};

class PolynomialEvaluator final : public FieldEvaluator {
public:
  explicit PolynomialEvaluator(PolynomialField poly) : poly_(std::move(poly)) {}

  double value(const std::vector<double>& p, int epoch) const override {
    return poly_.value(p, epoch);
  }
  double partial(const std::vector<double>& p, int dim,
                 int epoch) const override {
    return poly_.partial(p, dim, epoch);
  }
  double second_partial(const std::vector<double>& p, int d1, int d2,
                        int epoch) const override {
    return poly_.second_partial(p, d1, d2, epoch);
  }
  bool is_constant() const override { return poly_.is_constant(); }

  const PolynomialField& poly() const { return poly_; }

private:
  PolynomialField poly_;
};

/// Closed-form field supplied as callables; used for geometries whose
/// components are not polynomial (trigonometric metrics and the like).
/// Derivative callables are optional only if never queried.
class AnalyticField final : public FieldEvaluator {
public:
  using Value = std::function<double(const std::vector<double>&)>;
  using Partial = std::function<double(const std::vector<double>&, int)>;
  using SecondPartial =
      std::function<double(const std::vector<double>&, int, int)>;

  AnalyticField(Value v, Partial d, SecondPartial dd, bool constant = false)
      : v_(std::move(v)), d_(std::move(d)), dd_(std::move(dd)),
        constant_(constant) {}

  double value(const std::vector<double>& p, int) const override {
    return v_(p);
  }
  double partial(const std::vector<double>& p, int dim, int) const override {
    if (!d_) throw numerical_error("analytic field has no first-partial rule");
    return d_(p, dim);
  }
  double second_partial(const std::vector<double>& p, int d1, int d2,
                        int) const override {
    if (!dd_)
      throw numerical_error("analytic field has no second-partial rule");
    return dd_(p, d1, d2);
  }
  bool is_constant() const override { return constant_; }

private:
  Value v_;
  Partial d_;
  SecondPartial dd_;
  bool constant_ = false;
};

using FieldPtr = std::shared_ptr<const FieldEvaluator>;

inline FieldPtr make_field(PolynomialField poly) {
  return std::make_shared<PolynomialEvaluator>(std::move(poly));
}

inline FieldPtr make_constant_field(double c) {
  return std::make_shared<PolynomialEvaluator>(PolynomialField::constant(c));
}

}  // namespace statpath
