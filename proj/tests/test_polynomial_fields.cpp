#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "statpath/field.hpp"
#include "statpath/polynomial.hpp"
#include "statpath/rng.hpp"

using statpath::AnalyticField;
using statpath::FieldPtr;
using statpath::PolynomialField;
using statpath::PolyTerm;

TEST_CASE("polynomial value and exact partials on a known polynomial") {
  // p(x, y) = 2 x^2 y + 3 y - 1.5
  PolynomialField p;
  {
    PolyTerm t1;
    t1.coeff = 2.0;
    t1.powers = {{0, 2}, {1, 1}};
    PolyTerm t2;
    t2.coeff = 3.0;
    t2.powers = {{1, 1}};
    PolyTerm t3;
    t3.coeff = -1.5;
    p = PolynomialField({t1, t2, t3});
  }
  std::vector<double> at = {1.5, -2.0};
  CHECK(p.value(at) == Catch::Approx(-16.5).margin(1e-14));
  CHECK(p.partial(at, 0) == Catch::Approx(-12.0).margin(1e-14));
  CHECK(p.partial(at, 1) == Catch::Approx(7.5).margin(1e-14));
  CHECK(p.second_partial(at, 0, 0) == Catch::Approx(-8.0).margin(1e-14));
  CHECK(p.second_partial(at, 0, 1) == Catch::Approx(6.0).margin(1e-14));
  CHECK(p.second_partial(at, 1, 0) == Catch::Approx(6.0).margin(1e-14));
  CHECK(p.second_partial(at, 1, 1) == 0.0);
}

TEST_CASE("duplicate-shape terms merge into one canonical term") {
  PolyTerm a;
  a.coeff = 2.0;
  a.powers = {{0, 2}};
  PolyTerm b;
  b.coeff = 3.0;
  b.powers = {{0, 2}};
  PolynomialField p({a, b});
  REQUIRE(p.terms().size() == 1);
  CHECK(p.terms()[0].coeff == 5.0);

  // Unsorted power lists of the same monomial also merge.
  PolyTerm c;
  c.coeff = 1.0;
  c.powers = {{1, 1}, {0, 2}};
  PolyTerm d;
  d.coeff = 4.0;
  d.powers = {{0, 2}, {1, 1}};
  PolynomialField q({c, d});
  REQUIRE(q.terms().size() == 1);
  CHECK(q.terms()[0].coeff == 5.0);
  CHECK(q.terms()[0].powers == std::vector<std::pair<int, int>>{{0, 2},
                                                                {1, 1}});
}

TEST_CASE("terms with different schedules or fit tags do not merge") {
  PolyTerm a;
  a.coeff = 1.0;
  a.powers = {{0, 1}};
  PolyTerm b = a;
  b.schedule = {1.0, 0.5};
  PolynomialField p({a, b});
  CHECK(p.terms().size() == 2);

  PolyTerm c = a;
  c.fit_name = "k";
  c.fit_lo = 0.0;
  c.fit_hi = 2.0;
  PolynomialField q({a, c});
  CHECK(q.terms().size() == 2);
}

TEST_CASE("per-epoch schedules scale the coefficient and clamp at the end") {
  PolyTerm t;
  t.coeff = 2.0;
  t.powers = {{0, 1}};
  t.schedule = {1.0, 3.0};
  PolynomialField p({t});
  std::vector<double> at = {5.0};
  CHECK(p.value(at, 0) == 10.0);
  CHECK(p.value(at, 1) == 30.0);
  CHECK(p.value(at, 7) == 30.0);  // clamped to the last entry
  CHECK(p.partial(at, 0, 1) == 6.0);
  CHECK(p.has_schedule());
  CHECK_FALSE(p.is_constant());
}

TEST_CASE("symbolic differentiation matches pointwise partials") {
  statpath::RandomStream rng(91, 0);
  PolynomialField p;
  for (int k = 0; k < 6; ++k) {
    PolyTerm t;
    t.coeff = rng.uniform(-2.0, 2.0);
    t.powers = {{0, static_cast<int>(rng.uniform_index(4))},
                {1, static_cast<int>(rng.uniform_index(3))}};
    p = PolynomialField::sum(p, PolynomialField({t}));
  }
  for (int dim = 0; dim < 2; ++dim) {
    PolynomialField dp = p.differentiate(dim);
    for (int probe = 0; probe < 20; ++probe) {
      std::vector<double> at = {rng.uniform(-1.5, 1.5),
                                rng.uniform(-1.5, 1.5)};
      CHECK(dp.value(at) == Catch::Approx(p.partial(at, dim)).margin(1e-12));
    }
  }
}

TEST_CASE("differentiation drops fit tags from derived coefficients") {
  PolyTerm t;
  t.coeff = 2.0;
  t.powers = {{0, 3}};
  t.fit_name = "amp";
  t.fit_lo = 0.0;
  t.fit_hi = 4.0;
  PolynomialField p({t});
  PolynomialField dp = p.differentiate(0);
  REQUIRE(dp.terms().size() == 1);
  CHECK(dp.terms()[0].fit_name.empty());
  CHECK(dp.terms()[0].coeff == 6.0);
}

TEST_CASE("partials agree with central finite differences") {
  statpath::RandomStream rng(417, 0);
  PolynomialField p;
  for (int k = 0; k < 8; ++k) {
    PolyTerm t;
    t.coeff = rng.uniform(-1.0, 1.0);
    t.powers = {{0, static_cast<int>(rng.uniform_index(4))},
                {1, static_cast<int>(rng.uniform_index(4))},
                {2, static_cast<int>(rng.uniform_index(3))}};
    p = PolynomialField::sum(p, PolynomialField({t}));
  }
  const double h = 1e-5;
  for (int probe = 0; probe < 30; ++probe) {
    std::vector<double> at = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                              rng.uniform(-1.0, 1.0)};
    for (int d = 0; d < 3; ++d) {
      auto hi = at, lo = at;
      hi[d] += h;
      lo[d] -= h;
      double fd = (p.value(hi) - p.value(lo)) / (2.0 * h);
      CHECK(p.partial(at, d) == Catch::Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("second partials are symmetric in their index pair") {
  statpath::RandomStream rng(55, 0);
  PolynomialField p;
  for (int k = 0; k < 6; ++k) {
    PolyTerm t;
    t.coeff = rng.uniform(-1.0, 1.0);
    t.powers = {{0, static_cast<int>(rng.uniform_index(4))},
                {1, static_cast<int>(rng.uniform_index(4))}};
    p = PolynomialField::sum(p, PolynomialField({t}));
  }
  for (int probe = 0; probe < 20; ++probe) {
    std::vector<double> at = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    CHECK(p.second_partial(at, 0, 1) ==
          Catch::Approx(p.second_partial(at, 1, 0)).margin(1e-13));
  }
}

TEST_CASE("constant and monomial builders") {
  auto c = PolynomialField::constant(3.25);
  CHECK(c.is_constant());
  CHECK(c.value(std::vector<double>{7.0}) == 3.25);
  CHECK(c.max_dim() == -1);

  auto m = PolynomialField::monomial(2.0, 1, 3);
  std::vector<double> at = {0.0, 2.0};
  CHECK(m.value(at) == 16.0);
  CHECK(m.max_dim() == 1);
  CHECK(m.scaled(-0.5).value(at) == -8.0);
}

TEST_CASE("negative exponents are rejected") {
  PolyTerm t;
  t.coeff = 1.0;
  t.powers = {{0, -1}};
  CHECK_THROWS_AS(PolynomialField({t}), statpath::config_error);
}

TEST_CASE("analytic fields evaluate their callables and report missing rules") {
  AnalyticField f([](const std::vector<double>& p) { return std::sin(p[0]); },
                  [](const std::vector<double>& p, int) {
                    return std::cos(p[0]);
                  },
                  nullptr);
  std::vector<double> at = {0.3};
  CHECK(f.value(at, 0) == Catch::Approx(std::sin(0.3)));
  CHECK(f.partial(at, 0, 0) == Catch::Approx(std::cos(0.3)));
  CHECK_THROWS_AS(f.second_partial(at, 0, 0, 0), statpath::numerical_error);
  CHECK_THROWS_WITH(f.second_partial(at, 0, 0, 0),
                    Catch::Matchers::ContainsSubstring("second-partial"));

  AnalyticField v([](const std::vector<double>&) { return 1.0; }, nullptr,
                  nullptr);
  CHECK_THROWS_AS(v.partial(at, 0, 0), statpath::numerical_error);
  CHECK_FALSE(v.is_constant());
  AnalyticField k([](const std::vector<double>&) { return 2.0; }, nullptr,
                  nullptr, /*constant=*/true);
  CHECK(k.is_constant());
}

TEST_CASE("field wrappers preserve polynomial behavior") {
  FieldPtr f = statpath::make_field(PolynomialField::monomial(-1.0, 0, 1));
  std::vector<double> at = {2.5};
  CHECK(f->value(at, 0) == -2.5);
  CHECK(f->partial(at, 0, 0) == -1.0);
  CHECK_FALSE(f->is_constant());

  FieldPtr c = statpath::make_constant_field(4.0);
  CHECK(c->value(at, 0) == 4.0);
  CHECK(c->partial(at, 0, 0) == 0.0);
  CHECK(c->is_constant());
}
