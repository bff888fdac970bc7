// Part of qbusrep. MIT licensed; see LICENSE.
// Tests for the shared numerics: scaled complementary error function,
// Gauss-Legendre quadrature, golden-section search, and seeded streams.

#include <cmath>
#include <random>

#include "doctest.h"
#include "qbr/math.hpp"

using namespace qbr;

TEST_SUITE("math") {

TEST_CASE("erfcx agrees with the naive product where it is finite") {
  for (double x : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
    const double naive = std::exp(x * x) * std::erfc(x);
    CHECK(std::abs(math::erfcx(x) - naive) <= 1e-13 * std::max(1.0, naive));
  }
  CHECK(math::erfcx(0.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("erfcx asymptotics: x erfcx(x) -> 1/sqrt(pi)") {
  // The continued-fraction tail gives x erfcx(x) = (1 - 1/(2x^2) + O(x^-4))
  // / sqrt(pi), so the approach is quadratic in 1/x.
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::acos(-1.0));
  for (double x : {50.0, 500.0, 5000.0}) {
    const double v = x * math::erfcx(x);
    CHECK(std::abs(v - inv_sqrt_pi) <= 0.6 * inv_sqrt_pi / (x * x));
  }
}

TEST_CASE("erfcx negative reflection") {
  for (double x : {0.25, 1.0, 3.0}) {
    const double lhs = math::erfcx(-x);
    const double rhs = 2.0 * std::exp(x * x) - math::erfcx(x);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(rhs));
  }
}

TEST_CASE("fixed Gauss-Legendre integrates polynomials of degree 2n-1 exactly") {
  // order 5 handles degree 9 exactly; int_0^1 x^9 dx = 0.1
  auto f = [](double x) { return std::pow(x, 9); };
  CHECK(math::gauss_legendre(f, 0.0, 1.0, 5) == doctest::Approx(0.1).epsilon(1e-14));
  // sin over a full period
  auto s = [](double x) { return std::sin(x); };
  CHECK(math::gauss_legendre(s, 0.0, std::acos(-1.0), 30) ==
        doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("quadrature rule weights sum to 2 and nodes are symmetric") {
  const auto& rule = math::gauss_legendre_rule(30);
  double wsum = 0.0;
  for (double w : rule.weights) wsum += w;
  CHECK(wsum == doctest::Approx(2.0).epsilon(1e-14));
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    CHECK(rule.nodes[i] ==
          doctest::Approx(-rule.nodes[rule.nodes.size() - 1 - i]).epsilon(1e-13));
  }
}

TEST_CASE("adaptive quadrature resolves a sharply peaked integrand") {
  // int_0^1 1/sqrt(x + a) dx = 2(sqrt(1+a) - sqrt(a))
  const double a = 1e-6;
  auto f = [a](double x) { return 1.0 / std::sqrt(x + a); };
  const double expected = 2.0 * (std::sqrt(1.0 + a) - std::sqrt(a));
  const double got = math::adaptive_gauss_legendre(f, 0.0, 1.0, 1e-10);
  CHECK(std::abs(got - expected) <= 1e-8 * expected);
}

TEST_CASE("adaptive quadrature handles complex integrands") {
  auto f = [](double x) { return std::polar(1.0, 40.0 * x); };
  const std::complex<double> expected =
      (std::polar(1.0, 40.0) - 1.0) / std::complex<double>(0.0, 40.0);
  const std::complex<double> got = math::adaptive_gauss_legendre(f, 0.0, 1.0, 1e-10);
  CHECK(std::abs(got - expected) <= 1e-9);
}

TEST_CASE("golden section finds an interior minimum") {
  const double pi = std::acos(-1.0);
  auto f = [pi](double x) { return (x - pi) * (x - pi); };
  const double x = math::golden_section_minimize(f, 0.0, 10.0, 1e-8);
  CHECK(std::abs(x - pi) <= 1e-6);
}

TEST_CASE("splitmix64 is deterministic") {
  std::uint64_t s1 = 42, s2 = 42;
  for (int i = 0; i < 8; ++i) {
    CHECK(math::splitmix64(s1) == math::splitmix64(s2));
  }
  CHECK(s1 == s2);
}

TEST_CASE("stream engines: same stream identical, different streams decorrelated") {
  auto a = math::make_stream_engine(7, 3);
  auto b = math::make_stream_engine(7, 3);
  auto c = math::make_stream_engine(7, 4);
  bool any_diff = false;
  for (int i = 0; i < 16; ++i) {
    const auto va = a();
    CHECK(va == b());
    any_diff = any_diff || (va != c());
  }
  CHECK(any_diff);
}

}  // TEST_SUITE
