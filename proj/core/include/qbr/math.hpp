#pragma once
// Shared numerics: scaled complementary error function, Gauss-Legendre
// quadrature (fixed and adaptive, scalar- or matrix-valued), a golden-section
// minimizer, and counter-based random-engine derivation.
// Part of qbusrep. MIT licensed; see LICENSE.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "qbr/errors.hpp"

namespace qbr::math {

// exp(x^2) erfc(x), evaluated without forming the overflowing factors.
// Accurate to ~1e-13 relative for x >= 0; for negative x it uses the
// reflection erfcx(-x) = 2 exp(x^2) - erfcx(x) and therefore overflows for
// x < -26 or so. Callers with strongly negative arguments should keep the
// exponential factored out (see the pulse-envelope code in cqed).
double erfcx(double x);

struct QuadratureRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;  // sum to 2
};

// Nodes and weights of the n-point Gauss-Legendre rule (cached, thread-safe).
const QuadratureRule& gauss_legendre_rule(int n);

namespace detail {

inline double error_norm(double v) { return std::abs(v); }
inline double error_norm(const std::complex<double>& v) { return std::abs(v); }
template <class Derived>
double error_norm(const Eigen::MatrixBase<Derived>& v) {
  return v.cwiseAbs().maxCoeff();
}

}  // namespace detail

// Fixed-order Gauss-Legendre integration of f over [a, b].
template <class F>
auto gauss_legendre(F&& f, double a, double b, int order) {
  const QuadratureRule& rule = gauss_legendre_rule(order);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  using R = std::decay_t<decltype(f(a))>;
  R acc = rule.weights[0] * f(mid + half * rule.nodes[0]);
  for (std::size_t i = 1; i < rule.nodes.size(); ++i) {
    acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
  }
  return R(half * acc);
}

// Adaptive Gauss-Legendre integration: bisects until the 15- vs 30-point
// estimates agree to the requested tolerance. Works for double, complex, and
// Eigen matrix integrands (error measured as the largest entry).
template <class F>
auto adaptive_gauss_legendre(F&& f, double a, double b, double rel_tol,
                             double abs_tol = 0.0, int max_depth = 40) {
  using R = std::decay_t<decltype(f(a))>;
  const R rough = gauss_legendre(f, a, b, 30);
  double tol = std::max(abs_tol, rel_tol * detail::error_norm(rough));
  if (tol <= 0.0) tol = rel_tol;  // integral may be genuinely zero

  std::function<R(double, double, double, int)> rec =
      [&](double lo, double hi, double budget, int depth) -> R {
    const R coarse = gauss_legendre(f, lo, hi, 15);
    const R fine = gauss_legendre(f, lo, hi, 30);
    if (detail::error_norm(R(fine - coarse)) <= budget) return fine;
    if (depth >= max_depth) {
      throw SolverError("adaptive quadrature failed to converge on [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    const double mid = 0.5 * (lo + hi);
    return R(rec(lo, mid, 0.5 * budget, depth + 1) +
             rec(mid, hi, 0.5 * budget, depth + 1));
  };
  return rec(a, b, tol, 0);
}

// Minimizes a unimodal function on [a, b] to absolute x tolerance; returns
// the minimizer location.
double golden_section_minimize(const std::function<double(double)>& f,
                               double a, double b, double x_tol);

// SplitMix64 step, the standard 64-bit mixing function.
std::uint64_t splitmix64(std::uint64_t& state);

// Derives an independent, reproducible engine for (master_seed, stream_id).
// Distinct stream ids give statistically independent sequences, so parallel
// simulation trials can draw without shared state.
std::mt19937_64 make_stream_engine(std::uint64_t master_seed,
                                   std::uint64_t stream_id);

inline double sq(double x) { return x * x; }

}  // namespace qbr::math
