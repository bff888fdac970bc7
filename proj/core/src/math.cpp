// Shared numerics implementation. Part of qbusrep. MIT licensed; see LICENSE.

#include "qbr/math.hpp"

#include <map>
#include <mutex>

namespace qbr::math {

double erfcx(double x) {
  if (x >= 20.0) {
    // Asymptotic series 1/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4) - ...),
    // good to better than 1e-14 at the switch point.
    const double inv2 = 1.0 / (x * x);
    double series = 1.0 + inv2 * (-0.5 + inv2 * (0.75 + inv2 * (-1.875 + inv2 * 6.5625)));
    return series / (x * std::sqrt(M_PI));
  }
  if (x >= 0.0) {
    return std::exp(x * x) * std::erfc(x);
  }
  // Reflection; overflows for x below about -26, documented in the header.
  return 2.0 * std::exp(x * x) - erfcx(-x);
}

namespace {

QuadratureRule compute_rule(int n) {
  // Newton iteration on the Legendre polynomial P_n, seeded by the Chebyshev
  // approximation to the k-th root.
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    double x = std::cos(M_PI * (k + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[n - 1 - k] = x;
    rule.weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

}  // namespace

const QuadratureRule& gauss_legendre_rule(int n) {
  if (n < 1) throw ConfigError("quadrature order must be positive");
  static std::mutex mu;
  static std::map<int, QuadratureRule> cache;
  std::scoped_lock lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_rule(n)).first;
  return it->second;
}

double golden_section_minimize(const std::function<double(double)>& f,
                               double a, double b, double x_tol) {
  if (!(b > a)) throw ConfigError("golden_section_minimize: empty interval");
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > x_tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::mt19937_64 make_stream_engine(std::uint64_t master_seed,
                                   std::uint64_t stream_id) {
  std::uint64_t state = master_seed;
  // Jump to a stream-specific region of the SplitMix sequence, then expand
  // eight 64-bit words through seed_seq for full state-space coverage.
  std::uint64_t mixed = splitmix64(state) ^ (stream_id * 0xD1B54A32D192ED03ULL);
  std::uint64_t s2 = mixed;
  std::uint32_t words[16];
  for (int i = 0; i < 8; ++i) {
    const std::uint64_t w = splitmix64(s2);
    words[2 * i] = static_cast<std::uint32_t>(w);
    words[2 * i + 1] = static_cast<std::uint32_t>(w >> 32);
  }
  std::seed_seq seq(std::begin(words), std::end(words));
  return std::mt19937_64(seq);
}

}  // namespace qbr::math
