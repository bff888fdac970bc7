// Part of qbusrep. MIT licensed; see LICENSE.
// Tests for the bus-mediated controlled-phase gate channel. The distortion
// matrix is checked against its small-angle closed forms, the Kraus
// decomposition against element-wise reassembly, and the noiseless channel
// against the exact controlled gate.

#include <cmath>
#include <complex>
#include <random>

#include "doctest.h"
#include "qbr/czgate.hpp"
#include "qbr/densmat.hpp"
#include "qbr/errors.hpp"
#include "test_util.hpp"

using namespace qbr;
using namespace qbr::czgate;
using Complex = std::complex<double>;

namespace {

// Element-wise reassembly of the channel from its diagonal Kraus operators.
ComplexMatrix reassemble(const GateChannel& ch) {
  ComplexMatrix r = ComplexMatrix::Zero(4, 4);
  for (const ComplexMatrix& k : ch.kraus.operators) {
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        r(a, b) += k(a, a) * std::conj(k(b, b));
      }
    }
  }
  return r;
}

CZParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(1.0, 25.0), ph(0.0, 6.28),
      ang(1e-4, 0.05), tr(0.7, 1.0);
  CZParams p;
  for (int i = 0; i < 4; ++i) {
    p.alpha[i] = std::polar(mag(rng), ph(rng));
    p.theta[i] = ang(rng);
    p.transmission[i] = tr(rng);
  }
  return p;
}

}  // namespace

TEST_SUITE("czgate") {

TEST_CASE("distortion matrix is Hermitian with unit diagonal and bounded entries") {
  auto rng = test::seeded_rng(606);
  for (int trial = 0; trial < 6; ++trial) {
    const CZParams p = random_params(rng);
    const DistortionMatrix d = distortion_matrix(p);
    CHECK(test::max_abs_diff(d.entries, d.entries.adjoint()) <= 1e-12);
    for (int a = 0; a < 4; ++a) {
      CHECK(std::abs(d.entries(a, a) - 1.0) <= 1e-12);
      for (int b = 0; b < 4; ++b) {
        CHECK(std::abs(d.entries(a, b)) <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("kraus decomposition reassembles the distortion matrix element-wise") {
  auto rng = test::seeded_rng(707);
  for (int trial = 0; trial < 8; ++trial) {
    const CZParams p = random_params(rng);
    const DistortionMatrix d = distortion_matrix(p);
    const GateChannel ch = kraus_decompose(d);
    CHECK(test::max_abs_diff(reassemble(ch), d.entries) <= 1e-9);
    CHECK(ch.kraus.is_complete());
    double sum = 0.0;
    for (double l : ch.lambdas) {
      CHECK(l >= 0.0);
      sum += l;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(ch.lambda0 >= 0.25 - 1e-12);
  }
}

TEST_CASE("semi-ideal distortion matches its closed forms at small angle") {
  const double theta = 1e-3;
  for (double big_t : {0.97, 0.99, 0.999}) {
    const CZParams p = CZParams::from_gate_condition(theta, big_t);
    const double x = gate_condition(big_t);            // |alpha theta|^2
    const double a2 = x / (theta * theta);             // |alpha|^2
    const double q4 = a2 * theta * theta * theta * theta;  // |alpha theta^2|^2

    const Complex d01 = std::exp(
        -Complex(big_t * (1.0 - big_t * big_t), -big_t * (1.0 - big_t)) * (x / 2.0) -
        q4 / 4.0);
    const Complex d02 = std::exp(
        -Complex(1.0 - big_t * big_t, big_t * (1.0 - big_t)) * (x / 2.0) - q4 / 4.0);
    const Complex d03 =
        std::exp(Complex(-(1.0 - big_t * big_t) * (1.0 + big_t) * x / 2.0, 0.0));

    const DistortionMatrix d = distortion_matrix(p);
    CHECK(std::abs(d.entries(0, 1) - d01) <= 1e-4 * std::abs(d01));
    CHECK(std::abs(d.entries(3, 2) - d01) <= 1e-4 * std::abs(d01));
    CHECK(std::abs(d.entries(0, 2) - d02) <= 1e-4 * std::abs(d02));
    CHECK(std::abs(d.entries(3, 1) - d02) <= 1e-4 * std::abs(d02));
    CHECK(std::abs(d.entries(0, 3) - d03) <= 1e-4 * std::abs(d03));
    CHECK(std::abs(d.entries(1, 2) - d03) <= 1e-4 * std::abs(d03));
  }
}

TEST_CASE("berry coefficient of the nonlinear term follows its expansion") {
  const double theta = 1e-3;
  for (double big_t : {1.0, 0.99, 0.9, 0.7}) {
    const CZParams p = CZParams::from_gate_condition(theta, big_t);
    const GateChannel ch = make_gate_channel(p);
    const double x = gate_condition(big_t);
    const double expect = big_t * big_t * (1.0 + 2.0 * big_t) * x / 4.0;
    CHECK(std::abs(ch.berry.c12 - expect) <= 1e-4 * expect);
  }
}

TEST_CASE("gate condition value and domain") {
  CHECK(gate_condition(1.0) == doctest::Approx(M_PI / 2.0).epsilon(1e-14));
  CHECK(gate_condition(0.5) == doctest::Approx(M_PI / 0.75).epsilon(1e-14));
  CHECK_THROWS_AS(gate_condition(0.04), ConfigError);
  CHECK_THROWS_AS(gate_condition(0.0), ConfigError);
  CHECK_THROWS_AS(gate_condition(1.5), ConfigError);
  CHECK_THROWS_AS(CZParams::from_gate_condition(0.0, 0.9), ConfigError);
}

TEST_CASE("channel purity improves as loss and angle vanish") {
  double last = 1.0;
  bool decreasing = true;
  double first = -1.0;
  for (double s : {1.0, 0.5, 0.25, 0.125}) {
    const CZParams p = CZParams::from_gate_condition(1e-3 * s, 1.0 - 0.02 * s);
    const GateChannel ch = make_gate_channel(p);
    const double err = 1.0 - ch.lambda0;
    if (first < 0.0) first = err;
    decreasing = decreasing && (err < last);
    last = err;
  }
  CHECK(decreasing);
  CHECK(last <= first / 6.0);
  CHECK(last < 6e-3);

  // lossless, tiny angle: only the theta^4 distortion remains, and the
  // (0,3) pair shares z1 z2, so even that term cancels there. Its residual
  // is cubic in theta, far below the q4 / 4 ~ 4e-7 scale a genuine theta^4
  // term would leave.
  const CZParams pure = CZParams::from_gate_condition(1e-3, 1.0);
  const GateChannel ch = make_gate_channel(pure);
  CHECK(1.0 - ch.lambda0 <= 1e-5);
  CHECK(std::abs(distortion_matrix(pure).entries(0, 3) - 1.0) <= 1e-8);
}

TEST_CASE("quoted purity estimate stays in range for comparison") {
  for (double t : {1e-4, 1e-3, 1e-2, 0.1}) {
    const double est = lambda0_quoted_estimate(t);
    CHECK(est > 0.0);
    CHECK(est <= 1.0);
  }
}

TEST_CASE("noiseless channel through noisy_cx equals the exact controlled gate") {
  auto rng = test::seeded_rng(808);
  const GateChannel ch = GateChannel::noiseless();
  for (int trial = 0; trial < 6; ++trial) {
    const DensityMatrix rho2 = test::random_density(2, rng);
    const DensityMatrix got = noisy_cx(rho2, ch, 0, 1);
    const DensityMatrix expect = apply_unitary(rho2, cnot(), {0, 1});
    CHECK(test::max_abs_diff(got.matrix(), expect.matrix()) <= 1e-12);

    const DensityMatrix rho3 = test::random_density(3, rng);
    const DensityMatrix got3 = noisy_cx(rho3, ch, 2, 0);
    const DensityMatrix expect3 = apply_unitary(rho3, cnot(), {2, 0});
    CHECK(test::max_abs_diff(got3.matrix(), expect3.matrix()) <= 1e-12);
  }
}

TEST_CASE("lossy channel preserves trace and positivity") {
  auto rng = test::seeded_rng(909);
  const CZParams p = CZParams::from_gate_condition(0.01, 0.98);
  const GateChannel ch = make_gate_channel(p);
  for (int trial = 0; trial < 4; ++trial) {
    const DensityMatrix rho = test::random_density(2, rng);
    const DensityMatrix out = noisy_cx(rho, ch, 0, 1);
    CHECK(std::abs(out.matrix().trace().real() - 1.0) <= 1e-11);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(out.matrix());
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("error curve grows with loss at every angle") {
  const std::vector<double> thetas = {0.01, 0.001};
  const std::vector<double> losses = {1e-4, 1e-3, 1e-2, 0.1};
  const auto rows = cz_error_curve(thetas, losses);
  REQUIRE(rows.size() == thetas.size() * losses.size());
  for (double th : thetas) {
    double prev = -1.0;
    for (const ErrorCurveRow& row : rows) {
      if (row.theta != th) continue;
      CHECK(row.one_minus_lambda0 >= 0.0);
      CHECK(row.one_minus_lambda0 > prev);
      prev = row.one_minus_lambda0;
    }
  }
}

TEST_CASE("parameter validation") {
  CZParams p;
  p.transmission[2] = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  DistortionMatrix bad;
  bad.entries = ComplexMatrix::Ones(4, 4);
  bad.entries(0, 1) = Complex(0.0, 0.5);  // breaks Hermiticity
  CHECK_THROWS_AS(kraus_decompose(bad), ConfigError);
}

}  // TEST_SUITE
