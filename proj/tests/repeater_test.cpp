// Part of qbusrep. MIT licensed; see LICENSE.
// Tests for the repeater protocol layer. Purification is checked against the
// published recurrence on Werner inputs, swapping against its closed form,
// and the event-driven scheduler against a hand-traced two-segment run.

#include <cmath>
#include <random>

#include "doctest.h"
#include "qbr/densmat.hpp"
#include "qbr/entangle.hpp"
#include "qbr/errors.hpp"
#include "qbr/math.hpp"
#include "qbr/repeater.hpp"
#include "test_util.hpp"

using namespace qbr;
using namespace qbr::repeater;

namespace {

// Success-conditioned kept state: the parity-message mixture of the two
// matching branches.
DensityMatrix success_mixture(const PurifyOutcome& out) {
  ComplexMatrix m = ComplexMatrix::Zero(4, 4);
  if (out.rho00) m += out.p00 * out.rho00->matrix();
  if (out.rho11) m += out.p11 * out.rho11->matrix();
  m /= out.p_success;
  m = (0.5 * (m + m.adjoint())).eval();
  return DensityMatrix(2, m);
}

PairRecord record_for(int a, int b, const DensityMatrix& rho, int level = 0) {
  PairRecord r;
  r.level = level;
  r.endpoints = {a, b};
  r.rho = rho;
  return r;
}

}  // namespace

TEST_SUITE("repeater") {

TEST_CASE("white noise mixes toward the identity") {
  const DensityMatrix bell = DensityMatrix::pure(2, bell_ket(BellKind::PsiPlus));
  CHECK(fidelity_with_pure(white_noise(bell, 0.05), bell_ket(BellKind::PsiPlus)) ==
        doctest::Approx(0.9625).epsilon(1e-12));
  CHECK(fidelity_with_pure(white_noise(bell, 0.30), bell_ket(BellKind::PsiPlus)) ==
        doctest::Approx(0.775).epsilon(1e-12));
  const DensityMatrix full = white_noise(bell, 1.0);
  CHECK(test::max_abs_diff(full.matrix(), 0.25 * ComplexMatrix::Identity(4, 4)) <=
        1e-14);
  CHECK_THROWS_AS(white_noise(bell, 1.5), ConfigError);
}

TEST_CASE("gate wrappers: ideal, white, physical") {
  auto rng = test::seeded_rng(111);
  const DensityMatrix rho = test::random_density(2, rng);

  const DensityMatrix via_ideal = TwoQubitGate::ideal().apply_cx(rho, 0, 1);
  const DensityMatrix direct = apply_unitary(rho, cnot(), {0, 1});
  CHECK(test::max_abs_diff(via_ideal.matrix(), direct.matrix()) <= 1e-13);

  // a noiseless physical channel reduces to the ideal gate
  const TwoQubitGate phys = TwoQubitGate::physical(czgate::GateChannel::noiseless());
  const DensityMatrix via_phys = phys.apply_cx(rho, 0, 1);
  CHECK(test::max_abs_diff(via_phys.matrix(), direct.matrix()) <= 1e-11);

  // white(eps) on two qubits: (1 - eps) U rho U^dag + eps I/4
  const double eps = 0.35;
  const DensityMatrix via_white = TwoQubitGate::white(eps).apply_cx(rho, 0, 1);
  const ComplexMatrix expect = (1.0 - eps) * direct.matrix() +
                               eps * 0.25 * ComplexMatrix::Identity(4, 4);
  CHECK(test::max_abs_diff(via_white.matrix(), expect) <= 1e-12);
}

TEST_CASE("fully depolarizing gate erases only the gate qubits") {
  auto rng = test::seeded_rng(222);
  const DensityMatrix rho = test::random_density(3, rng);
  const DensityMatrix out = TwoQubitGate::white(1.0).apply_cx(rho, 0, 1);
  const ComplexMatrix pair = test::partial_trace_keep(out.matrix(), 3, {0, 1});
  CHECK(test::max_abs_diff(pair, 0.25 * ComplexMatrix::Identity(4, 4)) <= 1e-12);
  const ComplexMatrix kept = test::partial_trace_keep(out.matrix(), 3, {2});
  const ComplexMatrix kept_in = test::partial_trace_keep(rho.matrix(), 3, {2});
  CHECK(test::max_abs_diff(kept, kept_in) <= 1e-12);
}

TEST_CASE("compiled noise reproduces its sources") {
  const WhiteNoise wn{0.2, 0.0, 0.36};
  const CompiledNoise cw = CompiledNoise::compile(wn);
  CHECK(cw.ps == doctest::Approx(0.36).epsilon(1e-15));
  CHECK(fidelity_with_pure(cw.pair_state, bell_ket(BellKind::PsiPlus)) ==
        doctest::Approx(0.85).epsilon(1e-12));

  entangle::LinkParams link;
  link.transmission = 0.67;
  const Physical phys{link, czgate::GateChannel::noiseless()};
  const CompiledNoise cp = CompiledNoise::compile(phys);
  const entangle::PostSelectionResult ref = entangle::post_selected_state(link);
  CHECK(cp.ps == doctest::Approx(ref.ps).epsilon(1e-10));
  CHECK(test::max_abs_diff(cp.pair_state.matrix(), ref.rho12.matrix()) <= 1e-10);
}

TEST_CASE("generation attempts follow the configured probability") {
  const CompiledNoise noise = CompiledNoise::compile(WhiteNoise{0.2, 0.0, 0.36});
  auto rng = math::make_stream_engine(5, 0);
  int hits = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    if (auto rec = attempt_generation(noise, rng)) {
      ++hits;
      if (hits == 1) {
        CHECK(rec->level == 0);
        CHECK(rec->endpoints[0] == 0);
        CHECK(rec->endpoints[1] == 1);
        CHECK(fidelity_with_pure(rec->rho, bell_ket(BellKind::PsiPlus)) ==
              doctest::Approx(0.85).epsilon(1e-12));
      }
    }
  }
  const double rate = static_cast<double>(hits) / n;
  CHECK(std::abs(rate - 0.36) <= 0.006);
}

TEST_CASE("standard purification reproduces the Werner recurrence") {
  const TwoQubitGate ideal = TwoQubitGate::ideal();
  for (double f : {0.6, 0.7, 0.8, 0.9, 0.99}) {
    const DensityMatrix w = werner_state(f);
    const PurifyOutcome out = purify_map(w, w, ideal, PreRotation::Standard);
    const double num = f * f + math::sq((1.0 - f) / 3.0);
    const double den = f * f + 2.0 * f * (1.0 - f) / 3.0 +
                       5.0 * math::sq((1.0 - f) / 3.0);
    CHECK(std::abs(out.p_success - den) <= 1e-9);
    CHECK(std::abs(out.kept_fidelity - num / den) <= 1e-9);
    // the success-conditioned mixture carries the same fidelity
    const DensityMatrix kept = success_mixture(out);
    CHECK(std::abs(fidelity_with_pure(kept, bell_ket(BellKind::PsiPlus)) -
                   num / den) <= 1e-9);
  }
}

TEST_CASE("optimized pre-rotation never loses to the standard one") {
  auto rng = test::seeded_rng(333);
  const TwoQubitGate ideal = TwoQubitGate::ideal();
  for (double f : {0.55, 0.7, 0.85}) {
    const DensityMatrix w = werner_state(f);
    const PurifyOutcome std_out = purify_map(w, w, ideal, PreRotation::Standard);
    const PurifyOutcome opt_out = purify_map(w, w, ideal, PreRotation::Optimized);
    CHECK(opt_out.kept_fidelity >= std_out.kept_fidelity - 1e-12);
  }
  // and on a non-Werner input
  const DensityMatrix a = white_noise(
      DensityMatrix::pure(2, bell_ket(BellKind::PhiMinus)), 0.2);
  const PurifyOutcome std_out = purify_map(a, a, ideal, PreRotation::Standard);
  const PurifyOutcome opt_out = purify_map(a, a, ideal, PreRotation::Optimized);
  CHECK(opt_out.kept_fidelity >= std_out.kept_fidelity - 1e-12);
}

TEST_CASE("purify outcome distribution is a valid, normalized branch pair") {
  const TwoQubitGate ideal = TwoQubitGate::ideal();
  const DensityMatrix w = werner_state(0.75);
  const PurifyOutcome out = purify_map(w, w, ideal);
  CHECK(out.p00 >= 0.0);
  CHECK(out.p11 >= 0.0);
  CHECK(out.p_success == doctest::Approx(out.p00 + out.p11).epsilon(1e-12));
  CHECK(out.p_success <= 1.0 + 1e-12);
  REQUIRE(out.rho00.has_value());
  REQUIRE(out.rho11.has_value());
  CHECK(std::abs(out.rho00->matrix().trace().real() - 1.0) <= 1e-10);
  CHECK(std::abs(out.rho11->matrix().trace().real() - 1.0) <= 1e-10);
}

TEST_CASE("sampled purification returns the parity-message mixture") {
  const TwoQubitGate ideal = TwoQubitGate::ideal();
  const DensityMatrix w = werner_state(0.8);
  const PairRecord a = record_for(3, 4, w);
  const PairRecord b = record_for(3, 4, w);
  const PurifyOutcome map = purify_map(w, w, ideal);
  const DensityMatrix expect = success_mixture(map);

  auto rng = math::make_stream_engine(17, 1);
  int kept = 0, dropped = 0;
  for (int i = 0; i < 400; ++i) {
    if (auto r = purify(a, b, ideal, rng)) {
      ++kept;
      CHECK(r->purification_round == 1);
      CHECK(r->level == 0);
      CHECK(test::max_abs_diff(r->rho.matrix(), expect.matrix()) <= 1e-10);
    } else {
      ++dropped;
    }
  }
  const double frac = static_cast<double>(kept) / (kept + dropped);
  CHECK(std::abs(frac - map.p_success) <= 0.12);

  const PairRecord other = record_for(4, 5, w);
  CHECK_THROWS_AS(purify(a, other, ideal, rng), ConfigError);
  PairRecord lifted = a;
  lifted.level = 1;
  CHECK_THROWS_AS(purify(a, lifted, ideal, rng), ConfigError);
}

TEST_CASE("ideal swap of perfect pairs returns a perfect joined pair") {
  auto rng = math::make_stream_engine(23, 0);
  const DensityMatrix bell = DensityMatrix::pure(2, bell_ket(BellKind::PsiPlus));
  const PairRecord left = record_for(0, 1, bell);
  const PairRecord right = record_for(1, 2, bell);
  const PairRecord joined = swap(left, right, TwoQubitGate::ideal(), rng);
  CHECK(joined.level == 1);
  CHECK(joined.endpoints[0] == 0);
  CHECK(joined.endpoints[1] == 2);
  CHECK(fidelity_with_pure(joined.rho, bell_ket(BellKind::PsiPlus)) ==
        doctest::Approx(1.0).epsilon(1e-11));
}

TEST_CASE("swap of Werner pairs follows the closed form") {
  auto rng = math::make_stream_engine(29, 0);
  for (double f : {0.6, 0.75, 0.9}) {
    const DensityMatrix w = werner_state(f);
    const PairRecord left = record_for(0, 1, w);
    const PairRecord right = record_for(1, 2, w);
    const PairRecord joined = swap(left, right, TwoQubitGate::ideal(), rng);
    const double p = (4.0 * f - 1.0) / 3.0;
    const double expect = p * p + (1.0 - p * p) / 4.0;
    CHECK(std::abs(fidelity_with_pure(joined.rho, bell_ket(BellKind::PsiPlus)) -
                   expect) <= 1e-9);
    // argument order does not matter
    const PairRecord swapped = swap(right, left, TwoQubitGate::ideal(), rng);
    CHECK(test::max_abs_diff(joined.rho.matrix(), swapped.rho.matrix()) <= 1e-11);
  }
}

TEST_CASE("swap validates the station topology") {
  auto rng = math::make_stream_engine(31, 0);
  const DensityMatrix bell = DensityMatrix::pure(2, bell_ket(BellKind::PsiPlus));
  const PairRecord a = record_for(0, 1, bell);
  const PairRecord apart = record_for(2, 3, bell);
  CHECK_THROWS_AS(swap(a, apart, TwoQubitGate::ideal(), rng), ConfigError);
  const PairRecord same = record_for(0, 1, bell);
  CHECK_THROWS_AS(swap(a, same, TwoQubitGate::ideal(), rng), ConfigError);
  PairRecord lifted = record_for(1, 2, bell);
  lifted.level = 1;
  CHECK_THROWS_AS(swap(a, lifted, TwoQubitGate::ideal(), rng), ConfigError);
}

TEST_CASE("network configuration validation") {
  NetworkConfig cfg;
  cfg.n_segments = 8;
  CHECK(cfg.levels() == 3);
  CHECK(cfg.default_qubits() == 8);
  cfg.validate();

  cfg.n_segments = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.n_segments = 4;
  cfg.qubits_per_station = 3;  // below the protocol requirement
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.qubits_per_station = 0;
  cfg.slot_time_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  NetworkConfig two;
  two.n_segments = 2;
  ProtocolPolicy policy{{0, 0}};
  policy.validate(two);
  const ProtocolPolicy too_short{{0}};
  CHECK_THROWS_AS(too_short.validate(two), ConfigError);
  const ProtocolPolicy negative{{-1, 0}};
  CHECK_THROWS_AS(negative.validate(two), ConfigError);
}

TEST_CASE("single-segment run delivers one pair per slot") {
  NetworkConfig cfg;
  cfg.n_segments = 1;
  cfg.slot_time_s = 50e-6;
  const SimResult r = run_simulation(cfg, ProtocolPolicy{{0}},
                                     WhiteNoise{0.0, 0.0, 1.0}, 5, 7);
  CHECK(r.pairs_delivered == 5);
  CHECK(r.mean_interval_s == doctest::Approx(50e-6).epsilon(1e-12));
  CHECK(r.std_interval_s <= 1e-18);
  CHECK(r.rate_hz == doctest::Approx(20000.0).epsilon(1e-12));
  CHECK(r.final_fidelity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-segment hand trace: swap pipeline delivers every slot after warmup") {
  NetworkConfig cfg;
  cfg.n_segments = 2;
  cfg.slot_time_s = 50e-6;
  const SimResult r = run_simulation(cfg, ProtocolPolicy{{0, 0}},
                                     WhiteNoise{0.0, 0.0, 1.0}, 5, 7);
  // deliveries land at slots 2, 3, 4, 5, 6: intervals {2,1,1,1,1} slots
  CHECK(r.pairs_delivered == 5);
  CHECK(r.mean_interval_s == doctest::Approx(6e-5).epsilon(1e-12));
  CHECK(r.std_interval_s ==
        doctest::Approx(0.4472135954999579 * 5e-5).epsilon(1e-10));
  CHECK(r.rate_hz == doctest::Approx(1.0 / 6e-5).epsilon(1e-12));
  CHECK(r.final_fidelity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("simulated fidelity equals the deterministic recursion") {
  NetworkConfig cfg;
  cfg.n_segments = 2;
  const double eps = 0.1;

  // no purification: a single swap of the two elementary pairs
  const SimResult plain = run_simulation(cfg, ProtocolPolicy{{0, 0}},
                                         WhiteNoise{eps, 0.0, 1.0}, 5, 3);
  const double f0 = 1.0 - 0.75 * eps;
  const double p = (4.0 * f0 - 1.0) / 3.0;
  const double swapped = p * p + (1.0 - p * p) / 4.0;
  CHECK(std::abs(plain.final_fidelity - swapped) <= 1e-9);

  // one purification round at level 0, then the swap; predict by composing
  // the exact maps
  const SimResult purified = run_simulation(cfg, ProtocolPolicy{{1, 0}},
                                            WhiteNoise{eps, 0.0, 1.0}, 5, 3);
  const DensityMatrix w = werner_state(f0);
  const TwoQubitGate ideal = TwoQubitGate::ideal();
  const DensityMatrix kept = success_mixture(purify_map(w, w, ideal));
  auto rng = math::make_stream_engine(1, 1);
  const PairRecord joined = swap(record_for(0, 1, kept), record_for(1, 2, kept),
                                 ideal, rng);
  const double predict = fidelity_with_pure(joined.rho, bell_ket(BellKind::PsiPlus));
  CHECK(std::abs(purified.final_fidelity - predict) <= 1e-9);
  CHECK(purified.final_fidelity > plain.final_fidelity);
}

TEST_CASE("runs are deterministic in the seed") {
  NetworkConfig cfg;
  cfg.n_segments = 4;
  const WhiteNoise noise{0.05, 0.01, 0.5};
  const ProtocolPolicy policy{{1, 0, 0}};
  const SimResult a = run_simulation(cfg, policy, noise, 6, 99);
  const SimResult b = run_simulation(cfg, policy, noise, 6, 99);
  CHECK(a.mean_interval_s == b.mean_interval_s);
  CHECK(a.std_interval_s == b.std_interval_s);
  CHECK(a.final_fidelity == b.final_fidelity);
  CHECK(a.pairs_delivered == b.pairs_delivered);
  const SimResult c = run_simulation(cfg, policy, noise, 6, 100);
  CHECK(a.mean_interval_s != c.mean_interval_s);
}

TEST_CASE("minimum delivery count is enforced") {
  NetworkConfig cfg;
  cfg.n_segments = 2;
  CHECK_THROWS_AS(
      run_simulation(cfg, ProtocolPolicy{{0, 0}}, WhiteNoise{0.0, 0.0, 1.0}, 3, 1),
      ConfigError);
}

TEST_CASE("policy search reaches the target and rejects the unreachable") {
  NetworkConfig cfg;
  cfg.n_segments = 4;
  const WhiteNoise noise{0.1, 0.0, 1.0};
  const ProtocolPolicy policy = policy_for_target(cfg, noise, 0.9);
  policy.validate(cfg);
  const SimResult r = run_simulation(cfg, policy, noise, 5, 2);
  CHECK(r.final_fidelity >= 0.9 - 1e-9);

  // a trivial target needs no purification at all
  const ProtocolPolicy kind = policy_for_target(cfg, WhiteNoise{0.0, 0.0, 1.0}, 0.5);
  for (int rounds : kind.purification_rounds) CHECK(rounds == 0);

  // gates this noisy can never reach 0.99
  CHECK_THROWS_AS(policy_for_target(cfg, WhiteNoise{0.1, 0.5, 1.0}, 0.99),
                  ConfigError);
  CHECK_THROWS_AS(policy_for_target(cfg, noise, 1.5), ConfigError);
}

TEST_CASE("power-law fit recovers exact and perturbed slopes") {
  std::vector<double> x = {0.1, 0.2, 0.4, 0.8};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 2.5));
  const PowerLawFit exact = fit_power_law(x, y);
  CHECK(std::abs(exact.exponent - 2.5) <= 1e-12);
  CHECK(std::abs(exact.intercept - std::log(3.0)) <= 1e-12);
  CHECK(exact.stderr_exponent <= 1e-10);

  std::vector<double> noisy = y;
  noisy[1] *= 1.07;
  noisy[2] *= 0.95;
  const PowerLawFit fit = fit_power_law(x, noisy);
  CHECK(std::abs(fit.exponent - 2.5) <= 0.2);
  CHECK(fit.stderr_exponent > 0.0);

  CHECK_THROWS_AS(fit_power_law({1.0}, {2.0}), ConfigError);
  CHECK_THROWS_AS(fit_power_law({1.0, -2.0}, {2.0, 3.0}), ConfigError);
  CHECK_THROWS_AS(fit_power_law({1.0, 1.0}, {2.0, 3.0}), ConfigError);
}

TEST_CASE("rate study sweeps the generation probability deterministically") {
  NetworkConfig cfg;
  cfg.n_segments = 2;
  const WhiteNoise base{0.05, 0.0, 1.0};
  const std::vector<double> grid = {0.3, 0.5, 0.7, 1.0};
  const ProtocolPolicy policy{{0, 0}};
  const RateStudy study = rate_study(cfg, policy, base, grid, 5, 2, 11, 2);
  REQUIRE(study.rows.size() == 4);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(study.rows[i].ps == grid[i]);
    CHECK(study.rows[i].rate_hz > 0.0);
    CHECK(study.rows[i].final_fidelity > 0.5);
  }
  CHECK(study.rows[3].rate_hz > study.rows[0].rate_hz);
  CHECK(study.fit.exponent > 0.2);
  CHECK(study.fit.exponent < 1.8);

  // worker count must not change the numbers
  const RateStudy serial = rate_study(cfg, policy, base, grid, 5, 2, 11, 1);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(serial.rows[i].rate_hz == study.rows[i].rate_hz);
    CHECK(serial.rows[i].final_fidelity == study.rows[i].final_fidelity);
  }

  CHECK_THROWS_AS(rate_study(cfg, policy, base, {0.5, 0.6}, 5, 2, 11, 1),
                  ConfigError);
}

}  // TEST_SUITE
