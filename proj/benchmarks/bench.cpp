// Part of qbusrep. MIT licensed; see LICENSE.
//
// Microbenchmarks for the hot paths: gate-channel construction and
// application, the post-selection quadrature, purification, and the pulse
// solver at a cheap operating point.

#include <benchmark/benchmark.h>

#include "qbr/cqed.hpp"
#include "qbr/czgate.hpp"
#include "qbr/densmat.hpp"
#include "qbr/entangle.hpp"
#include "qbr/repeater.hpp"

namespace {

namespace ent = qbr::entangle;
namespace cz = qbr::czgate;
namespace cq = qbr::cqed;
namespace rep = qbr::repeater;

void BM_MakeGateChannel(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        cz::make_gate_channel(cz::CZParams::from_gate_condition(0.01, 0.98)));
  }
}
BENCHMARK(BM_MakeGateChannel);

void BM_NoisyCx(benchmark::State& state) {
  const cz::GateChannel ch =
      cz::make_gate_channel(cz::CZParams::from_gate_condition(0.01, 0.98));
  const qbr::DensityMatrix rho = qbr::werner_state(0.85);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cz::noisy_cx(rho, ch, 0, 1));
  }
}
BENCHMARK(BM_NoisyCx);

void BM_PostSelectedState(benchmark::State& state) {
  ent::LinkParams p;
  p.alpha = 164.7;
  p.theta1 = p.theta2 = 0.01;
  p.transmission = 0.67;
  p.pc = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ent::post_selected_state(p));
  }
}
BENCHMARK(BM_PostSelectedState);

void BM_PurifyMapStandard(benchmark::State& state) {
  const qbr::DensityMatrix pair = qbr::werner_state(0.8);
  const rep::TwoQubitGate gate = rep::TwoQubitGate::ideal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rep::purify_map(pair, pair, gate, rep::PreRotation::Standard));
  }
}
BENCHMARK(BM_PurifyMapStandard);

void BM_PurifyMapOptimized(benchmark::State& state) {
  const qbr::DensityMatrix pair = qbr::werner_state(0.8);
  const rep::TwoQubitGate gate = rep::TwoQubitGate::ideal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rep::purify_map(pair, pair, gate, rep::PreRotation::Optimized));
  }
}
BENCHMARK(BM_PurifyMapOptimized);

void BM_SolveBlochIon(benchmark::State& state) {
  const cq::EmitterCavityParams ion = cq::preset_by_name("ion");
  const cq::PulseParams pulse{5.0, 10.0 * ion.tau_total()};
  for (auto _ : state) {
    benchmark::DoNotOptimize(cq::solve_bloch(ion, pulse));
  }
}
BENCHMARK(BM_SolveBlochIon);

void BM_WhiteNoiseSimulation(benchmark::State& state) {
  rep::NetworkConfig cfg;
  cfg.n_segments = 4;
  const rep::WhiteNoise noise{0.05, 0.0, 0.5};
  const rep::ProtocolPolicy policy{{1, 0, 0}};
  std::uint64_t seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rep::run_simulation(cfg, policy, noise, 5, seed++));
  }
}
BENCHMARK(BM_WhiteNoiseSimulation);

}  // namespace
